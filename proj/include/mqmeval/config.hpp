#pragma once

// Run configuration: a flat `key = value` file whose every key can be
// overridden by a command-line flag `--key value`.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mqmeval/corpus.hpp"
#include "mqmeval/error.hpp"
#include "mqmeval/gateway.hpp"
#include "mqmeval/metaeval.hpp"
#include "mqmeval/prompting.hpp"
#include "mqmeval/scoring.hpp"
#include "mqmeval/text.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

struct ConfigKey {
  const char* name;
  const char* default_value;  // nullptr: unset
  const char* help;
};

inline const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> kKeys{
      {"corpus", nullptr, "test corpus (native JSONL or WMT MQM TSV)"},
      {"corpus_format", "native-jsonl", "native-jsonl | wmt-mqm-tsv"},
      {"lp", nullptr, "language pair code for TSV input, e.g. en-de"},
      {"src_lang", nullptr, "source language name override"},
      {"tgt_lang", nullptr, "target language name override"},
      {"reference_system", "refA", "TSV system id that holds the human reference"},
      {"ref_annotations", nullptr, "reference-as-system annotations (native JSONL) for reference filtering"},
      {"ref_threshold", nullptr, "keep segments whose reference MQM score is <= this value"},
      {"n_sources", "0", "number of source sentences to sample (0 keeps all)"},
      {"seed", "0", "sampling seed"},
      {"template", "gemba-sqm", "gemba-sqm | automqm | logprob-chat | logprob-base"},
      {"modes", "T,S-T,R-T,S-R-T", "comma-separated input modes"},
      {"model", nullptr, "model name sent to the endpoint"},
      {"model_kind", "chat", "chat | base"},
      {"endpoint", "http://localhost:8000/v1/chat/completions", "chat-completions URL"},
      {"completions_endpoint", nullptr, "completions URL for logprob scoring (derived when unset)"},
      {"temperature", "0", "decoding temperature"},
      {"max_tokens", "512", "completion token limit"},
      {"api_key_env", "MQMEVAL_API_KEY", "environment variable holding the API key"},
      {"max_in_flight", "4", "concurrent requests"},
      {"replay", "record", "live | record | replay"},
      {"replay_dir", nullptr, "replay store directory"},
      {"price_prompt_per_1k", "0", "price per 1k prompt tokens"},
      {"price_completion_per_1k", "0", "price per 1k completion tokens"},
      {"demo_pool", nullptr, "annotated pool for AutoMQM demonstrations (native JSONL)"},
      {"demo_k", "4", "demonstrations per prompt (0 for zero-shot)"},
      {"demo_seed", "0", "demonstration sampling seed"},
      {"weight_major", "-5", "MQM weight of a major error"},
      {"weight_minor", "-1", "MQM weight of a minor error"},
      {"weight_neutral", "0", "MQM weight of a neutral error"},
      {"weight_non_translation", nullptr, "MQM weight of a non-translation error"},
      {"weight_floor", nullptr, "lower bound of a segment MQM score"},
      {"score_failure", "median", "unparseable scores: median | drop | zero"},
      {"error_failure", "no-error", "unparseable error lists: no-error | drop"},
      {"logprob_normalize", "sum", "sum | mean"},
      {"records", nullptr, "EvalRecord file (defaults to <out_dir>/records.jsonl)"},
      {"sig_target", nullptr, "restrict significance to one statistic: tau | pearson | accuracy"},
      {"n_resamples", "1000", "permutation test resamples"},
      {"alpha", "0.05", "significance level"},
      {"threads", "1", "permutation test threads"},
      {"shapley_scores", nullptr, "explicit mode scores, e.g. T=0.759,S-T=0.876,R-T=0.891,S-R-T=0.876"},
      {"sft_target", "1", "target no-error share of the SFT set (1 disables down-sampling)"},
      {"sft_modes", "S-T,R-T,S-R-T", "modes assigned to SFT samples"},
      {"sft_downsample_lps", nullptr, "comma-separated LPs to down-sample (default all)"},
      {"out_dir", "out", "output directory"},
  };
  return kKeys;
}

/// Raw key/value settings with defaults < file < flags precedence.
class Settings {
 public:
  Settings() {
    for (const auto& k : config_keys())
      if (k.default_value) values_[k.name] = k.default_value;
  }

  static bool known(const std::string& key) {
    for (const auto& k : config_keys())
      if (key == k.name) return true;
    return false;
  }

  void set(const std::string& key, const std::string& value) {
    if (!known(key)) throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Reads `key = value` lines; `#` starts a comment line.
  void load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::string line;
    long n = 0;
    while (std::getline(in, line)) {
      ++n;
      const auto t = text::trim(line);
      if (t.empty() || t.front() == '#') continue;
      const auto eq = t.find('=');
      if (eq == std::string_view::npos)
        throw ConfigError(path.string() + ":" + std::to_string(n) + ": expected key = value");
      const std::string key(text::trim(t.substr(0, eq)));
      try {
        set(key, std::string(text::trim(t.substr(eq + 1))));
      } catch (const ConfigError& e) {
        throw ConfigError(path.string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end() && !it->second.empty()) return it->second;
    return std::nullopt;
  }

  std::string require(const std::string& key) const {
    if (auto v = get(key)) return *v;
    throw ConfigError("missing required setting '" + key + "'");
  }

  double number(const std::string& key) const { return parse_number(key, require(key)); }

  std::optional<double> optional_number(const std::string& key) const {
    if (auto v = get(key)) return parse_number(key, *v);
    return std::nullopt;
  }

  long integer(const std::string& key) const {
    const auto v = require(key);
    try {
      std::size_t used = 0;
      long x = std::stol(v, &used);
      if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("setting '" + key + "' must be an integer, got '" + v + "'");
  }

  std::vector<std::string> list(const std::string& key) const {
    std::vector<std::string> out;
    if (auto v = get(key))
      for (const auto& item : text::split(*v, ','))
        if (auto t = text::trim(item); !t.empty()) out.emplace_back(t);
    return out;
  }

 private:
  static double parse_number(const std::string& key, const std::string& v) {
    try {
      std::size_t used = 0;
      double x = std::stod(v, &used);
      if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("setting '" + key + "' must be a number, got '" + v + "'");
  }

  std::map<std::string, std::string> values_;
};

enum class ScoreFailurePolicy { Median, Drop, Zero };
enum class ErrorFailurePolicy { NoError, Drop };

inline ScoreFailurePolicy parse_score_failure(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "median") return ScoreFailurePolicy::Median;
  if (l == "drop") return ScoreFailurePolicy::Drop;
  if (l == "zero") return ScoreFailurePolicy::Zero;
  throw ConfigError("unknown score_failure policy '" + std::string(s) + "' (median, drop, zero)");
}

inline ErrorFailurePolicy parse_error_failure(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "no-error" || l == "noerror") return ErrorFailurePolicy::NoError;
  if (l == "drop") return ErrorFailurePolicy::Drop;
  throw ConfigError("unknown error_failure policy '" + std::string(s) + "' (no-error, drop)");
}

/// Typed view of the settings.
struct RunConfig {
  std::optional<std::filesystem::path> corpus;
  CorpusFormat corpus_format = CorpusFormat::NativeJsonl;
  std::string lp, src_lang, tgt_lang, reference_system;
  std::optional<std::filesystem::path> ref_annotations;
  std::optional<double> ref_threshold;
  std::size_t n_sources = 0;
  std::uint64_t seed = 0;

  Template template_id = Template::GembaSqm;
  std::vector<InputMode> modes;
  ModelSpec model;
  std::string api_key;
  std::size_t max_in_flight = 4;
  ReplayMode replay = ReplayMode::Record;
  std::optional<std::filesystem::path> replay_dir;
  PriceTable prices;

  std::optional<std::filesystem::path> demo_pool;
  std::size_t demo_k = 4;
  std::uint64_t demo_seed = 0;

  WeightTable weights;
  ScoreFailurePolicy score_failure = ScoreFailurePolicy::Median;
  ErrorFailurePolicy error_failure = ErrorFailurePolicy::NoError;
  LogprobNormalize normalize = LogprobNormalize::Sum;

  std::filesystem::path records;
  std::optional<std::string> sig_target;
  int n_resamples = 1000;
  double alpha = 0.05;
  unsigned threads = 1;
  std::optional<std::string> shapley_scores;

  double sft_target = 1.0;
  std::vector<InputMode> sft_modes;
  std::set<std::string> sft_downsample_lps;

  std::filesystem::path out_dir;
};

namespace detail {

inline std::vector<InputMode> parse_modes(const std::vector<std::string>& items, const char* key) {
  std::vector<InputMode> out;
  for (const auto& s : items) {
    auto m = parse_input_mode(s);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ConfigError(std::string("setting '") + key + "' lists no input modes");
  return out;
}

inline std::uint64_t parse_seed(const Settings& s, const char* key) {
  const long v = s.integer(key);
  if (v < 0) throw ConfigError(std::string("setting '") + key + "' must be non-negative");
  return static_cast<std::uint64_t>(v);
}

inline std::optional<std::filesystem::path> optional_path(const Settings& s, const char* key) {
  if (auto v = s.get(key)) return std::filesystem::path(*v);
  return std::nullopt;
}

}  // namespace detail

inline RunConfig make_run_config(const Settings& s) {
  RunConfig c;
  c.corpus = detail::optional_path(s, "corpus");
  c.corpus_format = parse_corpus_format(s.require("corpus_format"));
  c.lp = s.get("lp").value_or("");
  c.src_lang = s.get("src_lang").value_or("");
  c.tgt_lang = s.get("tgt_lang").value_or("");
  c.reference_system = s.require("reference_system");
  c.ref_annotations = detail::optional_path(s, "ref_annotations");
  c.ref_threshold = s.optional_number("ref_threshold");
  const long n_sources = s.integer("n_sources");
  if (n_sources < 0) throw ConfigError("setting 'n_sources' must be non-negative");
  c.n_sources = static_cast<std::size_t>(n_sources);
  c.seed = detail::parse_seed(s, "seed");

  c.template_id = parse_template(s.require("template"));
  c.modes = detail::parse_modes(s.list("modes"), "modes");
  c.model.name = s.get("model").value_or("");
  c.model.kind = parse_model_kind(s.require("model_kind"));
  c.model.endpoint = s.require("endpoint");
  c.model.completions_endpoint = s.get("completions_endpoint").value_or("");
  c.model.temperature = s.number("temperature");
  if (c.model.temperature < 0) throw ConfigError("setting 'temperature' must be >= 0");
  const long max_tokens = s.integer("max_tokens");
  if (max_tokens <= 0) throw ConfigError("setting 'max_tokens' must be > 0");
  c.model.max_tokens = static_cast<int>(max_tokens);
  if (const char* key = std::getenv(s.require("api_key_env").c_str())) c.api_key = key;
  const long in_flight = s.integer("max_in_flight");
  if (in_flight <= 0) throw ConfigError("setting 'max_in_flight' must be > 0");
  c.max_in_flight = static_cast<std::size_t>(in_flight);
  c.replay = parse_replay_mode(s.require("replay"));
  c.replay_dir = detail::optional_path(s, "replay_dir");
  c.prices.prompt_per_1k = s.number("price_prompt_per_1k");
  c.prices.completion_per_1k = s.number("price_completion_per_1k");
  if (c.prices.prompt_per_1k < 0 || c.prices.completion_per_1k < 0) throw ConfigError("prices must be >= 0");

  c.demo_pool = detail::optional_path(s, "demo_pool");
  const long k = s.integer("demo_k");
  if (k < 0) throw ConfigError("setting 'demo_k' must be >= 0");
  c.demo_k = static_cast<std::size_t>(k);
  c.demo_seed = detail::parse_seed(s, "demo_seed");

  c.weights.major = s.number("weight_major");
  c.weights.minor = s.number("weight_minor");
  c.weights.neutral = s.number("weight_neutral");
  c.weights.non_translation = s.optional_number("weight_non_translation");
  c.weights.floor = s.optional_number("weight_floor");
  c.weights.validate();
  c.score_failure = parse_score_failure(s.require("score_failure"));
  c.error_failure = parse_error_failure(s.require("error_failure"));
  const auto norm = text::ascii_lower(s.require("logprob_normalize"));
  if (norm == "sum") c.normalize = LogprobNormalize::Sum;
  else if (norm == "mean") c.normalize = LogprobNormalize::Mean;
  else throw ConfigError("setting 'logprob_normalize' must be sum or mean");

  c.out_dir = s.require("out_dir");
  c.records = s.get("records").value_or((c.out_dir / "records.jsonl").string());
  c.sig_target = s.get("sig_target");
  if (c.sig_target) parse_sig_target(*c.sig_target);
  const long resamples = s.integer("n_resamples");
  if (resamples < 100) throw ConfigError("setting 'n_resamples' must be >= 100");
  c.n_resamples = static_cast<int>(resamples);
  c.alpha = s.number("alpha");
  if (!(c.alpha > 0 && c.alpha < 1)) throw ConfigError("setting 'alpha' must be in (0, 1)");
  const long threads = s.integer("threads");
  if (threads <= 0) throw ConfigError("setting 'threads' must be > 0");
  c.threads = static_cast<unsigned>(threads);
  c.shapley_scores = s.get("shapley_scores");

  c.sft_target = s.number("sft_target");
  c.sft_modes = detail::parse_modes(s.list("sft_modes"), "sft_modes");
  for (const auto& lp : s.list("sft_downsample_lps")) c.sft_downsample_lps.insert(text::ascii_lower(lp));
  return c;
}

/// Fails unless every path the command will read exists.
inline void require_existing(std::initializer_list<std::pair<const char*, const std::optional<std::filesystem::path>*>> paths) {
  for (const auto& [key, p] : paths) {
    if (!*p) throw ConfigError(std::string("missing required setting '") + key + "'");
    if (!std::filesystem::exists(**p))
      throw ConfigError(std::string("setting '") + key + "': " + (*p)->string() + " does not exist");
  }
}

}  // namespace mqmeval
