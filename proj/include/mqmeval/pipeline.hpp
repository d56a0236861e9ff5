#pragma once

// Command implementations behind the CLI. Each command reads its inputs
// from the run config, writes its outputs under `out_dir`, and returns the
// values it wrote so tests can inspect them.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <sstream>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mqmeval/config.hpp"
#include "mqmeval/corpus.hpp"
#include "mqmeval/error.hpp"
#include "mqmeval/gateway.hpp"
#include "mqmeval/metaeval.hpp"
#include "mqmeval/parsing.hpp"
#include "mqmeval/prompting.hpp"
#include "mqmeval/random.hpp"
#include "mqmeval/report.hpp"
#include "mqmeval/scoring.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval::pipeline {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// "en-de" -> "En-De".
inline std::string display_lp(const std::string& code) {
  std::string out = code;
  bool start = true;
  for (auto& c : out) {
    if (start && c >= 'a' && c <= 'z') c = static_cast<char>(c - 'a' + 'A');
    start = c == '-';
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inputs

inline LoadResult load_test_corpus(const RunConfig& cfg) {
  require_existing({{"corpus", &cfg.corpus}});
  LoadOptions opts;
  opts.format = cfg.corpus_format;
  opts.weights = cfg.weights;
  opts.lp = cfg.lp;
  opts.src_lang = cfg.src_lang;
  opts.tgt_lang = cfg.tgt_lang;
  opts.reference_system = cfg.reference_system;
  return load_corpus(*cfg.corpus, opts);
}

inline Corpus load_native(const std::filesystem::path& path, const WeightTable& weights) {
  LoadOptions opts;
  opts.weights = weights;
  return load_corpus(path, opts).corpus;
}

inline void log_diagnostics(std::ostream& log, const std::vector<std::string>& diagnostics) {
  for (const auto& d : diagnostics) log << "note: " << d << '\n';
}

// ---------------------------------------------------------------------------
// Record files

inline nlohmann::json record_to_json(const EvalRecord& r) {
  nlohmann::json j;
  j["lp"] = r.key.lp;
  j["system"] = r.key.system;
  j["seg_id"] = r.key.seg_id;
  j["mode"] = std::string(to_string(r.mode));
  j["template"] = std::string(to_string(r.template_id));
  j["raw_output"] = r.raw_output;
  if (!r.token_logprobs.empty()) {
    auto arr = nlohmann::json::array();
    for (const auto& t : r.token_logprobs) arr.push_back({t.token, t.logprob});
    j["token_logprobs"] = std::move(arr);
  }
  j["prompt_tokens"] = r.prompt_tokens;
  j["completion_tokens"] = r.completion_tokens;
  return j;
}

inline std::vector<EvalRecord> read_records(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open records file " + path.string());
  std::vector<EvalRecord> out;
  std::string line;
  long n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      EvalRecord r;
      r.key.lp = j.at("lp").get<std::string>();
      r.key.system = j.at("system").get<std::string>();
      r.key.seg_id = j.at("seg_id").get<int>();
      r.mode = parse_input_mode(j.at("mode").get<std::string>());
      r.template_id = parse_template(j.at("template").get<std::string>());
      r.raw_output = j.value("raw_output", "");
      if (auto it = j.find("token_logprobs"); it != j.end() && it->is_array())
        for (const auto& t : *it) r.token_logprobs.push_back({t.at(0).get<std::string>(), t.at(1).get<double>()});
      r.prompt_tokens = j.value("prompt_tokens", 0L);
      r.completion_tokens = j.value("completion_tokens", 0L);
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    } catch (const ConfigError& e) {
      throw DataError(path.string() + ": line " + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

inline void write_records(const std::filesystem::path& path, std::span<const EvalRecord> records) {
  std::string content;
  for (const auto& r : records) content += record_to_json(r).dump() + "\n";
  report::write_file(path, content);
}

// ---------------------------------------------------------------------------
// Prompt rendering at corpus scale

struct PromptItem {
  SegmentKey key;
  RenderedPrompt prompt;
};

/// Demonstrations per language pair, drawn from the configured pool.
inline std::map<std::string, std::vector<Segment>> select_demonstrations(const RunConfig& cfg,
                                                                         const std::set<std::string>& lps) {
  std::map<std::string, std::vector<Segment>> out;
  if (cfg.template_id != Template::AutoMqm || cfg.demo_k == 0) return out;
  require_existing({{"demo_pool", &cfg.demo_pool}});
  const auto pool = load_native(*cfg.demo_pool, cfg.weights);
  for (const auto& lp : lps) {
    std::vector<Segment> same_lp;
    for (const auto& s : pool)
      if (s.lp.code == lp) same_lp.push_back(s);
    if (same_lp.empty()) throw DataError("demonstration pool has no segments for " + lp);
    out[lp] = sample_demonstrations(Corpus(std::move(same_lp)), cfg.demo_k, cfg.demo_seed);
  }
  return out;
}

/// One prompt per (segment, mode), segments in key order, modes in config
/// order.
inline std::vector<PromptItem> render_all(const RunConfig& cfg, const Corpus& corpus) {
  for (auto m : cfg.modes) {
    if (!includes_reference(m)) continue;
    for (const auto& s : corpus)
      if (!s.reference)
        throw DataError("mode " + std::string(to_string(m)) + " needs references but " + to_string(s.key()) +
                        " has none");
  }
  const auto demos = select_demonstrations(cfg, corpus.language_pairs());
  static const std::vector<Segment> kNone;
  std::vector<PromptItem> out;
  out.reserve(corpus.size() * cfg.modes.size());
  for (const auto& s : corpus) {
    const auto it = demos.find(s.lp.code);
    const auto& d = it == demos.end() ? kNone : it->second;
    for (auto m : cfg.modes) out.push_back({s.key(), render_prompt(cfg.template_id, s, m, d)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation core

struct ModePredictions {
  KeyedScores scores;
  AnnotationMap annotations;  // AutoMQM only
  long failed = 0;
  long dropped = 0;
};

struct Evaluation {
  Template template_id = Template::GembaSqm;
  std::vector<InputMode> modes;
  std::map<InputMode, ModePredictions> by_mode;
  KeyedScores gold;
  AnnotationMap gold_annotations;
  std::vector<std::string> lps;
  ParseDiagnostics diagnostics;
  std::vector<ResolvedRecord> resolved;
};

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
}

/// Parses records, applies the failure policies and pairs predictions with
/// gold scores and annotations from the corpus.
inline Evaluation evaluate(const RunConfig& cfg, const Corpus& corpus, std::span<const EvalRecord> records) {
  if (records.empty()) throw DataError("no records to evaluate");
  Evaluation ev;
  ev.template_id = records.front().template_id;
  std::set<std::pair<SegmentKey, InputMode>> seen;
  std::set<InputMode> modes;
  for (const auto& r : records) {
    if (r.template_id != ev.template_id)
      throw DataError("records mix templates " + std::string(to_string(ev.template_id)) + " and " +
                      std::string(to_string(r.template_id)));
    if (!corpus.find(r.key)) throw DataError("record " + to_string(r.key) + " has no segment in the corpus");
    if (!seen.insert({r.key, r.mode}).second)
      throw DataError("duplicate record for " + to_string(r.key) + " mode " + std::string(to_string(r.mode)));
    modes.insert(r.mode);
  }
  for (auto m : kAllModes)
    if (modes.count(m)) ev.modes.push_back(m);

  auto lookup = [&](const SegmentKey& k) -> std::optional<std::string> {
    if (const auto* s = corpus.find(k)) return s->translation;
    return std::nullopt;
  };
  auto [resolved, diag] = resolve_predictions(records, lookup, cfg.normalize);
  ev.diagnostics = diag;
  if (diag.parsed == 0) throw DataError("no record could be parsed");

  std::map<InputMode, std::vector<SegmentKey>> failed;
  for (const auto& r : resolved) {
    const auto& key = r.record.key;
    const Segment& seg = *corpus.find(key);
    auto& mp = ev.by_mode[r.record.mode];
    ev.gold[key] = seg.gold_score;
    ev.gold_annotations[key] = {seg.word_count(), seg.gold_errors};
    if (ev.template_id == Template::AutoMqm) {
      if (!r.ok) {
        ++mp.failed;
        if (cfg.error_failure == ErrorFailurePolicy::Drop) {
          ++mp.dropped;
          continue;
        }
      }
      mp.annotations[key] = {seg.word_count(), r.ok ? r.errors : std::vector<ErrorAnnotation>{}};
      mp.scores[key] = mqm_score(mp.annotations[key].errors, cfg.weights);
    } else if (r.ok) {
      mp.scores[key] = *r.score;
    } else {
      ++mp.failed;
      failed[r.record.mode].push_back(key);
    }
  }
  for (auto& [mode, keys] : failed) {
    auto& mp = ev.by_mode[mode];
    if (cfg.score_failure == ScoreFailurePolicy::Drop) {
      mp.dropped += static_cast<long>(keys.size());
      continue;
    }
    double fill = 0.0;
    if (cfg.score_failure == ScoreFailurePolicy::Median) {
      if (mp.scores.empty())
        throw DataError("mode " + std::string(to_string(mode)) + " has no parseable score to take a median of");
      std::vector<double> v;
      for (const auto& [k, x] : mp.scores) v.push_back(x);
      fill = median(std::move(v));
    }
    for (const auto& k : keys) mp.scores[k] = fill;
  }
  std::set<std::string> lps;
  for (const auto& [k, v] : ev.gold) lps.insert(k.lp);
  ev.lps.assign(lps.begin(), lps.end());
  ev.resolved = std::move(resolved);
  return ev;
}

// ---------------------------------------------------------------------------
// Statistics per column (Acc pooled over LPs; tau and rho per LP)

struct Column {
  std::string label;     // "Acc", "En-De tau", ...
  SigTarget target;
  std::string lp;        // empty for Acc
};

inline std::vector<Column> columns(const Evaluation& ev) {
  std::vector<Column> out{{"Acc", SigTarget::Accuracy, ""}};
  for (const auto& lp : ev.lps) {
    out.push_back({display_lp(lp) + " τ", SigTarget::Tau, lp});
    out.push_back({display_lp(lp) + " ρ", SigTarget::Pearson, lp});
  }
  return out;
}

inline KeyedScores restrict(const KeyedScores& m, const std::string& lp) {
  if (lp.empty()) return m;
  KeyedScores out;
  for (const auto& [k, v] : m)
    if (k.lp == lp) out.emplace(k, v);
  return out;
}

inline KeyedScores restrict_to(const KeyedScores& m, const KeyedScores& keys) {
  KeyedScores out;
  for (const auto& [k, v] : keys)
    if (auto it = m.find(k); it != m.end()) out.emplace(k, it->second);
  return out;
}

inline SystemScores to_system_scores(const KeyedScores& m) {
  std::vector<SegmentScore> v;
  for (const auto& [k, x] : m) v.push_back({k, x, ScoreKind::Mqm});
  return system_scores(v).scores;
}

/// Statistic of `pred` against gold over pred's keys; NaN when undefined.
inline double column_value(const Column& c, const KeyedScores& gold, const KeyedScores& pred) {
  try {
    const auto p = restrict(pred, c.lp);
    if (p.empty()) return kNaN;
    const auto g = restrict_to(gold, p);
    if (c.target == SigTarget::Accuracy) return system_accuracy(to_system_scores(g), to_system_scores(p));
    std::vector<double> gv, pv;
    for (const auto& [k, v] : p) {
      gv.push_back(g.at(k));
      pv.push_back(v);
    }
    return c.target == SigTarget::Tau ? kendall_tau(gv, pv) : pearson(gv, pv);
  } catch (const DataError&) {
    return kNaN;
  }
}

struct SigRow {
  std::string column;
  InputMode best;
  InputMode other;
  SignificanceResult result;
};

struct MetaReport {
  Evaluation evaluation;
  std::map<InputMode, std::vector<double>> values;  // per mode, per column
  std::vector<Column> cols;
  std::vector<SigRow> significance;
  std::map<std::string, InputMode> starred;  // column -> mode significantly best
  report::Table correlation, shapley_table, significance_table, spans, categories, system_table;
  bool has_spans = false;
  bool has_shapley = false;
};

inline std::vector<SigRow> significance_rows(const RunConfig& cfg, const Evaluation& ev,
                                             const std::vector<Column>& cols,
                                             const std::map<InputMode, std::vector<double>>& values,
                                             std::map<std::string, InputMode>& starred, std::ostream& log) {
  std::vector<SigRow> rows;
  if (ev.modes.size() < 2) return rows;
  std::optional<SigTarget> only;
  if (cfg.sig_target) only = parse_sig_target(*cfg.sig_target);
  for (std::size_t c = 0; c < cols.size(); ++c) {
    const auto& col = cols[c];
    if (only && col.target != *only) continue;
    std::optional<InputMode> best;
    bool defined = true;
    for (auto m : ev.modes) {
      const double v = values.at(m)[c];
      if (std::isnan(v)) defined = false;
      else if (!best || v > values.at(*best)[c]) best = m;
    }
    if (!defined || !best) {
      log << "note: significance for " << col.label << " skipped (statistic undefined for some mode)\n";
      continue;
    }
    bool all = true;
    for (auto m : ev.modes) {
      if (m == *best) continue;
      auto a = restrict(ev.by_mode.at(*best).scores, col.lp);
      auto b = restrict(ev.by_mode.at(m).scores, col.lp);
      a = restrict_to(a, b);
      b = restrict_to(b, a);
      const auto g = restrict_to(ev.gold, a);
      PermOptions opt;
      opt.target = col.target;
      opt.n_resamples = cfg.n_resamples;
      opt.alpha = cfg.alpha;
      opt.seed = cfg.seed;
      opt.threads = cfg.threads;
      try {
        rows.push_back({col.label, *best, m, perm_both_test(a, b, g, opt)});
        all = all && rows.back().result.significant;
      } catch (const DataError& e) {
        log << "note: significance " << col.label << " " << to_string(*best) << " vs " << to_string(m)
            << " skipped: " << e.what() << '\n';
        all = false;
      }
    }
    if (all) starred[col.label] = *best;
  }
  return rows;
}

inline MetaReport meta_evaluate(const RunConfig& cfg, const Corpus& corpus, std::span<const EvalRecord> records,
                                std::ostream& log) {
  MetaReport rep;
  rep.evaluation = evaluate(cfg, corpus, records);
  const auto& ev = rep.evaluation;
  rep.cols = columns(ev);
  for (auto m : ev.modes)
    for (const auto& c : rep.cols) rep.values[m].push_back(column_value(c, ev.gold, ev.by_mode.at(m).scores));
  rep.significance = significance_rows(cfg, ev, rep.cols, rep.values, rep.starred, log);

  // Correlations, one row per mode.
  auto& corr = rep.correlation;
  corr.title = "System-level accuracy and segment-level correlations (" + std::string(to_string(ev.template_id)) + ")";
  corr.header = {"Mode"};
  for (const auto& c : rep.cols) corr.header.push_back(c.label);
  for (auto m : ev.modes) {
    std::vector<report::Cell> row{std::string(to_string(m))};
    for (std::size_t c = 0; c < rep.cols.size(); ++c) {
      auto it = rep.starred.find(rep.cols[c].label);
      row.push_back(report::Number{rep.values[m][c], it != rep.starred.end() && it->second == m ? "*" : ""});
    }
    corr.add(std::move(row));
  }

  // Significance detail.
  auto& sig = rep.significance_table;
  sig.title = "PERM-BOTH significance of the best mode";
  sig.header = {"Column", "Best", "Other", "Delta", "p", "Significant"};
  for (const auto& r : rep.significance)
    sig.add({r.column, std::string(to_string(r.best)), std::string(to_string(r.other)),
             report::Number{r.result.statistic, ""}, report::Number{r.result.p_value, ""},
             std::string(r.result.significant ? "yes" : "no")});

  // Shapley attribution, when all four modes are present.
  rep.has_shapley = ev.modes.size() == kAllModes.size();
  auto& sh = rep.shapley_table;
  sh.title = "Shapley values of the source and reference";
  sh.header = {"Statistic", "Source", "Reference", "T", "S-T", "R-T", "S-R-T"};
  if (rep.has_shapley) {
    for (std::size_t c = 0; c < rep.cols.size(); ++c) {
      std::map<InputMode, double> s;
      for (auto m : ev.modes) s[m] = rep.values[m][c];
      const auto r = shapley(s);
      sh.add({rep.cols[c].label, report::Number{r.src, ""}, report::Number{r.ref, ""}, report::Number{r.t, ""},
              report::Number{r.st, ""}, report::Number{r.rt, ""}, report::Number{r.srt, ""}});
    }
  }

  // Span and category tables for error annotations.
  rep.has_spans = ev.template_id == Template::AutoMqm;
  auto& sp = rep.spans;
  sp.title = "Span meta-evaluation";
  sp.header = {"Mode", "SP", "SR", "SF1", "MP", "MR", "MF1", "MCC"};
  auto& cat = rep.categories;
  cat.title = "Category meta-evaluation (P / R / F1)";
  const std::vector<Category> cat_order{Category::Accuracy, Category::Fluency,          Category::Terminology,
                                        Category::Style,    Category::LocaleConvention, Category::NoError,
                                        Category::Other};
  cat.header = {"Mode"};
  for (auto c : cat_order)
    for (const char* part : {" P", " R", " F1"}) cat.header.push_back(std::string(to_string(c)) + part);
  if (rep.has_spans) {
    for (auto m : ev.modes) {
      const auto& pred = ev.by_mode.at(m).annotations;
      AnnotationMap gold;
      for (const auto& [k, a] : pred) gold.emplace(k, ev.gold_annotations.at(k));
      const auto s = span_metrics(gold, pred);
      using report::Number;
      sp.add({std::string(to_string(m)), Number{s.sp, ""}, Number{s.sr, ""}, Number{s.sf1, ""}, Number{s.mp, ""},
              Number{s.mr, ""}, Number{s.mf1, ""}, Number{s.mcc, ""}});
      const auto cm = category_metrics(gold, pred);
      std::vector<report::Cell> row{std::string(to_string(m))};
      for (auto c : cat_order) {
        const auto& x = cm.per_category.at(c);
        row.push_back(Number{x.p, ""});
        row.push_back(Number{x.r, ""});
        row.push_back(Number{x.f1, ""});
      }
      cat.add(std::move(row));
    }
  }

  // System-level scores.
  auto& sys = rep.system_table;
  sys.title = "System-level scores";
  sys.header = {"LP", "System", "Human"};
  for (auto m : ev.modes) sys.header.push_back(std::string(to_string(m)));
  const auto human = to_system_scores(ev.gold);
  std::map<InputMode, SystemScores> per_mode;
  for (auto m : ev.modes) per_mode[m] = to_system_scores(ev.by_mode.at(m).scores);
  for (const auto& [lp, systems] : human)
    for (const auto& [name, h] : systems) {
      std::vector<report::Cell> row{display_lp(lp), name, report::Number{h, ""}};
      for (auto m : ev.modes) {
        double v = kNaN;
        if (auto a = per_mode[m].find(lp); a != per_mode[m].end())
          if (auto b = a->second.find(name); b != a->second.end()) v = b->second;
        row.push_back(report::Number{v, ""});
      }
      sys.add(std::move(row));
    }
  return rep;
}

// ---------------------------------------------------------------------------
// Usage

inline report::Table usage_table(std::span<const EvalRecord> records, const PriceTable& prices) {
  std::vector<UsageEntry> entries;
  for (const auto& r : records)
    entries.push_back({r.template_id, r.mode, r.key.lp, r.prompt_tokens, r.completion_tokens});
  report::Table t;
  t.title = "Token usage";
  t.header = {"Prompt", "Input Mode", "LP", "Samples", "Tokens", "Cost"};
  for (const auto& row : usage_report(entries, prices))
    t.add({std::string(to_string(row.template_id)), row.mode ? std::string(to_string(*row.mode)) : std::string("Total"),
           row.lp.empty() ? std::string() : display_lp(row.lp), row.samples, row.tokens,
           report::Number{row.cost, ""}});
  return t;
}

// ---------------------------------------------------------------------------
// Commands

struct IngestResult {
  LoadResult loaded;
};

inline IngestResult cmd_ingest(const RunConfig& cfg, std::ostream& log) {
  IngestResult r{load_test_corpus(cfg)};
  log_diagnostics(log, r.loaded.diagnostics);
  std::ostringstream corpus, refs;
  write_corpus_jsonl(r.loaded.corpus, corpus);
  report::write_file(cfg.out_dir / "corpus.jsonl", corpus.str());
  if (!r.loaded.reference_annotations.empty()) {
    write_corpus_jsonl(r.loaded.reference_annotations, refs);
    report::write_file(cfg.out_dir / "reference_annotations.jsonl", refs.str());
  }
  log << "ingested " << r.loaded.corpus.size() << " segments";
  if (!r.loaded.reference_annotations.empty())
    log << " and " << r.loaded.reference_annotations.size() << " reference annotations";
  log << '\n';
  return r;
}

struct SampleResult {
  Corpus test;
  std::map<std::string, std::vector<Segment>> demos;
};

inline SampleResult cmd_sample(const RunConfig& cfg, std::ostream& log) {
  auto loaded = load_test_corpus(cfg);
  log_diagnostics(log, loaded.diagnostics);
  Corpus corpus = std::move(loaded.corpus);
  if (cfg.ref_threshold) {
    Corpus refs = loaded.reference_annotations;
    if (cfg.ref_annotations) {
      require_existing({{"ref_annotations", &cfg.ref_annotations}});
      refs = load_native(*cfg.ref_annotations, cfg.weights);
    }
    if (refs.empty()) throw ConfigError("ref_threshold needs reference annotations (ref_annotations or TSV refA rows)");
    auto f = filter_low_quality_ref(corpus, refs, *cfg.ref_threshold);
    log_diagnostics(log, f.diagnostics);
    log << "reference filter kept " << f.corpus.size() << " of " << corpus.size() << " segments\n";
    corpus = std::move(f.corpus);
  }
  SampleResult r;
  r.test = cfg.n_sources ? sample_test_subset(corpus, cfg.n_sources, cfg.seed) : corpus;
  std::ostringstream out;
  write_corpus_jsonl(r.test, out);
  report::write_file(cfg.out_dir / "test.jsonl", out.str());
  if (cfg.demo_pool && cfg.template_id == Template::AutoMqm && cfg.demo_k > 0) {
    r.demos = select_demonstrations(cfg, r.test.language_pairs());
    std::string demos;
    for (const auto& [lp, list] : r.demos)
      for (const auto& s : list) demos += segment_to_json(s).dump() + "\n";
    report::write_file(cfg.out_dir / "demos.jsonl", demos);
  }
  log << "sampled " << r.test.size() << " segments\n";
  return r;
}

inline std::vector<PromptItem> cmd_prompt(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  log_diagnostics(log, loaded.diagnostics);
  auto items = render_all(cfg, loaded.corpus);
  std::string content;
  for (const auto& it : items) {
    nlohmann::json j;
    j["lp"] = it.key.lp;
    j["system"] = it.key.system;
    j["seg_id"] = it.key.seg_id;
    j["mode"] = std::string(to_string(it.prompt.mode));
    j["template"] = std::string(to_string(it.prompt.template_id));
    j["demo_count"] = it.prompt.demo_count;
    j["prompt"] = it.prompt.text;
    if (it.prompt.continuation) j["continuation"] = *it.prompt.continuation;
    content += j.dump() + "\n";
  }
  report::write_file(cfg.out_dir / "prompts.jsonl", content);
  log << "rendered " << items.size() << " prompts\n";
  return items;
}

struct RunResult {
  std::vector<EvalRecord> records;
  Usage usage;
  long network_calls = 0;
  report::Table usage_table;
};

inline RunResult cmd_run(const RunConfig& cfg, std::ostream& log, std::shared_ptr<Transport> transport = nullptr) {
  const auto loaded = load_test_corpus(cfg);
  log_diagnostics(log, loaded.diagnostics);
  const auto items = render_all(cfg, loaded.corpus);
  if (cfg.model.name.empty()) throw ConfigError("missing required setting 'model'");
  std::shared_ptr<ReplayStore> store;
  if (cfg.replay_dir) store = std::make_shared<ReplayStore>(*cfg.replay_dir);
  else if (cfg.replay != ReplayMode::Live) throw ConfigError("replay mode needs setting 'replay_dir'");
  if (cfg.replay == ReplayMode::Replay && !std::filesystem::is_directory(*cfg.replay_dir))
    throw ConfigError("setting 'replay_dir': " + cfg.replay_dir->string() + " does not exist");
  if (!transport) transport = std::make_shared<HttpTransport>();
  Gateway::Options opts;
  opts.mode = cfg.replay;
  opts.api_key = cfg.api_key;
  opts.max_in_flight = cfg.max_in_flight;
  Gateway gateway(transport, store, opts);

  std::vector<RenderedPrompt> prompts;
  for (const auto& it : items) prompts.push_back(it.prompt);
  RunResult r;
  r.records.resize(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    r.records[i].key = items[i].key;
    r.records[i].mode = items[i].prompt.mode;
    r.records[i].template_id = items[i].prompt.template_id;
  }
  if (is_logprob(cfg.template_id)) {
    const auto scored = gateway.score_batch(cfg.model, prompts);
    for (std::size_t i = 0; i < scored.size(); ++i) {
      r.records[i].token_logprobs = scored[i].tokens;
      r.records[i].prompt_tokens = scored[i].usage.prompt_tokens;
      r.records[i].completion_tokens = scored[i].usage.completion_tokens;
    }
  } else {
    const auto done = gateway.complete_batch(cfg.model, prompts);
    for (std::size_t i = 0; i < done.size(); ++i) {
      r.records[i].raw_output = done[i].text;
      r.records[i].prompt_tokens = done[i].usage.prompt_tokens;
      r.records[i].completion_tokens = done[i].usage.completion_tokens;
    }
  }
  r.usage = gateway.usage();
  r.network_calls = gateway.network_calls();
  write_records(cfg.out_dir / "records.jsonl", r.records);
  r.usage_table = usage_table(r.records, cfg.prices);
  report::write_table(cfg.out_dir, "usage", r.usage_table);
  log << "ran " << r.records.size() << " requests (" << r.network_calls << " network calls)\n";
  return r;
}

inline std::vector<EvalRecord> load_records(const RunConfig& cfg) {
  if (!std::filesystem::exists(cfg.records))
    throw ConfigError("setting 'records': " + cfg.records.string() + " does not exist");
  return read_records(cfg.records);
}

inline Evaluation cmd_parse(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  const auto records = load_records(cfg);
  auto ev = evaluate(cfg, loaded.corpus, records);
  std::string content;
  for (const auto& r : ev.resolved) {
    nlohmann::json j;
    j["lp"] = r.record.key.lp;
    j["system"] = r.record.key.system;
    j["seg_id"] = r.record.key.seg_id;
    j["mode"] = std::string(to_string(r.record.mode));
    j["template"] = std::string(to_string(r.record.template_id));
    j["ok"] = r.ok;
    j["score"] = r.score ? nlohmann::json(*r.score) : nlohmann::json(nullptr);
    j["errors"] = detail::errors_to_json(r.errors);
    j["notes"] = r.notes;
    content += j.dump() + "\n";
  }
  report::write_file(cfg.out_dir / "parsed.jsonl", content);
  const auto& d = ev.diagnostics;
  log << "parsed " << d.parsed << "/" << d.total << " records, " << d.failed << " failed, " << d.unaligned_spans
      << " unaligned spans\n";
  return ev;
}

inline Evaluation cmd_score(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  const auto records = load_records(cfg);
  auto ev = evaluate(cfg, loaded.corpus, records);
  report::Table seg;
  seg.title = "Segment scores";
  seg.header = {"LP", "System", "Segment", "Human"};
  for (auto m : ev.modes) seg.header.push_back(std::string(to_string(m)));
  for (const auto& [k, g] : ev.gold) {
    std::vector<report::Cell> row{k.lp, k.system, static_cast<long>(k.seg_id), report::Number{g, ""}};
    for (auto m : ev.modes) {
      const auto& s = ev.by_mode.at(m).scores;
      auto it = s.find(k);
      row.push_back(report::Number{it == s.end() ? kNaN : it->second, ""});
    }
    seg.add(std::move(row));
  }
  report::write_file(cfg.out_dir / "segment_scores.tsv", report::to_tsv(seg));
  for (auto m : ev.modes) {
    const auto& mp = ev.by_mode.at(m);
    log << to_string(m) << ": " << mp.scores.size() << " scores, " << mp.failed << " parse failures, " << mp.dropped
        << " dropped\n";
  }
  return ev;
}

inline void write_meta_tables(const RunConfig& cfg, const MetaReport& rep) {
  report::write_table(cfg.out_dir, "correlation", rep.correlation);
  report::write_table(cfg.out_dir, "significance", rep.significance_table);
  report::write_table(cfg.out_dir, "system_scores", rep.system_table);
  if (rep.has_shapley) report::write_table(cfg.out_dir, "shapley", rep.shapley_table);
  if (rep.has_spans) {
    report::write_table(cfg.out_dir, "spans", rep.spans);
    report::write_table(cfg.out_dir, "categories", rep.categories);
  }
}

inline MetaReport cmd_metaeval(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  const auto records = load_records(cfg);
  auto rep = meta_evaluate(cfg, loaded.corpus, records, log);
  write_meta_tables(cfg, rep);
  log << report::to_markdown(rep.correlation);
  return rep;
}

/// Parses "T=0.759,S-T=0.876,R-T=0.891,S-R-T=0.876".
inline std::map<InputMode, double> parse_mode_scores(const std::string& s) {
  std::map<InputMode, double> out;
  for (const auto& item : text::split(s, ',')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("shapley_scores entry '" + item + "' is not MODE=value");
    const auto mode = parse_input_mode(item.substr(0, eq));
    const std::string v(text::trim(item.substr(eq + 1)));
    try {
      std::size_t used = 0;
      out[mode] = std::stod(v, &used);
      if (used != v.size()) throw std::invalid_argument(v);
    } catch (const std::exception&) {
      throw ConfigError("shapley_scores value '" + v + "' is not a number");
    }
  }
  return out;
}

inline report::Table cmd_shapley(const RunConfig& cfg, std::ostream& log) {
  report::Table t;
  if (cfg.shapley_scores) {
    const auto scores = parse_mode_scores(*cfg.shapley_scores);
    for (auto m : kAllModes)
      if (!scores.count(m)) throw ConfigError("shapley_scores lacks mode " + std::string(to_string(m)));
    const auto r = shapley(scores);
    t.title = "Shapley values of the source and reference";
    t.header = {"Statistic", "Source", "Reference", "T", "S-T", "R-T", "S-R-T"};
    using report::Number;
    t.add({std::string("given"), Number{r.src, ""}, Number{r.ref, ""}, Number{r.t, ""}, Number{r.st, ""},
           Number{r.rt, ""}, Number{r.srt, ""}});
  } else {
    const auto loaded = load_test_corpus(cfg);
    const auto records = load_records(cfg);
    auto ev = evaluate(cfg, loaded.corpus, records);
    if (ev.modes.size() != kAllModes.size())
      throw DataError("Shapley values need records for all four input modes");
    auto cols = columns(ev);
    t.title = "Shapley values of the source and reference";
    t.header = {"Statistic", "Source", "Reference", "T", "S-T", "R-T", "S-R-T"};
    for (const auto& c : cols) {
      std::map<InputMode, double> s;
      for (auto m : ev.modes) s[m] = column_value(c, ev.gold, ev.by_mode.at(m).scores);
      const auto r = shapley(s);
      using report::Number;
      t.add({c.label, Number{r.src, ""}, Number{r.ref, ""}, Number{r.t, ""}, Number{r.st, ""}, Number{r.rt, ""},
             Number{r.srt, ""}});
    }
  }
  report::write_table(cfg.out_dir, "shapley", t);
  log << report::to_markdown(t);
  return t;
}

inline report::Table cmd_sigtest(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  const auto records = load_records(cfg);
  auto rep = meta_evaluate(cfg, loaded.corpus, records, log);
  report::write_table(cfg.out_dir, "significance", rep.significance_table);
  log << report::to_markdown(rep.significance_table);
  return rep.significance_table;
}

struct SftResult {
  SftDataset data;
  report::Table stats;
};

inline SftResult cmd_sft_build(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  log_diagnostics(log, loaded.diagnostics);
  SftOptions opts;
  opts.seed = cfg.seed;
  opts.no_error_target = cfg.sft_target;
  opts.modes = cfg.sft_modes;
  opts.downsample_lps = cfg.sft_downsample_lps;
  SftResult r{build_sft_dataset(loaded.corpus, opts), {}};
  std::ostringstream out;
  write_sft_jsonl(r.data, out);
  report::write_file(cfg.out_dir / "sft.jsonl", out.str());
  auto& t = r.stats;
  t.title = "Training set statistics";
  t.header = {"Direction"};
  for (auto m : cfg.sft_modes) t.header.push_back("#" + std::string(to_string(m)));
  t.header.push_back("Total");
  t.header.push_back("No-error%");
  auto row = [&](const std::string& name, const SftLpStats& s) {
    std::vector<report::Cell> cells{name};
    for (auto m : cfg.sft_modes) cells.push_back(s.per_mode.count(m) ? s.per_mode.at(m) : 0L);
    cells.push_back(s.total);
    cells.push_back(report::Number{100.0 * s.no_error_rate(), ""});
    t.add(std::move(cells));
  };
  for (const auto& [lp, s] : r.data.stats.per_lp) row(display_lp(lp), s);
  if (r.data.stats.per_lp.size() > 1) row("All", r.data.stats.overall);
  report::write_table(cfg.out_dir, "sft_stats", t);
  log << report::to_markdown(t);
  return r;
}

inline report::Table cmd_ced_eval(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  const auto records = load_records(cfg);
  auto ev = evaluate(cfg, loaded.corpus, records);
  if (ev.template_id != Template::AutoMqm) throw DataError("critical error evaluation needs automqm records");
  report::Table t;
  t.title = "Critical error detection";
  t.header = {"Mode", "SP", "SR", "SF1", "Acc", "Detected", "Segments"};
  for (auto m : ev.modes) {
    const auto& pred = ev.by_mode.at(m).annotations;
    AnnotationMap gold;
    for (const auto& [k, a] : pred) gold.emplace(k, ev.gold_annotations.at(k));
    const auto r = critical_error_eval(gold, pred);
    using report::Number;
    t.add({std::string(to_string(m)), Number{r.sp, ""}, Number{r.sr, ""}, Number{r.sf1, ""}, Number{r.accuracy, ""},
           r.detected, r.segments});
  }
  report::write_table(cfg.out_dir, "ced", t);
  log << report::to_markdown(t);
  return t;
}

/// The full report suite: every meta-evaluation table plus token usage,
/// also concatenated into report.md.
inline MetaReport cmd_report(const RunConfig& cfg, std::ostream& log) {
  const auto loaded = load_test_corpus(cfg);
  const auto records = load_records(cfg);
  auto rep = meta_evaluate(cfg, loaded.corpus, records, log);
  write_meta_tables(cfg, rep);
  const auto usage = usage_table(records, cfg.prices);
  report::write_table(cfg.out_dir, "usage", usage);
  std::string md = "# Meta-evaluation report\n\n";
  md += report::to_markdown(rep.correlation) + "\n";
  if (rep.has_shapley) md += report::to_markdown(rep.shapley_table) + "\n";
  md += report::to_markdown(rep.significance_table) + "\n";
  if (rep.has_spans) {
    md += report::to_markdown(rep.spans) + "\n";
    md += report::to_markdown(rep.categories) + "\n";
  }
  md += report::to_markdown(rep.system_table) + "\n";
  md += report::to_markdown(usage);
  report::write_file(cfg.out_dir / "report.md", md);
  const auto& d = rep.evaluation.diagnostics;
  log << "report written to " << (cfg.out_dir / "report.md").string() << " (" << d.parsed << "/" << d.total
      << " records parsed)\n";
  return rep;
}

}  // namespace mqmeval::pipeline
