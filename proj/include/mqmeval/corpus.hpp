#pragma once

// MQM-annotated corpora: loading (native JSONL, WMT MQM TSV), writing,
// test-set and demonstration sampling, reference-quality filtering and
// instruction-tuning dataset construction.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mqmeval/error.hpp"
#include "mqmeval/parsing.hpp"
#include "mqmeval/prompting.hpp"
#include "mqmeval/random.hpp"
#include "mqmeval/scoring.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

/// Gold score of a segment: mean MQM score over raters (the first rater's
/// annotations are `gold_errors`, the rest `other_rater_errors`).
inline double gold_mqm_score(const Segment& seg, const std::vector<std::vector<ErrorAnnotation>>& others,
                             const WeightTable& weights) {
  double sum = mqm_score(seg.gold_errors, weights);
  for (const auto& rater : others) sum += mqm_score(rater, weights);
  return sum / static_cast<double>(1 + others.size());
}

/// Immutable, key-sorted set of segments. Duplicate keys keep the first
/// occurrence.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<Segment> segments, std::vector<std::string>* diagnostics = nullptr) {
    std::set<SegmentKey> seen;
    segments_.reserve(segments.size());
    for (auto& s : segments) {
      auto key = s.key();
      if (!seen.insert(key).second) {
        if (diagnostics) diagnostics->push_back("duplicate segment " + to_string(key) + " ignored");
        continue;
      }
      segments_.push_back(std::move(s));
    }
    std::stable_sort(segments_.begin(), segments_.end(),
                     [](const Segment& a, const Segment& b) { return a.key() < b.key(); });
  }

  const std::vector<Segment>& segments() const { return segments_; }
  auto begin() const { return segments_.begin(); }
  auto end() const { return segments_.end(); }
  std::size_t size() const { return segments_.size(); }
  bool empty() const { return segments_.empty(); }

  const Segment* find(const SegmentKey& key) const {
    auto it = std::lower_bound(segments_.begin(), segments_.end(), key,
                               [](const Segment& s, const SegmentKey& k) { return s.key() < k; });
    return (it != segments_.end() && it->key() == key) ? &*it : nullptr;
  }

  std::vector<SourceKey> sources() const {
    std::set<SourceKey> all;
    for (const auto& s : segments_) all.insert(s.source_key());
    return {all.begin(), all.end()};
  }

  std::set<SegmentKey> keys() const {
    std::set<SegmentKey> all;
    for (const auto& s : segments_) all.insert(s.key());
    return all;
  }

  std::set<std::string> language_pairs() const {
    std::set<std::string> all;
    for (const auto& s : segments_) all.insert(s.lp.code);
    return all;
  }

 private:
  std::vector<Segment> segments_;
};

// ---------------------------------------------------------------------------
// Loading

enum class CorpusFormat { NativeJsonl, WmtMqmTsv };

inline CorpusFormat parse_corpus_format(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "native-jsonl" || l == "jsonl") return CorpusFormat::NativeJsonl;
  if (l == "wmt-mqm-tsv" || l == "tsv") return CorpusFormat::WmtMqmTsv;
  throw ConfigError("unknown corpus format '" + std::string(s) + "'");
}

struct LoadOptions {
  CorpusFormat format = CorpusFormat::NativeJsonl;
  WeightTable weights;
  /// Language pair code for TSV input, which carries none.
  std::string lp;
  std::string src_lang;
  std::string tgt_lang;
  /// TSV pseudo-system whose rows hold the human reference and its ratings.
  std::string reference_system = "refA";
};

struct LoadResult {
  Corpus corpus;
  /// Reference-as-system segments (TSV input only).
  Corpus reference_annotations;
  std::vector<std::string> diagnostics;
};

namespace detail {

inline std::vector<int> words_overlapping(std::string_view text, std::size_t begin, std::size_t end) {
  std::vector<int> out;
  const auto words = text::tokenize(text);
  for (std::size_t i = 0; i < words.size(); ++i)
    if (words[i].begin < end && begin < words[i].end) out.push_back(static_cast<int>(i) + 1);
  return out;
}

inline std::string line_prefix(long line) { return "line " + std::to_string(line) + ": "; }

inline const nlohmann::json& require(const nlohmann::json& row, const char* field, long line) {
  auto it = row.find(field);
  if (it == row.end()) throw DataError(line_prefix(line) + "missing field '" + field + "'");
  return *it;
}

inline std::string require_string(const nlohmann::json& row, const char* field, long line) {
  const auto& v = require(row, field, line);
  if (!v.is_string()) throw DataError(line_prefix(line) + "field '" + field + "' must be a string");
  return v.get<std::string>();
}

inline ErrorAnnotation error_from_json(const nlohmann::json& e, const std::string& translation, long line,
                                       std::vector<std::string>& diagnostics) {
  if (!e.is_object()) throw DataError(line_prefix(line) + "field 'errors' entries must be objects");
  ErrorAnnotation out;
  const auto sev = require_string(e, "severity", line);
  auto parsed = severity_from_string(sev);
  if (!parsed) throw DataError(line_prefix(line) + "field 'severity': unknown severity '" + sev + "'");
  out.severity = *parsed;
  out.category = CategoryLabel::from_raw(e.contains("category") && e["category"].is_string()
                                             ? e["category"].get<std::string>()
                                             : std::string("other"));
  out.span_text = e.contains("span") && e["span"].is_string() ? e["span"].get<std::string>() : std::string();
  const int wc = text::word_count(translation);
  if (auto ws = e.find("word_span"); ws != e.end() && !ws->is_null()) {
    if (!ws->is_array()) throw DataError(line_prefix(line) + "field 'word_span' must be an array");
    for (const auto& i : *ws) {
      if (!i.is_number_integer() || i.get<int>() < 1 || i.get<int>() > wc)
        throw DataError(line_prefix(line) + "field 'word_span' index out of range");
      out.word_span.push_back(i.get<int>());
    }
    std::sort(out.word_span.begin(), out.word_span.end());
    out.word_span.erase(std::unique(out.word_span.begin(), out.word_span.end()), out.word_span.end());
  } else {
    auto a = align_span(translation, out.span_text);
    out.word_span = std::move(a.words);
    if (!out.aligned())
      diagnostics.push_back(line_prefix(line) + "span '" + out.span_text + "' unaligned: " + a.diagnostic);
  }
  return out;
}

inline std::vector<ErrorAnnotation> errors_from_json(const nlohmann::json& list, const std::string& translation,
                                                     long line, std::vector<std::string>& diagnostics) {
  if (!list.is_array()) throw DataError(line_prefix(line) + "field 'errors' must be an array");
  std::vector<ErrorAnnotation> out;
  for (const auto& e : list) {
    auto err = error_from_json(e, translation, line, diagnostics);
    if (err.category.canonical == Category::NoError) continue;
    out.push_back(std::move(err));
  }
  return out;
}

}  // namespace detail

/// Native JSONL: one object per line with fields lp, system, doc, seg_id,
/// source, reference (string or null/absent), translation and
/// errors[{severity, category, span[, word_span]}]. Optional: src_lang,
/// tgt_lang, other_raters (list of further error lists).
inline LoadResult load_native_jsonl(std::istream& in, const LoadOptions& options = {}) {
  LoadResult result;
  std::vector<Segment> segments;
  std::vector<std::vector<std::vector<ErrorAnnotation>>> others;
  std::string line;
  long line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (text::trim(line).empty()) continue;
    nlohmann::json row;
    try {
      row = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(detail::line_prefix(line_no) + "invalid JSON: " + e.what());
    }
    if (!row.is_object()) throw DataError(detail::line_prefix(line_no) + "record must be an object");
    Segment s;
    std::string src_lang = row.value("src_lang", options.src_lang);
    std::string tgt_lang = row.value("tgt_lang", options.tgt_lang);
    try {
      s.lp = LanguagePair::from_code(detail::require_string(row, "lp", line_no), src_lang, tgt_lang);
    } catch (const DataError& e) {
      if (std::string(e.what()).rfind("line ", 0) == 0) throw;
      throw DataError(detail::line_prefix(line_no) + "field 'lp': " + e.what());
    }
    s.system_id = detail::require_string(row, "system", line_no);
    s.doc_id = row.contains("doc") && row["doc"].is_string() ? row["doc"].get<std::string>() : std::string();
    const auto& seg_id = detail::require(row, "seg_id", line_no);
    if (!seg_id.is_number_integer() || seg_id.get<long>() < 0)
      throw DataError(detail::line_prefix(line_no) + "field 'seg_id' must be a non-negative integer");
    s.seg_id = seg_id.get<int>();
    s.source = detail::require_string(row, "source", line_no);
    if (auto r = row.find("reference"); r != row.end() && !r->is_null()) {
      if (!r->is_string()) throw DataError(detail::line_prefix(line_no) + "field 'reference' must be a string");
      s.reference = r->get<std::string>();
    }
    s.translation = detail::require_string(row, "translation", line_no);
    if (text::trim(s.translation).empty())
      throw DataError(detail::line_prefix(line_no) + "field 'translation' is empty");
    if (auto e = row.find("errors"); e != row.end())
      s.gold_errors = detail::errors_from_json(*e, s.translation, line_no, result.diagnostics);
    std::vector<std::vector<ErrorAnnotation>> rater_errors;
    if (auto o = row.find("other_raters"); o != row.end()) {
      if (!o->is_array()) throw DataError(detail::line_prefix(line_no) + "field 'other_raters' must be an array");
      for (const auto& r : *o) rater_errors.push_back(detail::errors_from_json(r, s.translation, line_no, result.diagnostics));
    }
    s.gold_score = gold_mqm_score(s, rater_errors, options.weights);
    s.other_rater_errors = std::move(rater_errors);
    segments.push_back(std::move(s));
  }
  result.corpus = Corpus(std::move(segments), &result.diagnostics);
  return result;
}

namespace detail {

struct MarkedText {
  std::string clean;
  std::optional<std::pair<std::size_t, std::size_t>> span;  // byte range in `clean`
};

inline MarkedText strip_markers(std::string_view s) {
  MarkedText out;
  std::size_t pos = 0;
  while (pos < s.size()) {
    if (s.compare(pos, 3, "<v>") == 0) {
      if (!out.span) out.span = std::make_pair(out.clean.size(), out.clean.size());
      pos += 3;
    } else if (s.compare(pos, 4, "</v>") == 0) {
      if (out.span && out.span->second == out.span->first) out.span->second = out.clean.size();
      pos += 4;
    } else {
      out.clean.push_back(s[pos++]);
    }
  }
  return out;
}

struct TsvGroup {
  long first_line = 0;
  std::string system;
  std::string doc;
  int seg_id = 0;
  std::string source;
  std::string translation;
  std::vector<std::string> rater_order;
  std::map<std::string, std::vector<ErrorAnnotation>> by_rater;
};

}  // namespace detail

/// WMT MQM TSV: header row naming the columns system, doc, doc_id, seg_id,
/// rater, source, target, category, severity; one row per (rater, error)
/// with the error span marked by <v>…</v> in the target (or the source, for
/// omissions).
inline LoadResult load_wmt_mqm_tsv(std::istream& in, const LoadOptions& options) {
  if (options.lp.empty()) throw ConfigError("TSV input needs a language pair (lp)");
  const auto lp = LanguagePair::from_code(options.lp, options.src_lang, options.tgt_lang);
  LoadResult result;
  std::string line;
  long line_no = 0;
  std::map<std::string, std::size_t> col;
  static const char* kColumns[] = {"system", "doc", "doc_id", "seg_id", "rater",
                                   "source", "target", "category", "severity"};
  std::map<std::pair<std::string, int>, detail::TsvGroup> groups;
  std::vector<std::pair<std::string, int>> group_order;

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (col.empty()) {
      if (text::trim(line).empty()) continue;
      const auto names = text::split(line, '\t');
      for (std::size_t i = 0; i < names.size(); ++i) col[text::ascii_lower(text::trim(names[i]))] = i;
      for (const char* c : kColumns)
        if (!col.count(c)) throw DataError(detail::line_prefix(line_no) + "header lacks column '" + c + "'");
      continue;
    }
    if (text::trim(line).empty()) continue;
    const auto cells = text::split(line, '\t');
    auto cell = [&](const char* name) -> const std::string& {
      const auto idx = col.at(name);
      if (idx >= cells.size())
        throw DataError(detail::line_prefix(line_no) + "missing field '" + name + "' (" +
                        std::to_string(cells.size()) + " columns)");
      return cells[idx];
    };
    const std::string system(text::trim(cell("system")));
    int seg_id = 0;
    {
      const std::string raw(text::trim(cell("seg_id")));
      char* end = nullptr;
      const long v = raw.empty() ? -1 : std::strtol(raw.c_str(), &end, 10);
      if (raw.empty() || *end != '\0' || v < 0)
        throw DataError(detail::line_prefix(line_no) + "field 'seg_id' is not a non-negative integer: '" + raw + "'");
      seg_id = static_cast<int>(v);
    }
    const auto severity_raw = text::ascii_lower(text::trim(cell("severity")));
    const auto category = CategoryLabel::from_raw(cell("category"));
    auto target = detail::strip_markers(cell("target"));
    auto source = detail::strip_markers(cell("source"));
    if (text::trim(target.clean).empty())
      throw DataError(detail::line_prefix(line_no) + "field 'target' is empty");

    const auto gkey = std::make_pair(system, seg_id);
    auto [it, inserted] = groups.try_emplace(gkey);
    auto& g = it->second;
    if (inserted) {
      g.first_line = line_no;
      g.system = system;
      g.doc = std::string(text::trim(cell("doc")));
      g.seg_id = seg_id;
      g.source = source.clean;
      g.translation = target.clean;
      group_order.push_back(gkey);
    }
    const std::string rater(text::trim(cell("rater")));
    if (!g.by_rater.count(rater)) {
      g.rater_order.push_back(rater);
      g.by_rater[rater];
    }

    const bool no_error = severity_raw == "no-error" || severity_raw == "no error" ||
                          category.canonical == Category::NoError;
    if (no_error) continue;
    auto severity = severity_from_string(severity_raw);
    if (!severity)
      throw DataError(detail::line_prefix(line_no) + "field 'severity': unknown severity '" + severity_raw + "'");

    ErrorAnnotation e;
    e.severity = *severity;
    e.category = category;
    if (target.span && target.clean == g.translation) {
      e.span_text = target.clean.substr(target.span->first, target.span->second - target.span->first);
      if (!e.span_text.empty()) e.word_span = detail::words_overlapping(g.translation, target.span->first, target.span->second);
    } else if (target.span) {
      e.span_text = target.clean.substr(target.span->first, target.span->second - target.span->first);
      e.word_span = align_span(g.translation, e.span_text).words;
    } else if (source.span) {
      e.span_text = source.clean.substr(source.span->first, source.span->second - source.span->first);
      e.word_span = align_span(g.translation, e.span_text).words;
    }
    if (!e.aligned())
      result.diagnostics.push_back(detail::line_prefix(line_no) + "span '" + e.span_text +
                                   "' could not be aligned to the translation");
    g.by_rater[rater].push_back(std::move(e));
  }

  std::map<int, std::string> references;
  for (const auto& key : group_order) {
    const auto& g = groups.at(key);
    if (g.system == options.reference_system) references.emplace(g.seg_id, g.translation);
  }

  std::vector<Segment> main;
  std::vector<Segment> refs;
  for (const auto& key : group_order) {
    const auto& g = groups.at(key);
    Segment s;
    s.lp = lp;
    s.system_id = g.system;
    s.doc_id = g.doc;
    s.seg_id = g.seg_id;
    s.source = g.source;
    s.translation = g.translation;
    if (auto r = references.find(g.seg_id); r != references.end() && g.system != options.reference_system)
      s.reference = r->second;
    std::vector<std::vector<ErrorAnnotation>> others;
    for (std::size_t i = 0; i < g.rater_order.size(); ++i) {
      auto errs = g.by_rater.at(g.rater_order[i]);
      if (i == 0) s.gold_errors = std::move(errs);
      else others.push_back(std::move(errs));
    }
    s.gold_score = gold_mqm_score(s, others, options.weights);
    s.other_rater_errors = std::move(others);
    (g.system == options.reference_system ? refs : main).push_back(std::move(s));
  }
  result.corpus = Corpus(std::move(main), &result.diagnostics);
  result.reference_annotations = Corpus(std::move(refs), &result.diagnostics);
  return result;
}

inline LoadResult load_corpus(const std::filesystem::path& path, const LoadOptions& options = {}) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path.string());
  return options.format == CorpusFormat::NativeJsonl ? load_native_jsonl(in, options) : load_wmt_mqm_tsv(in, options);
}

// ---------------------------------------------------------------------------
// Writing

namespace detail {

inline nlohmann::json errors_to_json(const std::vector<ErrorAnnotation>& errors) {
  auto list = nlohmann::json::array();
  for (const auto& e : errors) {
    nlohmann::json j;
    j["severity"] = std::string(to_string(e.severity));
    j["category"] = e.category.raw.empty() ? std::string(to_string(e.category.canonical)) : e.category.raw;
    j["span"] = e.span_text;
    j["word_span"] = e.word_span;
    list.push_back(std::move(j));
  }
  return list;
}

}  // namespace detail

inline nlohmann::json segment_to_json(const Segment& s) {
  nlohmann::json j;
  j["lp"] = s.lp.code;
  j["src_lang"] = s.lp.source_lang;
  j["tgt_lang"] = s.lp.target_lang;
  j["system"] = s.system_id;
  j["doc"] = s.doc_id;
  j["seg_id"] = s.seg_id;
  j["source"] = s.source;
  j["reference"] = s.reference ? nlohmann::json(*s.reference) : nlohmann::json(nullptr);
  j["translation"] = s.translation;
  j["errors"] = detail::errors_to_json(s.gold_errors);
  if (!s.other_rater_errors.empty()) {
    auto others = nlohmann::json::array();
    for (const auto& r : s.other_rater_errors) others.push_back(detail::errors_to_json(r));
    j["other_raters"] = std::move(others);
  }
  return j;
}

inline void write_corpus_jsonl(const Corpus& corpus, std::ostream& out) {
  for (const auto& s : corpus) out << segment_to_json(s).dump() << '\n';
}

// ---------------------------------------------------------------------------
// Sampling

/// Keeps `n_sources` source sentences chosen uniformly without replacement,
/// together with every system output for them.
inline Corpus sample_test_subset(const Corpus& corpus, std::size_t n_sources, std::uint64_t seed) {
  const auto sources = corpus.sources();
  if (n_sources > sources.size())
    throw DataError("sample_test_subset: asked for " + std::to_string(n_sources) + " sources, corpus has " +
                    std::to_string(sources.size()));
  Rng rng(seed);
  std::set<SourceKey> chosen;
  for (auto i : rng.sample_indices(sources.size(), n_sources)) chosen.insert(sources[i]);
  std::vector<Segment> kept;
  for (const auto& s : corpus)
    if (chosen.count(s.source_key())) kept.push_back(s);
  return Corpus(std::move(kept));
}

enum class Stratum { NoError, MinorOnly, HasMajor };

constexpr std::string_view to_string(Stratum s) {
  switch (s) {
    case Stratum::NoError: return "no-error";
    case Stratum::MinorOnly: return "minor-only";
    case Stratum::HasMajor: return "has-major";
  }
  return "?";
}

inline Stratum stratum_of(const Segment& s) {
  if (s.gold_errors.empty()) return Stratum::NoError;
  return s.has_major() ? Stratum::HasMajor : Stratum::MinorOnly;
}

struct DemoCriteria {
  int max_words = 60;
  std::size_t max_errors = 5;
};

inline bool acceptable_demo(const Segment& s, const DemoCriteria& criteria = {}) {
  if (s.word_count() > criteria.max_words) return false;
  if (s.gold_errors.size() > criteria.max_errors) return false;
  return std::all_of(s.gold_errors.begin(), s.gold_errors.end(),
                     [](const ErrorAnnotation& e) { return e.aligned(); });
}

/// Stratified demonstration sampling. Strata (no-error, minor-only,
/// has-major) are visited round-robin; each is drawn from a seeded shuffle
/// of its acceptable candidates. Strata without acceptable candidates are
/// skipped.
inline std::vector<Segment> sample_demonstrations(const Corpus& pool, std::size_t k, std::uint64_t seed,
                                                  const DemoCriteria& criteria = {}) {
  if (pool.empty()) throw DataError("sample_demonstrations: empty pool");
  if (k == 0) throw ConfigError("sample_demonstrations: k must be >= 1");
  constexpr std::array<Stratum, 3> kOrder{Stratum::NoError, Stratum::MinorOnly, Stratum::HasMajor};
  std::array<std::vector<const Segment*>, 3> strata;
  for (const auto& s : pool) strata[static_cast<std::size_t>(stratum_of(s))].push_back(&s);

  Rng rng(seed);
  std::size_t available = 0;
  for (auto& members : strata) {
    rng.shuffle(members);
    std::erase_if(members, [&](const Segment* s) { return !acceptable_demo(*s, criteria); });
    available += members.size();
  }
  if (available < k) {
    std::string empty;
    for (auto st : kOrder) {
      if (strata[static_cast<std::size_t>(st)].empty()) {
        if (!empty.empty()) empty += ", ";
        empty += to_string(st);
      }
    }
    throw DataError("sample_demonstrations: only " + std::to_string(available) + " acceptable of " +
                    std::to_string(k) + " requested; empty strata: " + (empty.empty() ? "none" : empty));
  }

  std::vector<Segment> out;
  std::array<std::size_t, 3> cursor{};
  while (out.size() < k) {
    for (auto st : kOrder) {
      const auto i = static_cast<std::size_t>(st);
      if (out.size() == k) break;
      if (cursor[i] < strata[i].size()) out.push_back(*strata[i][cursor[i]++]);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Reference-quality filtering

struct FilterResult {
  Corpus corpus;
  std::vector<std::string> diagnostics;
};

/// Keeps segments whose reference, rated as a system, scores <= threshold.
inline FilterResult filter_low_quality_ref(const Corpus& corpus, const Corpus& ref_annotations, double threshold) {
  std::map<std::pair<std::string, int>, double> ref_score;
  for (const auto& r : ref_annotations) ref_score.emplace(std::make_pair(r.lp.code, r.seg_id), r.gold_score);
  FilterResult result;
  std::vector<Segment> kept;
  std::set<std::pair<std::string, int>> missing;
  for (const auto& s : corpus) {
    auto it = ref_score.find({s.lp.code, s.seg_id});
    if (it == ref_score.end()) {
      if (missing.insert({s.lp.code, s.seg_id}).second)
        result.diagnostics.push_back("no reference annotation for " + s.lp.code + "/" + std::to_string(s.seg_id) +
                                     "; its segments are dropped");
      continue;
    }
    if (it->second <= threshold) kept.push_back(s);
  }
  result.corpus = Corpus(std::move(kept));
  return result;
}

// ---------------------------------------------------------------------------
// Instruction-tuning data

struct SftRecord {
  std::string instruction;
  std::string input;
  std::string output;
  InputMode mode = InputMode::ST;
  LanguagePair lp;
  SegmentKey key;
};

struct SftLpStats {
  std::map<InputMode, long> per_mode;
  long total = 0;
  long no_error = 0;

  double no_error_rate() const { return total ? static_cast<double>(no_error) / static_cast<double>(total) : 0.0; }
};

struct SftStats {
  std::map<std::string, SftLpStats> per_lp;
  SftLpStats overall;
};

struct SftDataset {
  std::vector<SftRecord> records;
  SftStats stats;
};

struct SftOptions {
  std::uint64_t seed = 0;
  /// Target share of error-free samples, in (0, 1]. 1 disables down-sampling.
  double no_error_target = 1.0;
  std::vector<InputMode> modes{InputMode::ST, InputMode::RT, InputMode::SRT};
  /// Language pairs to down-sample; empty means all.
  std::set<std::string> downsample_lps;
};

/// Builds Alpaca-style records: instruction and input from the AutoMQM
/// prompt (no demonstrations), output the canonical error line. Error-free
/// samples are down-sampled per language pair towards `no_error_target`,
/// then each sample gets one mode uniformly at random.
inline SftDataset build_sft_dataset(const Corpus& corpus, const SftOptions& options) {
  if (options.modes.empty()) throw ConfigError("build_sft_dataset: no modes");
  for (auto m : options.modes)
    if (m == InputMode::T) throw ConfigError("build_sft_dataset: mode T is not allowed for training data");
  if (!(options.no_error_target > 0.0 && options.no_error_target <= 1.0))
    throw ConfigError("build_sft_dataset: no_error_target must be in (0, 1]");

  std::map<std::string, std::vector<const Segment*>> clean, flawed;
  for (const auto& s : corpus) (s.gold_errors.empty() ? clean : flawed)[s.lp.code].push_back(&s);

  Rng sampler(options.seed, 0);
  std::set<SegmentKey> dropped;
  for (const auto& lp : corpus.language_pairs()) {
    if (!options.downsample_lps.empty() && !options.downsample_lps.count(lp)) continue;
    const auto n_clean = clean[lp].size();
    const auto n_flawed = flawed[lp].size();
    if (options.no_error_target >= 1.0 || n_clean == 0) continue;
    const double rate = static_cast<double>(n_clean) / static_cast<double>(n_clean + n_flawed);
    if (rate <= options.no_error_target) continue;
    if (n_flawed == 0)
      throw DataError("build_sft_dataset: " + lp + " has no error-bearing samples; no-error target " +
                      std::to_string(options.no_error_target) + " is unreachable");
    const double t = options.no_error_target;
    const auto keep = static_cast<std::size_t>(std::llround(t * static_cast<double>(n_flawed) / (1.0 - t)));
    std::set<std::size_t> kept;
    for (auto i : sampler.sample_indices(n_clean, std::min(keep, n_clean))) kept.insert(i);
    for (std::size_t i = 0; i < n_clean; ++i)
      if (!kept.count(i)) dropped.insert(clean[lp][i]->key());
  }

  SftDataset out;
  Rng assigner(options.seed, 1);
  for (const auto& s : corpus) {
    if (dropped.count(s.key())) continue;
    const auto mode = options.modes[static_cast<std::size_t>(assigner.below(options.modes.size()))];
    SftRecord r;
    r.instruction = automqm_instruction(mode);
    r.input = automqm_block(s, mode);
    r.output = render_error_line(s.gold_errors);
    r.mode = mode;
    r.lp = s.lp;
    r.key = s.key();
    for (auto* st : {&out.stats.per_lp[s.lp.code], &out.stats.overall}) {
      ++st->per_mode[mode];
      ++st->total;
      if (s.gold_errors.empty()) ++st->no_error;
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

inline void write_sft_jsonl(const SftDataset& data, std::ostream& out) {
  for (const auto& r : data.records) {
    nlohmann::json j;
    j["instruction"] = r.instruction;
    j["input"] = r.input;
    j["output"] = r.output;
    j["mode"] = std::string(to_string(r.mode));
    j["lp"] = r.lp.code;
    out << j.dump() << '\n';
  }
}

}  // namespace mqmeval
