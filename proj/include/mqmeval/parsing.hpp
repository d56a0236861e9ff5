#pragma once

// Free-text model output -> structured scores and error annotations, plus
// alignment of quoted spans to translation word indices.

#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <optional>
#include <regex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mqmeval/scoring.hpp"
#include "mqmeval/text.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

// ---------------------------------------------------------------------------
// Scores

struct ParsedScore {
  bool ok = false;
  double value = 0.0;  // in [0, 100] when ok
  std::string raw;
  std::string diagnostic;

  explicit operator bool() const { return ok; }
};

namespace detail {

// Length of a leading "Score", "Score:" or "Score (0-100):" echo.
inline std::size_t score_label_length(std::string_view s) {
  static const std::regex kLabel(R"(^\s*score\s*(\(\s*0\s*-\s*100\s*\))?\s*[:=]?)", std::regex::icase);
  std::match_results<std::string_view::const_iterator> m;
  if (std::regex_search(s.begin(), s.end(), m, kLabel)) return static_cast<std::size_t>(m.length(0));
  return 0;
}

}  // namespace detail

/// First numeric literal in the text, accepted iff it lies in [0, 100].
inline ParsedScore parse_sqm_score(std::string_view text) {
  ParsedScore out;
  out.raw = std::string(text);
  std::string_view s = text.substr(detail::score_label_length(text));

  auto digit = [](char c) { return c >= '0' && c <= '9'; };
  std::size_t i = 0;
  while (i < s.size() && !digit(s[i]) && !(s[i] == '.' && i + 1 < s.size() && digit(s[i + 1]))) ++i;
  if (i == s.size()) {
    out.diagnostic = "no numeric literal";
    return out;
  }
  std::size_t begin = i;
  // A minus sign counts only when it is not a range dash after a digit.
  const bool negative = begin > 0 && s[begin - 1] == '-' && (begin < 2 || !digit(s[begin - 2]));
  std::size_t end = begin;
  while (end < s.size() && digit(s[end])) ++end;
  if (end < s.size() && s[end] == '.' && end + 1 < s.size() && digit(s[end + 1])) {
    ++end;
    while (end < s.size() && digit(s[end])) ++end;
  }
  std::string literal(s.substr(begin, end - begin));
  if (literal.front() == '.') literal.insert(literal.begin(), '0');
  double v = std::strtod(literal.c_str(), nullptr);
  if (negative) v = -v;
  if (!(v >= 0.0 && v <= 100.0)) {
    out.diagnostic = "score " + std::string(negative ? "-" : "") + literal + " outside [0, 100]";
    return out;
  }
  out.ok = true;
  out.value = v;
  return out;
}

// ---------------------------------------------------------------------------
// Error lists

struct ParsedError {
  Severity severity = Severity::Minor;
  std::string category_raw;
  std::string span_text;

  bool operator==(const ParsedError&) const = default;
};

struct ErrorParse {
  bool ok = false;
  std::vector<ParsedError> errors;
  std::string raw;
  std::vector<std::string> notes;

  explicit operator bool() const { return ok; }
};

/// Canonical line encoding: "no-error" for an empty list, otherwise
/// "<severity>/<category>: '<span>'" entries joined by "; ".
inline std::string render_error_line(std::span<const ErrorAnnotation> errors) {
  if (errors.empty()) return "no-error";
  std::string out;
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (i) out += "; ";
    out += to_string(errors[i].severity);
    out += '/';
    out += to_string(errors[i].category.canonical);
    out += ": '";
    out += errors[i].span_text;
    out += '\'';
  }
  return out;
}

namespace detail {

inline Severity severity_or_minor(std::string_view word, std::vector<std::string>& notes) {
  if (auto s = severity_from_string(word)) return *s;
  notes.push_back("unknown severity '" + std::string(word) + "' read as minor");
  return Severity::Minor;
}

inline bool is_no_error_marker(std::string_view line) {
  std::string l = text::ascii_lower(text::trim(line));
  while (!l.empty() && (l.back() == '.' || l.back() == '!')) l.pop_back();
  while (!l.empty() && (l.front() == '-' || l.front() == '*') && l.size() > 1 && l[1] == ' ')
    l = std::string(text::trim(std::string_view(l).substr(1)));
  return l == "no-error" || l == "no error" || l == "no errors" || l == "no-errors" || l == "none" ||
         l == "no errors found" || l == "no error found" || l == "errors: no-error" ||
         l == "errors: none" || l == "errors: no errors";
}

struct Header {
  std::size_t begin;
  std::size_t end;  // one past the opening quote
  std::string severity;
  std::string category;
};

// Matches "<word>/<category>: '" at `pos`, allowing leading blanks.
inline std::optional<Header> match_header(std::string_view s, std::size_t pos) {
  while (pos < s.size() && (s[pos] == ' ' || s[pos] == '\t' || s[pos] == '\r' || s[pos] == '\n')) ++pos;
  const std::size_t begin = pos;
  std::size_t p = pos;
  while (p < s.size() && std::isalpha(static_cast<unsigned char>(s[p]))) ++p;
  if (p == begin || p >= s.size() || s[p] != '/') return std::nullopt;
  std::string severity(s.substr(begin, p - begin));
  const std::size_t cat_begin = ++p;
  while (p < s.size() && (std::isalpha(static_cast<unsigned char>(s[p])) || s[p] == '-' || s[p] == ' ' || s[p] == '_'))
    ++p;
  if (p == cat_begin || p >= s.size() || s[p] != ':') return std::nullopt;
  std::string category(text::trim(s.substr(cat_begin, p - cat_begin)));
  ++p;
  while (p < s.size() && s[p] == ' ') ++p;
  if (p >= s.size() || s[p] != '\'') return std::nullopt;
  return Header{begin, p + 1, std::move(severity), std::move(category)};
}

// After a closing quote at `q`: true when only blanks and an optional final
// period remain.
inline bool at_tail(std::string_view s, std::size_t q) {
  auto rest = text::trim(s.substr(q + 1));
  return rest.empty() || rest == ".";
}

// After a closing quote at `q`: position of the next entry's header when it
// is separated by "; ", ";" or a newline.
inline std::optional<std::size_t> next_entry(std::string_view s, std::size_t q) {
  std::size_t p = q + 1;
  while (p < s.size() && (s[p] == ' ' || s[p] == '\t' || s[p] == '\r')) ++p;
  if (p < s.size() && (s[p] == ';' || s[p] == '\n' || s[p] == ',')) {
    ++p;
    if (match_header(s, p)) return p;
  }
  return std::nullopt;
}

inline std::optional<std::vector<ParsedError>> parse_canonical(std::string_view s,
                                                               std::vector<std::string>& notes) {
  std::vector<ParsedError> out;
  std::vector<std::string> local_notes;
  std::size_t pos = 0;
  while (true) {
    auto header = match_header(s, pos);
    if (!header) return std::nullopt;
    std::size_t search = header->end;
    std::optional<std::size_t> next;
    std::size_t close = std::string_view::npos;
    while (true) {
      const auto q = s.find('\'', search);
      if (q == std::string_view::npos) return std::nullopt;
      if (auto n = next_entry(s, q)) {
        next = n;
        close = q;
        break;
      }
      if (at_tail(s, q)) {
        close = q;
        break;
      }
      search = q + 1;
    }
    ParsedError e;
    e.severity = severity_or_minor(header->severity, local_notes);
    e.category_raw = header->category;
    e.span_text = std::string(s.substr(header->end, close - header->end));
    out.push_back(std::move(e));
    if (!next) break;
    pos = *next;
  }
  notes.insert(notes.end(), local_notes.begin(), local_notes.end());
  return out;
}

inline std::string strip_quotes(std::string_view s) {
  s = text::trim(s);
  for (std::string_view q : {"\"", "'", "\xE2\x80\x9C", "\xE2\x80\x98"}) {
    if (s.size() >= 2 * q.size() && s.substr(0, q.size()) == q) {
      auto inner = s.substr(q.size());
      for (std::string_view cq : {"\"", "'", "\xE2\x80\x9D", "\xE2\x80\x99"}) {
        if (inner.size() >= cq.size() && inner.substr(inner.size() - cq.size()) == cq)
          return std::string(inner.substr(0, inner.size() - cq.size()));
      }
    }
  }
  return std::string(s);
}

inline std::string strip_bullet(std::string_view line) {
  line = text::trim(line);
  if (line.size() >= 2 && (line[0] == '-' || line[0] == '*') && line[1] == ' ') return std::string(text::trim(line.substr(2)));
  if (line.substr(0, 3) == "\xE2\x80\xA2") return std::string(text::trim(line.substr(3)));
  std::size_t d = 0;
  while (d < line.size() && std::isdigit(static_cast<unsigned char>(line[d]))) ++d;
  if (d > 0 && d + 1 < line.size() && (line[d] == '.' || line[d] == ')') && line[d + 1] == ' ')
    return std::string(text::trim(line.substr(d + 2)));
  return std::string(line);
}

inline std::optional<ParsedError> parse_variant_line(std::string_view line, std::vector<std::string>& notes) {
  // "major: accuracy - 'span'"
  static const std::regex kCategoryFirst(
      R"(^([A-Za-z]+)\s*:\s*([A-Za-z][A-Za-z /_-]*?)\s*(?:-|\xE2\x80\x94|\xE2\x80\x93)\s*(['"]|\xE2\x80\x9C|\xE2\x80\x98)(.*)(['"]|\xE2\x80\x9D|\xE2\x80\x99)\s*\.?$)");
  // "Major: span — accuracy"
  static const std::regex kSpanFirst(
      R"(^([A-Za-z]+)\s*:\s*(.+?)\s+(?:-|\xE2\x80\x94|\xE2\x80\x93)\s+([A-Za-z][A-Za-z /_-]*?)\s*\.?$)");
  std::smatch m;
  const std::string l(line);
  if (std::regex_match(l, m, kCategoryFirst)) {
    ParsedError e;
    e.severity = severity_or_minor(m[1].str(), notes);
    e.category_raw = std::string(text::trim(m[2].str()));
    e.span_text = m[4].str();
    return e;
  }
  if (std::regex_match(l, m, kSpanFirst)) {
    ParsedError e;
    e.severity = severity_or_minor(m[1].str(), notes);
    e.span_text = strip_quotes(m[2].str());
    e.category_raw = std::string(text::trim(m[3].str()));
    return e;
  }
  return std::nullopt;
}

// Cuts an answer where the model starts echoing a new example block.
inline std::string_view truncate_continuation(std::string_view s) {
  std::size_t line_start = 0;
  bool first = true;
  while (line_start < s.size()) {
    auto nl = s.find('\n', line_start);
    auto line = s.substr(line_start, nl == std::string_view::npos ? std::string_view::npos : nl - line_start);
    if (!first && (line.find(" source: \"") != std::string_view::npos ||
                   line.find(" reference: \"") != std::string_view::npos ||
                   line.find(" translation: \"") != std::string_view::npos))
      return s.substr(0, line_start);
    first = false;
    if (nl == std::string_view::npos) break;
    line_start = nl + 1;
  }
  return s;
}

}  // namespace detail

/// Reads an AutoMQM answer. Accepts the canonical encoding produced by
/// render_error_line, one-error-per-line variants
///   "Major: <span> — <category>"   and   "major: <category> - '<span>'",
/// and no-error markers ("no-error", "no errors", "none"). Matching of
/// severity words and markers is case-insensitive.
inline ErrorParse parse_automqm_errors(std::string_view text) {
  ErrorParse out;
  out.raw = std::string(text);
  std::string_view s = text::trim(text);
  if (s.substr(0, 3) == "\xEF\xBB\xBF") s.remove_prefix(3);
  if (text::starts_with_icase(s, "errors:")) s = text::trim(s.substr(7));
  s = text::trim(detail::truncate_continuation(s));

  if (detail::is_no_error_marker(s)) {
    out.ok = true;
    return out;
  }
  if (auto canonical = detail::parse_canonical(s, out.notes)) {
    out.ok = true;
    out.errors = std::move(*canonical);
    return out;
  }

  bool saw_marker = false;
  for (const auto& raw_line : text::split(s, '\n')) {
    const auto line = detail::strip_bullet(raw_line);
    if (line.empty()) continue;
    if (detail::is_no_error_marker(line)) {
      saw_marker = true;
      continue;
    }
    std::vector<std::string> line_notes;
    if (auto canonical = detail::parse_canonical(line, line_notes)) {
      out.errors.insert(out.errors.end(), canonical->begin(), canonical->end());
      out.notes.insert(out.notes.end(), line_notes.begin(), line_notes.end());
    } else if (auto e = detail::parse_variant_line(line, out.notes)) {
      out.errors.push_back(std::move(*e));
    }
  }
  if (!out.errors.empty() || saw_marker) {
    out.ok = true;
    if (!out.errors.empty() && saw_marker) out.notes.push_back("no-error marker alongside errors ignored");
  } else {
    out.notes.push_back("no error entries or no-error marker found");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Span alignment

struct Alignment {
  std::vector<int> words;  // 1-based, ascending; empty = unaligned
  std::string diagnostic;

  bool aligned() const { return !words.empty(); }
};

/// Locates the first case-insensitive, whitespace-normalized occurrence of
/// `span_text` in `translation` and returns the 1-based indices of every
/// word overlapping it.
inline Alignment align_span(std::string_view translation, std::string_view span_text) {
  Alignment out;
  // Normalized haystack: folded code points, whitespace runs collapsed to one
  // space, each character tagged with its word index (0 for the space).
  std::vector<char32_t> hay;
  std::vector<int> owner;
  int word = 0;
  bool in_word = false;
  for (const auto& cp : text::decode(translation)) {
    if (text::is_space(cp.value)) {
      in_word = false;
      continue;
    }
    if (!in_word) {
      ++word;
      if (word > 1) {
        hay.push_back(U' ');
        owner.push_back(0);
      }
      in_word = true;
    }
    hay.push_back(text::fold(cp.value));
    owner.push_back(word);
  }

  std::vector<char32_t> needle;
  bool pending_space = false;
  for (const auto& cp : text::decode(span_text)) {
    if (text::is_space(cp.value)) {
      pending_space = !needle.empty();
      continue;
    }
    if (pending_space) needle.push_back(U' ');
    pending_space = false;
    needle.push_back(text::fold(cp.value));
  }
  if (needle.empty()) {
    out.diagnostic = "empty span text";
    return out;
  }
  if (needle.size() > hay.size()) {
    out.diagnostic = "span not found in translation";
    return out;
  }
  for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
    if (std::equal(needle.begin(), needle.end(), hay.begin() + static_cast<std::ptrdiff_t>(i))) {
      for (std::size_t k = i; k < i + needle.size(); ++k) {
        if (owner[k] != 0 && (out.words.empty() || out.words.back() != owner[k])) out.words.push_back(owner[k]);
      }
      return out;
    }
  }
  out.diagnostic = "span not found in translation";
  return out;
}

// ---------------------------------------------------------------------------
// Model output records

/// One model answer for one (segment, mode, template).
struct EvalRecord {
  SegmentKey key;
  InputMode mode = InputMode::T;
  Template template_id = Template::GembaSqm;
  std::string raw_output;
  std::vector<TokenLogprob> token_logprobs;  // logprob templates only
  long prompt_tokens = 0;
  long completion_tokens = 0;
};

struct ParseDiagnostics {
  long total = 0;
  long parsed = 0;
  long failed = 0;
  long unaligned_spans = 0;
};

struct ResolvedRecord {
  EvalRecord record;
  bool ok = false;
  std::optional<double> score;         // gemba-sqm: parsed value; logprob: summed logprob
  std::vector<ErrorAnnotation> errors;  // automqm, aligned against the translation
  std::vector<std::string> notes;
};

using TranslationLookup = std::function<std::optional<std::string>(const SegmentKey&)>;

/// Parses and aligns each record. Failures are returned as data (ok = false);
/// what to do with them is decided at meta-evaluation time.
inline std::pair<std::vector<ResolvedRecord>, ParseDiagnostics> resolve_predictions(
    std::span<const EvalRecord> records, const TranslationLookup& lookup,
    LogprobNormalize normalize = LogprobNormalize::Sum) {
  std::vector<ResolvedRecord> out;
  out.reserve(records.size());
  ParseDiagnostics diag;
  for (const auto& rec : records) {
    ++diag.total;
    ResolvedRecord r;
    r.record = rec;
    switch (rec.template_id) {
      case Template::GembaSqm: {
        auto p = parse_sqm_score(rec.raw_output);
        r.ok = p.ok;
        if (p.ok) r.score = p.value;
        else r.notes.push_back(p.diagnostic);
        break;
      }
      case Template::LogprobChat:
      case Template::LogprobBase: {
        if (rec.token_logprobs.empty()) {
          r.notes.push_back("no token logprobs");
        } else {
          r.ok = true;
          r.score = logprob_score(rec.token_logprobs, normalize);
        }
        break;
      }
      case Template::AutoMqm: {
        auto translation = lookup(rec.key);
        if (!translation) {
          r.notes.push_back("no translation for " + to_string(rec.key));
          break;
        }
        auto p = parse_automqm_errors(rec.raw_output);
        r.notes = p.notes;
        if (!p.ok) break;
        r.ok = true;
        for (const auto& pe : p.errors) {
          ErrorAnnotation e;
          e.severity = pe.severity;
          e.category = CategoryLabel::from_raw(pe.category_raw);
          e.span_text = pe.span_text;
          auto a = align_span(*translation, pe.span_text);
          if (a.aligned()) {
            e.word_span = std::move(a.words);
          } else {
            ++diag.unaligned_spans;
            r.notes.push_back("unaligned span '" + pe.span_text + "': " + a.diagnostic);
          }
          r.errors.push_back(std::move(e));
        }
        break;
      }
    }
    if (r.ok) ++diag.parsed;
    else ++diag.failed;
    out.push_back(std::move(r));
  }
  return {std::move(out), diag};
}

}  // namespace mqmeval
