#pragma once

// Domain value types shared by every module.

#include <algorithm>
#include <array>
#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mqmeval/error.hpp"
#include "mqmeval/text.hpp"

namespace mqmeval {

// ---------------------------------------------------------------------------
// Language pairs

/// English exonym for an ISO 639-1 code, or empty when unknown.
inline std::string language_name(std::string_view code) {
  static constexpr std::array<std::pair<std::string_view, std::string_view>, 16> kNames{{
      {"en", "English"},  {"de", "German"},    {"zh", "Chinese"}, {"ru", "Russian"},
      {"fr", "French"},   {"es", "Spanish"},   {"cs", "Czech"},   {"ja", "Japanese"},
      {"uk", "Ukrainian"}, {"he", "Hebrew"},   {"pl", "Polish"},  {"it", "Italian"},
      {"pt", "Portuguese"}, {"ko", "Korean"},  {"hr", "Croatian"}, {"is", "Icelandic"},
  }};
  for (const auto& [c, name] : kNames)
    if (c == code) return std::string(name);
  return {};
}

struct LanguagePair {
  std::string source_lang;  // "English"
  std::string target_lang;  // "German"
  std::string code;         // "en-de"

  /// Builds a pair from a code such as "en-de" or "En-De". Language names
  /// are looked up unless given explicitly.
  static LanguagePair from_code(std::string_view raw, std::string src_name = {},
                                std::string tgt_name = {}) {
    const std::string code = text::ascii_lower(text::trim(raw));
    const auto dash = code.find('-');
    if (dash == std::string::npos || dash == 0 || dash + 1 == code.size() ||
        code.find('-', dash + 1) != std::string::npos)
      throw DataError("language pair '" + std::string(raw) + "' is not of the form xx-yy");
    const auto src = code.substr(0, dash);
    const auto tgt = code.substr(dash + 1);
    if (src == tgt) throw DataError("language pair '" + code + "' has identical sides");
    LanguagePair lp;
    lp.code = code;
    lp.source_lang = src_name.empty() ? language_name(src) : std::move(src_name);
    lp.target_lang = tgt_name.empty() ? language_name(tgt) : std::move(tgt_name);
    if (lp.source_lang.empty() || lp.target_lang.empty())
      throw DataError("no language name known for '" + code + "'; supply src_lang/tgt_lang");
    if (lp.source_lang == lp.target_lang)
      throw DataError("language pair '" + code + "' has identical languages");
    return lp;
  }

  bool operator==(const LanguagePair&) const = default;
};

// ---------------------------------------------------------------------------
// Input modes and prompt templates

enum class InputMode { T, ST, RT, SRT };

inline constexpr std::array<InputMode, 4> kAllModes{InputMode::T, InputMode::ST, InputMode::RT,
                                                    InputMode::SRT};

constexpr bool includes_source(InputMode m) { return m == InputMode::ST || m == InputMode::SRT; }
constexpr bool includes_reference(InputMode m) { return m == InputMode::RT || m == InputMode::SRT; }

constexpr std::string_view to_string(InputMode m) {
  switch (m) {
    case InputMode::T: return "T";
    case InputMode::ST: return "S-T";
    case InputMode::RT: return "R-T";
    case InputMode::SRT: return "S-R-T";
  }
  return "?";
}

inline InputMode parse_input_mode(std::string_view s) {
  const auto t = text::trim(s);
  for (auto m : kAllModes)
    if (text::ascii_lower(to_string(m)) == text::ascii_lower(t)) return m;
  // Also accept the unhyphenated spellings.
  const auto l = text::ascii_lower(t);
  if (l == "st") return InputMode::ST;
  if (l == "rt") return InputMode::RT;
  if (l == "srt") return InputMode::SRT;
  throw ConfigError("unknown input mode '" + std::string(s) + "' (expected T, S-T, R-T or S-R-T)");
}

enum class Template { GembaSqm, AutoMqm, LogprobChat, LogprobBase };

constexpr std::string_view to_string(Template t) {
  switch (t) {
    case Template::GembaSqm: return "gemba-sqm";
    case Template::AutoMqm: return "automqm";
    case Template::LogprobChat: return "logprob-chat";
    case Template::LogprobBase: return "logprob-base";
  }
  return "?";
}

inline Template parse_template(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  for (auto t : {Template::GembaSqm, Template::AutoMqm, Template::LogprobChat, Template::LogprobBase})
    if (to_string(t) == l) return t;
  throw ConfigError("unknown template '" + std::string(s) + "'");
}

constexpr bool is_logprob(Template t) { return t == Template::LogprobChat || t == Template::LogprobBase; }

// ---------------------------------------------------------------------------
// Error annotations

enum class Severity { Major, Minor, Neutral };

constexpr std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Major: return "major";
    case Severity::Minor: return "minor";
    case Severity::Neutral: return "neutral";
  }
  return "?";
}

/// Strict severity lookup used by the corpus readers.
inline std::optional<Severity> severity_from_string(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "major") return Severity::Major;
  if (l == "minor") return Severity::Minor;
  if (l == "neutral") return Severity::Neutral;
  return std::nullopt;
}

enum class Category { Accuracy, Fluency, Terminology, Style, LocaleConvention, Other, NoError };

inline constexpr std::array<Category, 7> kAllCategories{
    Category::Accuracy, Category::Fluency,  Category::Terminology, Category::Style,
    Category::LocaleConvention, Category::NoError, Category::Other};

constexpr std::string_view to_string(Category c) {
  switch (c) {
    case Category::Accuracy: return "accuracy";
    case Category::Fluency: return "fluency";
    case Category::Terminology: return "terminology";
    case Category::Style: return "style";
    case Category::LocaleConvention: return "locale-convention";
    case Category::Other: return "other";
    case Category::NoError: return "no-error";
  }
  return "?";
}

struct CategoryLabel {
  Category canonical = Category::Other;
  std::string raw;

  /// Maps a raw MQM label ("Accuracy/Mistranslation", "Locale convention/Date
  /// format", "Non-translation!", ...) to its top-level category. Anything
  /// unrecognised becomes `other`.
  static CategoryLabel from_raw(std::string_view raw) {
    CategoryLabel label;
    label.raw = std::string(raw);
    std::string head = text::ascii_lower(text::trim(raw));
    if (const auto slash = head.find('/'); slash != std::string::npos) head.resize(slash);
    head = std::string(text::trim(head));
    std::replace(head.begin(), head.end(), '_', '-');
    if (head == "accuracy") label.canonical = Category::Accuracy;
    else if (head == "fluency") label.canonical = Category::Fluency;
    else if (head == "terminology") label.canonical = Category::Terminology;
    else if (head == "style") label.canonical = Category::Style;
    else if (head == "locale convention" || head == "locale-convention" || head == "locale")
      label.canonical = Category::LocaleConvention;
    else if (head == "no-error" || head == "no error" || head == "noerror" || head == "none")
      label.canonical = Category::NoError;
    else label.canonical = Category::Other;
    return label;
  }

  bool is_non_translation() const {
    return text::ascii_lower(raw).find("non-translation") != std::string::npos;
  }
};

struct ErrorAnnotation {
  Severity severity = Severity::Minor;
  CategoryLabel category;
  std::string span_text;
  /// 1-based indices of the translation words the span covers, ascending.
  /// Empty when the span could not be located.
  std::vector<int> word_span;

  bool aligned() const { return !word_span.empty(); }
};

// ---------------------------------------------------------------------------
// Segments

struct SegmentKey {
  std::string lp;
  std::string system;
  int seg_id = 0;

  auto operator<=>(const SegmentKey&) const = default;
};

inline std::string to_string(const SegmentKey& k) {
  return k.lp + "/" + k.system + "/" + std::to_string(k.seg_id);
}

/// One source sentence: everything that system outputs share.
struct SourceKey {
  std::string lp;
  std::string doc;
  int seg_id = 0;

  auto operator<=>(const SourceKey&) const = default;
};

struct Segment {
  LanguagePair lp;
  std::string system_id;
  std::string doc_id;
  int seg_id = 0;
  std::string source;
  std::optional<std::string> reference;
  std::string translation;
  std::vector<ErrorAnnotation> gold_errors;  // first rater
  std::vector<std::vector<ErrorAnnotation>> other_rater_errors;
  double gold_score = 0.0;  // <= 0; mean over raters

  SegmentKey key() const { return {lp.code, system_id, seg_id}; }
  SourceKey source_key() const { return {lp.code, doc_id, seg_id}; }
  int word_count() const { return text::word_count(translation); }

  bool has_major() const {
    return std::any_of(gold_errors.begin(), gold_errors.end(),
                       [](const ErrorAnnotation& e) { return e.severity == Severity::Major; });
  }
};

}  // namespace mqmeval
