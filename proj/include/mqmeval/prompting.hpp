#pragma once

// Prompt rendering for score prediction (GEMBA-SQM), error annotation
// (AutoMQM) and log-probability scoring. All functions are pure.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mqmeval/error.hpp"
#include "mqmeval/parsing.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

enum class ModelKind { Chat, Base };

constexpr std::string_view to_string(ModelKind k) { return k == ModelKind::Chat ? "chat" : "base"; }

inline ModelKind parse_model_kind(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "chat") return ModelKind::Chat;
  if (l == "base") return ModelKind::Base;
  throw ConfigError("unknown model kind '" + std::string(s) + "' (expected chat or base)");
}

struct RenderedPrompt {
  std::string text;
  InputMode mode = InputMode::T;
  Template template_id = Template::GembaSqm;
  int demo_count = 0;
  /// Text to be scored after `text`; set for the logprob templates only.
  std::optional<std::string> continuation;
};

namespace detail {

inline void require_fields(const Segment& seg, InputMode mode, const std::string& who) {
  if (includes_reference(mode) && !seg.reference)
    throw DataError(who + " " + to_string(seg.key()) + " has no reference but mode " +
                    std::string(to_string(mode)) + " needs one");
  if (includes_source(mode) && seg.source.empty())
    throw DataError(who + " " + to_string(seg.key()) + " has no source but mode " +
                    std::string(to_string(mode)) + " needs one");
}

// The mode-dependent quoted lines plus the translation line.
inline std::string field_lines(const Segment& seg, InputMode mode) {
  std::string out;
  if (includes_source(mode)) out += seg.lp.source_lang + " source: \"" + seg.source + "\"\n";
  if (includes_reference(mode)) out += seg.lp.target_lang + " human reference: \"" + *seg.reference + "\"\n";
  out += seg.lp.target_lang + " translation: \"" + seg.translation + "\"";
  return out;
}

}  // namespace detail

inline RenderedPrompt render_gemba_sqm(const Segment& seg, InputMode mode) {
  detail::require_fields(seg, mode, "segment");
  RenderedPrompt p;
  p.mode = mode;
  p.template_id = Template::GembaSqm;
  p.text = "Score the following translation from " + seg.lp.source_lang + " to " + seg.lp.target_lang;
  if (includes_reference(mode)) p.text += " with respect to the human reference";
  p.text +=
      " on a continuous scale from 0 to 100 that starts on \"No meaning preserved\", goes through "
      "\"Some meaning preserved\", then \"Most meaning preserved and few grammar mistakes\", up to "
      "\"Perfect meaning and grammar\".\n\n";
  p.text += detail::field_lines(seg, mode);
  p.text += "\nScore (0-100):";
  return p;
}

/// The AutoMQM instruction paragraph for a mode.
inline std::string automqm_instruction(InputMode mode) {
  std::string lead;
  switch (mode) {
    case InputMode::T: lead = "Identify"; break;
    case InputMode::ST: lead = "Based on the given source, identify"; break;
    case InputMode::RT: lead = "Based on the given reference, identify"; break;
    case InputMode::SRT: lead = "Based on the given source and reference, identify"; break;
  }
  return lead +
         " the major and minor errors in this translation. Note that Major errors refer to actual "
         "translation or grammatical errors, and Minor errors refer to smaller imperfections, and "
         "purely subjective opinions about the translation.";
}

/// Lines of one AutoMQM example block without its "Errors:" line.
inline std::string automqm_block(const Segment& seg, InputMode mode) {
  detail::require_fields(seg, mode, "segment");
  return detail::field_lines(seg, mode);
}

/// Demonstrations are rendered in the given order, each answered with the
/// canonical error line of its gold annotations.
inline RenderedPrompt render_automqm(const Segment& seg, InputMode mode, std::span<const Segment> demos) {
  detail::require_fields(seg, mode, "segment");
  RenderedPrompt p;
  p.mode = mode;
  p.template_id = Template::AutoMqm;
  p.demo_count = static_cast<int>(demos.size());
  p.text = automqm_instruction(mode);
  for (const auto& demo : demos) {
    detail::require_fields(demo, mode, "demonstration");
    p.text += "\n\n";
    p.text += detail::field_lines(demo, mode);
    p.text += "\nErrors: " + render_error_line(demo.gold_errors);
  }
  p.text += "\n\n";
  p.text += detail::field_lines(seg, mode);
  p.text += "\nErrors:";
  return p;
}

/// Context/continuation pair for log-probability scoring. Base models see
/// the fields joined by " = "; chat models see the GEMBA-SQM prompt.
inline RenderedPrompt render_logprob_context(const Segment& seg, InputMode mode, ModelKind kind) {
  detail::require_fields(seg, mode, "segment");
  RenderedPrompt p;
  p.mode = mode;
  if (kind == ModelKind::Chat) {
    p.text = render_gemba_sqm(seg, mode).text;
    p.template_id = Template::LogprobChat;
  } else {
    p.template_id = Template::LogprobBase;
    if (includes_source(mode)) p.text += seg.source + " = ";
    if (includes_reference(mode)) p.text += *seg.reference + " = ";
  }
  p.continuation = seg.translation;
  return p;
}

/// Dispatch on template; `demos` is used by automqm only.
inline RenderedPrompt render_prompt(Template t, const Segment& seg, InputMode mode,
                                    std::span<const Segment> demos = {}) {
  switch (t) {
    case Template::GembaSqm: return render_gemba_sqm(seg, mode);
    case Template::AutoMqm: return render_automqm(seg, mode, demos);
    case Template::LogprobChat: return render_logprob_context(seg, mode, ModelKind::Chat);
    case Template::LogprobBase: return render_logprob_context(seg, mode, ModelKind::Base);
  }
  throw ConfigError("unknown template");
}

}  // namespace mqmeval
