#pragma once

// Segment-level quality scores from error annotations or token log-probs,
// and their aggregation to system level.

#include <algorithm>
#include <iterator>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "mqmeval/error.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

/// Severity weights. Defaults are the simplified -5 / -1 scheme; the full
/// Google table is reachable by setting `non_translation = -25` and a floor.
struct WeightTable {
  double major = -5.0;
  double minor = -1.0;
  double neutral = 0.0;
  std::optional<double> non_translation;
  std::optional<double> floor;

  void validate() const {
    if (major > 0 || minor > 0 || neutral > 0 || (non_translation && *non_translation > 0) ||
        (floor && *floor > 0))
      throw ConfigError("MQM weights must be <= 0");
    if (floor) {
      const double lowest = std::min({major, minor, neutral, non_translation.value_or(0.0)});
      if (*floor > lowest) throw ConfigError("MQM floor must not exceed any single weight");
    }
  }

  double weight(const ErrorAnnotation& e) const {
    if (non_translation && e.severity == Severity::Major && e.category.is_non_translation())
      return *non_translation;
    switch (e.severity) {
      case Severity::Major: return major;
      case Severity::Minor: return minor;
      case Severity::Neutral: return neutral;
    }
    return 0.0;
  }
};

inline double mqm_score(std::span<const ErrorAnnotation> errors, const WeightTable& weights = {}) {
  double total = 0.0;
  for (const auto& e : errors) total += weights.weight(e);
  if (weights.floor) total = std::max(total, *weights.floor);
  return total;
}

struct TokenLogprob {
  std::string token;
  double logprob = 0.0;
};

enum class LogprobNormalize { Sum, Mean };

/// Sum (default) or mean of per-token log-probabilities of a continuation.
inline double logprob_score(std::span<const TokenLogprob> tokens,
                            LogprobNormalize normalize = LogprobNormalize::Sum) {
  if (tokens.empty()) throw DataError("logprob_score: empty token list");
  double sum = 0.0;
  for (const auto& t : tokens) sum += t.logprob;
  return normalize == LogprobNormalize::Sum ? sum : sum / static_cast<double>(tokens.size());
}

enum class ScoreKind { Mqm, Sqm, Logprob };

constexpr std::string_view to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::Mqm: return "mqm";
    case ScoreKind::Sqm: return "sqm";
    case ScoreKind::Logprob: return "logprob";
  }
  return "?";
}

inline ScoreKind parse_score_kind(std::string_view s) {
  for (auto k : {ScoreKind::Mqm, ScoreKind::Sqm, ScoreKind::Logprob})
    if (to_string(k) == s) return k;
  throw DataError("unknown score kind '" + std::string(s) + "'");
}

struct SegmentScore {
  SegmentKey key;
  double value = 0.0;
  ScoreKind kind = ScoreKind::Mqm;
};

/// lp -> system -> mean score.
using SystemScores = std::map<std::string, std::map<std::string, double>>;

struct SystemScoreResult {
  SystemScores scores;
  std::vector<std::string> diagnostics;
};

/// Mean score per (lp, system). Within an LP, systems are compared on the
/// segment ids every system covers; coverage mismatches are reported.
inline SystemScoreResult system_scores(std::span<const SegmentScore> segment_scores) {
  // lp -> system -> seg_id -> value
  std::map<std::string, std::map<std::string, std::map<int, double>>> by_lp;
  for (const auto& s : segment_scores) by_lp[s.key.lp][s.key.system][s.key.seg_id] = s.value;

  SystemScoreResult result;
  for (const auto& [lp, systems] : by_lp) {
    std::set<int> common;
    bool first = true;
    bool mismatch = false;
    for (const auto& [sys, segs] : systems) {
      std::set<int> ids;
      for (const auto& [id, v] : segs) ids.insert(id);
      if (first) {
        common = std::move(ids);
        first = false;
      } else {
        if (ids != common) mismatch = true;
        std::set<int> both;
        std::set_intersection(common.begin(), common.end(), ids.begin(), ids.end(),
                              std::inserter(both, both.begin()));
        common = std::move(both);
      }
    }
    if (common.empty()) throw DataError("system_scores: systems in " + lp + " share no segments");
    if (mismatch)
      result.diagnostics.push_back("system_scores: " + lp + " restricted to " +
                                   std::to_string(common.size()) + " common segments");
    for (const auto& [sys, segs] : systems) {
      double sum = 0.0;
      for (int id : common) sum += segs.at(id);
      result.scores[lp][sys] = sum / static_cast<double>(common.size());
    }
  }
  return result;
}

}  // namespace mqmeval
