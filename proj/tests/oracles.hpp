#pragma once

// Independent reference implementations used to check the library. They are
// deliberately naive: quadratic pair loops, explicit position flags, and
// textbook closed forms.

#include <cctype>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace oracle {

struct PairCounts {
  long concordant = 0, discordant = 0, tie_x_only = 0, tie_y_only = 0, tie_both = 0;
};

inline PairCounts count_pairs(const std::vector<double>& x, const std::vector<double>& y) {
  PairCounts c;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = i + 1; j < x.size(); ++j) {
      const double dx = x[i] - x[j], dy = y[i] - y[j];
      if (dx == 0 && dy == 0) ++c.tie_both;
      else if (dx == 0) ++c.tie_x_only;
      else if (dy == 0) ++c.tie_y_only;
      else if ((dx > 0) == (dy > 0)) ++c.concordant;
      else ++c.discordant;
    }
  return c;
}

/// tau-b = (C - D) / sqrt((C + D + Ty) (C + D + Tx)), ties counted per side.
inline double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  const auto c = count_pairs(x, y);
  const double cd = static_cast<double>(c.concordant + c.discordant);
  const double den = std::sqrt((cd + c.tie_y_only) * (cd + c.tie_x_only));
  return den == 0 ? 0.0 : static_cast<double>(c.concordant - c.discordant) / den;
}

/// Pearson from raw sums: (n Sxy - Sx Sy) / sqrt((n Sxx - Sx^2)(n Syy - Sy^2)).
inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxy += x[i] * y[i];
    sxx += x[i] * x[i];
    syy += y[i] * y[i];
  }
  return (n * sxy - sx * sy) / std::sqrt((n * sxx - sx * sx) * (n * syy - sy * sy));
}

/// One segment for the span oracle: word count plus spans given as
/// (severity_is_major, word indices).
struct Spans {
  int words = 0;
  std::vector<std::pair<bool, std::vector<int>>> spans;
};

struct SpanResult {
  double sp = 0, sr = 0, mp = 0, mr = 0, mcc = 0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

inline double ratio(long a, long b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); }

/// Marks each word position with flags and counts directly.
inline SpanResult span_oracle(const std::vector<Spans>& gold, const std::vector<Spans>& pred) {
  long overlap = 0, g_all = 0, p_all = 0, overlap_m = 0, g_maj = 0, p_maj = 0;
  SpanResult r;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    const int n = gold[s].words;
    std::vector<int> g(n + 1, 0), p(n + 1, 0), gm(n + 1, 0), pm(n + 1, 0);
    for (const auto& [major, idx] : gold[s].spans)
      for (int w : idx) {
        g[w] = 1;
        if (major) gm[w] = 1;
      }
    for (const auto& [major, idx] : pred[s].spans)
      for (int w : idx) {
        p[w] = 1;
        if (major) pm[w] = 1;
      }
    for (int w = 1; w <= n; ++w) {
      overlap += g[w] && p[w];
      g_all += g[w];
      p_all += p[w];
      overlap_m += gm[w] && pm[w];
      g_maj += gm[w];
      p_maj += pm[w];
      if (g[w] && p[w]) ++r.tp;
      else if (!g[w] && p[w]) ++r.fp;
      else if (g[w] && !p[w]) ++r.fn;
      else ++r.tn;
    }
  }
  r.sp = ratio(overlap, p_all);
  r.sr = ratio(overlap, g_all);
  r.mp = ratio(overlap_m, p_maj);
  r.mr = ratio(overlap_m, g_maj);
  const double den = std::sqrt(static_cast<double>(r.tp + r.fp) * static_cast<double>(r.tp + r.fn) *
                               static_cast<double>(r.tn + r.fp) * static_cast<double>(r.tn + r.fn));
  r.mcc = den == 0 ? 0.0 : (static_cast<double>(r.tp) * r.tn - static_cast<double>(r.fp) * r.fn) / den;
  return r;
}

/// ASCII-only alignment by character ranges: words are separated by single
/// spaces, the match is the first case-insensitive occurrence.
inline std::vector<int> align_ascii(const std::string& translation, const std::string& span) {
  std::vector<std::pair<std::size_t, std::size_t>> ranges;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= translation.size(); ++i)
    if (i == translation.size() || translation[i] == ' ') {
      ranges.emplace_back(start, i);
      start = i + 1;
    }
  auto lower = [](std::string s) {
    for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
  };
  const auto pos = lower(translation).find(lower(span));
  std::vector<int> out;
  if (span.empty() || pos == std::string::npos) return out;
  const auto end = pos + span.size();
  for (std::size_t w = 0; w < ranges.size(); ++w)
    if (ranges[w].first < end && pos < ranges[w].second) out.push_back(static_cast<int>(w) + 1);
  return out;
}

}  // namespace oracle
