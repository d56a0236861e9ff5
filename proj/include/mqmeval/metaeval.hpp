#pragma once

// Meta-evaluation statistics: system-level pairwise accuracy, Kendall's tau,
// Pearson's r, span and category precision/recall, word-level MCC, Shapley
// attribution of prompt inputs, PERM-BOTH significance testing and critical
// error detection.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mqmeval/error.hpp"
#include "mqmeval/random.hpp"
#include "mqmeval/scoring.hpp"
#include "mqmeval/types.hpp"

namespace mqmeval {

/// 0/0 -> 0.
constexpr double safe_ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

/// Harmonic mean, 0 when both inputs are 0.
constexpr double f1_score(double p, double r) { return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

// ---------------------------------------------------------------------------
// System-level pairwise accuracy

/// Fraction of system pairs (pooled over language pairs) whose metric
/// ordering agrees with the human ordering. Pairs the humans tie are
/// skipped; pairs the metric ties count as wrong.
inline double system_accuracy(const SystemScores& human, const SystemScores& metric) {
  long agree = 0;
  long total = 0;
  bool any_pairs = false;
  for (const auto& [lp, hsys] : human) {
    auto mit = metric.find(lp);
    if (mit == metric.end()) throw DataError("system_accuracy: metric has no scores for " + lp);
    const auto& msys = mit->second;
    if (msys.size() != hsys.size()) throw DataError("system_accuracy: system sets differ in " + lp);
    for (const auto& [name, v] : hsys)
      if (!msys.count(name)) throw DataError("system_accuracy: metric lacks system " + name + " in " + lp);
    if (hsys.size() >= 2) any_pairs = true;
    for (auto a = hsys.begin(); a != hsys.end(); ++a) {
      for (auto b = std::next(a); b != hsys.end(); ++b) {
        const double dh = a->second - b->second;
        if (dh == 0.0) continue;
        const double dm = msys.at(a->first) - msys.at(b->first);
        ++total;
        if ((dh > 0 && dm > 0) || (dh < 0 && dm < 0)) ++agree;
      }
    }
  }
  if (metric.size() != human.size()) throw DataError("system_accuracy: language pair sets differ");
  if (!any_pairs) throw DataError("system_accuracy: no language pair has two systems");
  return safe_ratio(static_cast<double>(agree), static_cast<double>(total));
}

// ---------------------------------------------------------------------------
// Correlations

enum class KendallVariant { TauA, TauB };

inline KendallVariant parse_kendall_variant(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "b" || l == "tau-b" || l == "taub") return KendallVariant::TauB;
  if (l == "a" || l == "tau-a" || l == "taua") return KendallVariant::TauA;
  throw ConfigError("unknown Kendall variant '" + std::string(s) + "'");
}

namespace detail {

inline void check_paired(std::span<const double> x, std::span<const double> y, const char* who) {
  if (x.size() != y.size()) throw DataError(std::string(who) + ": length mismatch");
  if (x.size() < 2) throw DataError(std::string(who) + ": need at least 2 observations");
  for (std::size_t i = 0; i < x.size(); ++i)
    if (std::isnan(x[i]) || std::isnan(y[i])) throw DataError(std::string(who) + ": NaN input");
}

// Sum over tie groups of t(t-1)/2 in a sorted range.
template <class It, class Eq>
std::int64_t tied_pairs(It first, It last, Eq eq) {
  std::int64_t total = 0;
  while (first != last) {
    auto run_end = std::next(first);
    while (run_end != last && eq(*first, *run_end)) ++run_end;
    const auto t = static_cast<std::int64_t>(std::distance(first, run_end));
    total += t * (t - 1) / 2;
    first = run_end;
  }
  return total;
}

// Merge sort counting strict inversions.
inline std::int64_t count_inversions(std::vector<double>& v, std::vector<double>& buf, std::size_t lo,
                                     std::size_t hi) {
  if (hi - lo < 2) return 0;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::int64_t inv = count_inversions(v, buf, lo, mid) + count_inversions(v, buf, mid, hi);
  std::size_t i = lo, j = mid, k = lo;
  while (i < mid && j < hi) {
    if (v[j] < v[i]) {
      inv += static_cast<std::int64_t>(mid - i);
      buf[k++] = v[j++];
    } else {
      buf[k++] = v[i++];
    }
  }
  while (i < mid) buf[k++] = v[i++];
  while (j < hi) buf[k++] = v[j++];
  std::copy(buf.begin() + static_cast<std::ptrdiff_t>(lo), buf.begin() + static_cast<std::ptrdiff_t>(hi),
            v.begin() + static_cast<std::ptrdiff_t>(lo));
  return inv;
}

}  // namespace detail

struct KendallCounts {
  std::int64_t pairs = 0;      // n(n-1)/2
  std::int64_t tied_x = 0;     // pairs tied in x
  std::int64_t tied_y = 0;     // pairs tied in y
  std::int64_t tied_xy = 0;    // pairs tied in both
  std::int64_t concordant_minus_discordant = 0;
};

/// Knight's O(n log n) pair counting.
inline KendallCounts kendall_counts(std::span<const double> x, std::span<const double> y) {
  const std::size_t n = x.size();
  std::vector<std::pair<double, double>> xy(n);
  for (std::size_t i = 0; i < n; ++i) xy[i] = {x[i], y[i]};
  std::sort(xy.begin(), xy.end());

  KendallCounts c;
  c.pairs = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  c.tied_x = detail::tied_pairs(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a.first == b.first; });
  c.tied_xy = detail::tied_pairs(xy.begin(), xy.end(), [](const auto& a, const auto& b) { return a == b; });

  std::vector<double> ys(n), buf(n);
  for (std::size_t i = 0; i < n; ++i) ys[i] = xy[i].second;
  const std::int64_t swaps = detail::count_inversions(ys, buf, 0, n);  // leaves ys sorted
  c.tied_y = detail::tied_pairs(ys.begin(), ys.end(), [](double a, double b) { return a == b; });
  c.concordant_minus_discordant = c.pairs - c.tied_x - c.tied_y + c.tied_xy - 2 * swaps;
  return c;
}

/// Kendall's tau between paired observations; tau-b (tie corrected) by
/// default. Returns 0 when exactly one side is constant.
inline double kendall_tau(std::span<const double> gold, std::span<const double> pred,
                          KendallVariant variant = KendallVariant::TauB) {
  detail::check_paired(gold, pred, "kendall_tau");
  const auto c = kendall_counts(gold, pred);
  if (c.tied_x == c.pairs && c.tied_y == c.pairs) throw DataError("kendall_tau: both inputs are constant");
  const auto s = static_cast<double>(c.concordant_minus_discordant);
  if (variant == KendallVariant::TauA) return s / static_cast<double>(c.pairs);
  const double den = std::sqrt(static_cast<double>(c.pairs - c.tied_x)) * std::sqrt(static_cast<double>(c.pairs - c.tied_y));
  return den == 0.0 ? 0.0 : s / den;
}

/// Sample Pearson correlation.
inline double pearson(std::span<const double> gold, std::span<const double> pred) {
  detail::check_paired(gold, pred, "pearson");
  const double n = static_cast<double>(gold.size());
  const double mx = std::accumulate(gold.begin(), gold.end(), 0.0) / n;
  const double my = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    const double dx = gold[i] - mx, dy = pred[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("pearson: zero variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// Span metrics

/// One segment's annotations as seen by the span and category metrics.
struct AnnotatedSegment {
  int word_count = 0;
  std::vector<ErrorAnnotation> errors;
};

using AnnotationMap = std::map<SegmentKey, AnnotatedSegment>;

struct SpanCounts {
  long overlap = 0, pred_size = 0, gold_size = 0;
  long overlap_major = 0, pred_major = 0, gold_major = 0;
  long tp = 0, fp = 0, fn = 0, tn = 0;
};

struct SpanMetrics {
  double sp = 0, sr = 0, sf1 = 0;
  double mp = 0, mr = 0, mf1 = 0;
  double mcc = 0;
  SpanCounts counts;
};

/// Matthews correlation from a confusion matrix; 0 when undefined.
inline double matthews(long tp, long fp, long fn, long tn) {
  const double den = std::sqrt(static_cast<double>(tp + fp) * static_cast<double>(tp + fn) *
                               static_cast<double>(tn + fp) * static_cast<double>(tn + fn));
  if (den == 0.0) return 0.0;
  const double num = static_cast<double>(tp) * static_cast<double>(tn) - static_cast<double>(fp) * static_cast<double>(fn);
  return std::clamp(num / den, -1.0, 1.0);
}

namespace detail {

inline std::set<int> positions(const AnnotatedSegment& seg, bool major_only, const SegmentKey& key) {
  std::set<int> out;
  for (const auto& e : seg.errors) {
    if (major_only && e.severity != Severity::Major) continue;
    for (int w : e.word_span) {
      if (w < 1 || w > seg.word_count)
        throw DataError("span index " + std::to_string(w) + " outside 1.." + std::to_string(seg.word_count) +
                        " in " + to_string(key));
      out.insert(w);
    }
  }
  return out;
}

inline long intersection_size(const std::set<int>& a, const std::set<int>& b) {
  long n = 0;
  for (int x : a) n += b.count(x) ? 1 : 0;
  return n;
}

template <class A, class B>
void check_same_keys(const std::map<SegmentKey, A>& gold, const std::map<SegmentKey, B>& pred, const char* who) {
  bool same = gold.size() == pred.size();
  for (auto g = gold.begin(), p = pred.begin(); same && g != gold.end(); ++g, ++p) same = g->first == p->first;
  if (!same) throw DataError(std::string(who) + ": gold and prediction cover different segments");
}

}  // namespace detail

/// Corpus-level (micro) span precision/recall over union word-position sets,
/// the same restricted to major errors, and word-level MCC.
inline SpanMetrics span_metrics(const AnnotationMap& gold, const AnnotationMap& pred) {
  detail::check_same_keys(gold, pred, "span_metrics");
  SpanMetrics m;
  auto& c = m.counts;
  for (const auto& [key, g] : gold) {
    const auto& p = pred.at(key);
    if (p.word_count != g.word_count)
      throw DataError("span_metrics: word counts differ for " + to_string(key));
    const auto gs = detail::positions(g, false, key);
    const auto ps = detail::positions(p, false, key);
    const auto gm = detail::positions(g, true, key);
    const auto pm = detail::positions(p, true, key);
    const long ov = detail::intersection_size(gs, ps);
    c.overlap += ov;
    c.pred_size += static_cast<long>(ps.size());
    c.gold_size += static_cast<long>(gs.size());
    c.overlap_major += detail::intersection_size(gm, pm);
    c.pred_major += static_cast<long>(pm.size());
    c.gold_major += static_cast<long>(gm.size());
    c.tp += ov;
    c.fp += static_cast<long>(ps.size()) - ov;
    c.fn += static_cast<long>(gs.size()) - ov;
    c.tn += g.word_count - static_cast<long>(gs.size() + ps.size()) + ov;
  }
  m.sp = safe_ratio(static_cast<double>(c.overlap), static_cast<double>(c.pred_size));
  m.sr = safe_ratio(static_cast<double>(c.overlap), static_cast<double>(c.gold_size));
  m.sf1 = f1_score(m.sp, m.sr);
  m.mp = safe_ratio(static_cast<double>(c.overlap_major), static_cast<double>(c.pred_major));
  m.mr = safe_ratio(static_cast<double>(c.overlap_major), static_cast<double>(c.gold_major));
  m.mf1 = f1_score(m.mp, m.mr);
  m.mcc = matthews(c.tp, c.fp, c.fn, c.tn);
  return m;
}

// ---------------------------------------------------------------------------
// Category metrics

struct CategoryScore {
  double p = 0, r = 0, f1 = 0;
  long matched = 0, predicted = 0, gold = 0;
};

struct CategoryMetrics {
  std::map<Category, CategoryScore> per_category;
};

/// Position-agnostic category precision/recall with min-count numerators.
/// A segment with an empty annotation list contributes one `no-error`
/// occurrence to that side.
inline CategoryMetrics category_metrics(const AnnotationMap& gold, const AnnotationMap& pred) {
  detail::check_same_keys(gold, pred, "category_metrics");
  CategoryMetrics out;
  for (auto c : kAllCategories) out.per_category[c];
  auto count = [](const AnnotatedSegment& s) {
    std::map<Category, long> n;
    if (s.errors.empty()) n[Category::NoError] = 1;
    for (const auto& e : s.errors) ++n[e.category.canonical];
    return n;
  };
  for (const auto& [key, g] : gold) {
    const auto gc = count(g);
    const auto pc = count(pred.at(key));
    for (auto c : kAllCategories) {
      const long ng = gc.count(c) ? gc.at(c) : 0;
      const long np = pc.count(c) ? pc.at(c) : 0;
      auto& s = out.per_category[c];
      s.gold += ng;
      s.predicted += np;
      s.matched += std::min(ng, np);
    }
  }
  for (auto& [c, s] : out.per_category) {
    s.p = safe_ratio(static_cast<double>(s.matched), static_cast<double>(s.predicted));
    s.r = safe_ratio(static_cast<double>(s.matched), static_cast<double>(s.gold));
    s.f1 = f1_score(s.p, s.r);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Shapley attribution of the source and reference fields

struct ShapleyResult {
  double src = 0;
  double ref = 0;
  double t = 0, st = 0, rt = 0, srt = 0;
};

/// Two-player Shapley values over the four input modes.
inline ShapleyResult shapley(const std::map<InputMode, double>& scores) {
  for (auto m : kAllModes)
    if (!scores.count(m)) throw DataError("shapley: missing score for mode " + std::string(to_string(m)));
  ShapleyResult r;
  r.t = scores.at(InputMode::T);
  r.st = scores.at(InputMode::ST);
  r.rt = scores.at(InputMode::RT);
  r.srt = scores.at(InputMode::SRT);
  r.src = ((r.st - r.t) + (r.srt - r.rt)) / 2.0;
  r.ref = ((r.rt - r.t) + (r.srt - r.st)) / 2.0;
  return r;
}

// ---------------------------------------------------------------------------
// PERM-BOTH significance test

enum class SigTarget { Tau, Pearson, Accuracy };

constexpr std::string_view to_string(SigTarget t) {
  switch (t) {
    case SigTarget::Tau: return "tau";
    case SigTarget::Pearson: return "pearson";
    case SigTarget::Accuracy: return "accuracy";
  }
  return "?";
}

inline SigTarget parse_sig_target(std::string_view s) {
  const auto l = text::ascii_lower(text::trim(s));
  if (l == "tau" || l == "kendall") return SigTarget::Tau;
  if (l == "pearson" || l == "rho") return SigTarget::Pearson;
  if (l == "accuracy" || l == "acc") return SigTarget::Accuracy;
  throw ConfigError("unknown significance target '" + std::string(s) + "'");
}

struct SignificanceResult {
  double p_value = 1.0;
  double statistic = 0.0;  // target(gold, a) - target(gold, b)
  int n_resamples = 0;
  double alpha = 0.05;
  bool significant = false;
};

struct PermOptions {
  SigTarget target = SigTarget::Tau;
  int n_resamples = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

using KeyedScores = std::map<SegmentKey, double>;

/// Paired permutation test: each resample swaps the two metrics' values
/// per segment (per system for accuracy, after averaging) with probability
/// 1/2. Two-sided, p = (1 + #{|d_r| >= |d_obs|}) / (n + 1). Resample r uses
/// its own generator stream derived from (seed, r), so results do not
/// depend on the thread count.
inline SignificanceResult perm_both_test(const KeyedScores& a, const KeyedScores& b, const KeyedScores& gold,
                                         const PermOptions& opt = {}) {
  detail::check_same_keys(gold, a, "perm_both_test");
  detail::check_same_keys(gold, b, "perm_both_test");
  if (opt.n_resamples < 100) throw ConfigError("perm_both_test: need at least 100 resamples");

  // Units that get swapped: segments, or systems for accuracy.
  std::vector<double> ua, ub;
  std::function<double(const std::vector<double>&)> stat;
  std::vector<double> g;
  SystemScores human;
  std::vector<std::pair<std::string, std::string>> system_ids;

  if (opt.target == SigTarget::Accuracy) {
    auto to_scores = [](const KeyedScores& m) {
      std::vector<SegmentScore> v;
      for (const auto& [k, x] : m) v.push_back({k, x, ScoreKind::Mqm});
      return system_scores(v).scores;
    };
    human = to_scores(gold);
    const auto sa = to_scores(a);
    const auto sb = to_scores(b);
    for (const auto& [lp, systems] : human)
      for (const auto& [sys, v] : systems) {
        system_ids.emplace_back(lp, sys);
        ua.push_back(sa.at(lp).at(sys));
        ub.push_back(sb.at(lp).at(sys));
      }
    stat = [&](const std::vector<double>& m) {
      SystemScores ms;
      for (std::size_t i = 0; i < m.size(); ++i) ms[system_ids[i].first][system_ids[i].second] = m[i];
      return system_accuracy(human, ms);
    };
  } else {
    for (const auto& [k, v] : gold) {
      g.push_back(v);
      ua.push_back(a.at(k));
      ub.push_back(b.at(k));
    }
    if (opt.target == SigTarget::Tau) stat = [&](const std::vector<double>& m) { return kendall_tau(g, m); };
    else stat = [&](const std::vector<double>& m) { return pearson(g, m); };
  }

  SignificanceResult res;
  res.n_resamples = opt.n_resamples;
  res.alpha = opt.alpha;
  res.statistic = stat(ua) - stat(ub);  // degenerate inputs throw here
  const double observed = std::abs(res.statistic);

  auto safe_stat = [&](const std::vector<double>& m) {
    try {
      return stat(m);
    } catch (const DataError&) {
      return 0.0;  // a resample can turn constant; it carries no correlation
    }
  };
  std::vector<char> exceeds(static_cast<std::size_t>(opt.n_resamples), 0);
  auto run = [&](int begin, int end) {
    std::vector<double> xa(ua.size()), xb(ub.size());
    for (int r = begin; r < end; ++r) {
      Rng rng(opt.seed, static_cast<std::uint64_t>(r));
      for (std::size_t i = 0; i < ua.size(); ++i) {
        const bool swap = rng.coin();
        xa[i] = swap ? ub[i] : ua[i];
        xb[i] = swap ? ua[i] : ub[i];
      }
      const double d = std::abs(safe_stat(xa) - safe_stat(xb));
      exceeds[static_cast<std::size_t>(r)] = d >= observed - 1e-12 ? 1 : 0;
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(opt.threads, static_cast<unsigned>(opt.n_resamples)));
  if (threads == 1) {
    run(0, opt.n_resamples);
  } else {
    std::vector<std::thread> pool;
    const int chunk = (opt.n_resamples + static_cast<int>(threads) - 1) / static_cast<int>(threads);
    for (unsigned t = 0; t < threads; ++t) {
      const int lo = static_cast<int>(t) * chunk;
      const int hi = std::min(opt.n_resamples, lo + chunk);
      if (lo < hi) pool.emplace_back(run, lo, hi);
    }
    for (auto& th : pool) th.join();
  }
  const long hits = std::count(exceeds.begin(), exceeds.end(), 1);
  res.p_value = static_cast<double>(hits + 1) / static_cast<double>(opt.n_resamples + 1);
  res.significant = res.p_value < res.alpha;
  return res;
}

// ---------------------------------------------------------------------------
// Critical error detection

struct CriticalErrorResult {
  double sp = 0, sr = 0, sf1 = 0;
  double accuracy = 0;
  long segments = 0;
  long detected = 0;
};

/// `gold` must hold exactly one (critical) error per segment. A segment
/// counts as detected when the predicted word positions cover the whole
/// gold span.
inline CriticalErrorResult critical_error_eval(const AnnotationMap& gold, const AnnotationMap& pred) {
  detail::check_same_keys(gold, pred, "critical_error_eval");
  for (const auto& [key, g] : gold)
    if (g.errors.size() != 1)
      throw DataError("critical_error_eval: " + to_string(key) + " has " + std::to_string(g.errors.size()) +
                      " gold critical spans, expected exactly 1");
  const auto spans = span_metrics(gold, pred);
  CriticalErrorResult r;
  r.sp = spans.sp;
  r.sr = spans.sr;
  r.sf1 = spans.sf1;
  for (const auto& [key, g] : gold) {
    const auto gs = detail::positions(g, false, key);
    const auto ps = detail::positions(pred.at(key), false, key);
    ++r.segments;
    if (!gs.empty() && std::includes(ps.begin(), ps.end(), gs.begin(), gs.end())) ++r.detected;
  }
  r.accuracy = safe_ratio(static_cast<double>(r.detected), static_cast<double>(r.segments));
  return r;
}

}  // namespace mqmeval
