#pragma once

// Random span instances shared by the unit tests and the acceptance gate.

#include <vector>

#include "mqmeval/metaeval.hpp"
#include "mqmeval/random.hpp"
#include "oracles.hpp"

namespace testgen {

struct SpanInstance {
  mqmeval::AnnotationMap gold, pred;
  std::vector<oracle::Spans> gold_oracle, pred_oracle;
};

/// 1-4 segments, each with <= 10 words and <= 3 spans per side.
inline SpanInstance random_spans(mqmeval::Rng& rng) {
  using namespace mqmeval;
  SpanInstance inst;
  const auto n_segments = 1 + rng.below(4);
  for (std::uint64_t s = 0; s < n_segments; ++s) {
    const int words = 1 + static_cast<int>(rng.below(10));
    const SegmentKey key{"xx-yy", "sys", static_cast<int>(s)};
    for (int side = 0; side < 2; ++side) {
      AnnotatedSegment seg{words, {}};
      oracle::Spans o{words, {}};
      const auto n_spans = rng.below(4);
      for (std::uint64_t k = 0; k < n_spans; ++k) {
        const int begin = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(words)));
        const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(words - begin + 1)));
        std::vector<int> idx;
        for (int w = begin; w < begin + len; ++w) idx.push_back(w);
        const bool major = rng.coin();
        ErrorAnnotation e;
        e.severity = major ? Severity::Major : Severity::Minor;
        e.word_span = idx;
        seg.errors.push_back(e);
        o.spans.emplace_back(major, idx);
      }
      (side == 0 ? inst.gold : inst.pred)[key] = seg;
      (side == 0 ? inst.gold_oracle : inst.pred_oracle).push_back(o);
    }
  }
  return inst;
}

}  // namespace testgen
