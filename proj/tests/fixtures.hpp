#pragma once

// In-memory segment builders shared by the unit tests.

#include <string>
#include <vector>

#include "mqmeval/corpus.hpp"

namespace fixture {

inline mqmeval::ErrorAnnotation error(mqmeval::Severity sev, std::string category, std::string span,
                                      std::vector<int> words) {
  mqmeval::ErrorAnnotation e;
  e.severity = sev;
  e.category = mqmeval::CategoryLabel::from_raw(category);
  e.span_text = std::move(span);
  e.word_span = std::move(words);
  return e;
}

inline mqmeval::ErrorAnnotation major(std::vector<int> words = {1}) {
  return error(mqmeval::Severity::Major, "accuracy", "x", std::move(words));
}

inline mqmeval::ErrorAnnotation minor(std::vector<int> words = {1}) {
  return error(mqmeval::Severity::Minor, "fluency", "x", std::move(words));
}

inline mqmeval::Segment segment(std::string lp, std::string system, int seg_id,
                                std::vector<mqmeval::ErrorAnnotation> errors = {},
                                std::string translation = "w1 w2 w3 w4 w5 w6") {
  mqmeval::Segment s;
  s.lp = mqmeval::LanguagePair::from_code(lp);
  s.system_id = std::move(system);
  s.doc_id = "doc";
  s.seg_id = seg_id;
  s.source = "source " + std::to_string(seg_id);
  s.reference = "reference " + std::to_string(seg_id);
  s.translation = std::move(translation);
  s.gold_errors = std::move(errors);
  s.gold_score = mqmeval::mqm_score(s.gold_errors);
  return s;
}

}  // namespace fixture
