#pragma once

// Shared access to the hand-written prompt fixtures in data/golden.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mqmeval/corpus.hpp"

namespace golden {

inline std::filesystem::path dir() { return std::filesystem::path(MQMEVAL_TEST_DATA) / "golden"; }

inline std::string read(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline mqmeval::Segment segment() { return *mqmeval::load_corpus(dir() / "segment.jsonl").corpus.begin(); }

/// Demonstrations in file order (also key order for this fixture).
inline std::vector<mqmeval::Segment> demos() {
  const auto c = mqmeval::load_corpus(dir() / "demos.jsonl").corpus;
  return {c.begin(), c.end()};
}

inline std::string expected(std::string_view stem, mqmeval::InputMode mode) {
  return read(dir() / (std::string(stem) + "_" + std::string(mqmeval::to_string(mode)) + ".txt"));
}

/// Renders one template/mode; stems are gemba-sqm, automqm-0 and automqm-4.
inline std::string render(std::string_view stem, mqmeval::InputMode mode) {
  using namespace mqmeval;
  const auto seg = segment();
  if (stem == "gemba-sqm") return render_gemba_sqm(seg, mode).text;
  const auto d = demos();
  if (stem == "automqm-0") return render_automqm(seg, mode, {}).text;
  return render_automqm(seg, mode, d).text;
}

inline const std::vector<std::string>& stems() {
  static const std::vector<std::string> s{"gemba-sqm", "automqm-0", "automqm-4"};
  return s;
}

}  // namespace golden
