// Regenerates tests/data/e2e: a 40-segment corpus (2 language pairs x 4
// systems x 5 sources), a demonstration pool, a replay store primed with
// simulated AutoMQM answers for all four input modes, and a run config.
//
// usage: make_e2e_fixture <tests/data/e2e>

#include <filesystem>
#include <iostream>
#include <sstream>

#include "mqmeval/pipeline.hpp"
#include "stubs.hpp"

using namespace mqmeval;
namespace fs = std::filesystem;

namespace {

struct Source {
  std::string source;
  std::string reference;
};

struct PairData {
  std::string code;
  std::vector<Source> sources;
  std::vector<std::string> vocabulary;  // substitutes for mistranslated words
};

const std::vector<PairData>& pairs() {
  static const std::vector<PairData> kPairs{
      {"en-de",
       {{"The committee approved the new budget on Monday.", "Der Ausschuss genehmigte am Montag den neuen Haushalt."},
        {"Our train was delayed by almost two hours.", "Unser Zug hatte fast zwei Stunden Verspätung."},
        {"Please keep your ticket until the end of the trip.", "Bitte behalten Sie Ihre Fahrkarte bis zum Ende der Reise."},
        {"The museum opens again after a long renovation.", "Das Museum öffnet nach einer langen Renovierung wieder."},
        {"She bought fresh bread at the small bakery.", "Sie kaufte frisches Brot in der kleinen Bäckerei."}},
       {"Bank", "gestern", "Wagen", "rot", "laufen", "Fenster", "immer", "schnell"}},
      {"zh-en",
       {{"委员会周一批准了新预算。", "The committee approved the new budget on Monday."},
        {"我们的火车晚点了将近两个小时。", "Our train was delayed by almost two hours."},
        {"请保留车票直到旅程结束。", "Please keep your ticket until the end of the journey."},
        {"博物馆在长期翻修后重新开放。", "The museum reopens after a long renovation."},
        {"她在小面包店买了新鲜面包。", "She bought fresh bread at the small bakery."}},
       {"river", "yesterday", "car", "red", "walk", "window", "always", "quickly"}},
  };
  return kPairs;
}

const std::vector<std::string> kCategories{"accuracy/mistranslation", "fluency/grammar", "terminology/inappropriate",
                                           "style/awkward"};

// System s substitutes roughly s words; the substitutions are its gold errors.
Segment make_segment(const PairData& lp, std::size_t src, int system, Rng& rng) {
  Segment seg;
  seg.lp = LanguagePair::from_code(lp.code);
  seg.system_id = std::string("sys") + static_cast<char>('A' + system);
  seg.doc_id = "doc" + std::to_string(src / 3 + 1);
  seg.seg_id = static_cast<int>(src) + 1;
  seg.source = lp.sources[src].source;
  seg.reference = lp.sources[src].reference;
  auto words = text::split(*seg.reference, ' ');
  std::set<std::size_t> changed;
  const auto n_errors = static_cast<std::size_t>(system) + rng.below(2) - (system > 0 ? rng.below(2) : 0);
  while (changed.size() < std::min(n_errors, words.size() - 1)) changed.insert(rng.below(words.size()));
  for (auto i : changed) words[i] = lp.vocabulary[rng.below(lp.vocabulary.size())];
  for (std::size_t i = 0; i < words.size(); ++i) seg.translation += (i ? " " : "") + words[i];
  for (auto i : changed) {
    ErrorAnnotation e;
    e.severity = rng.below(3) == 0 ? Severity::Minor : Severity::Major;
    if (system == 1) e.severity = Severity::Minor;
    e.category = CategoryLabel::from_raw(kCategories[rng.below(kCategories.size())]);
    e.span_text = words[i];
    e.word_span = {static_cast<int>(i) + 1};
    seg.gold_errors.push_back(e);
  }
  seg.gold_score = mqm_score(seg.gold_errors);
  return seg;
}

std::string quoted_after(const std::string& text, const std::string& label) {
  const auto pos = text.rfind(label);
  if (pos == std::string::npos) return {};
  const auto begin = pos + label.size();
  return text.substr(begin, text.find("\"\n", begin) == std::string::npos ? std::string::npos
                                                                           : text.find("\"\n", begin) - begin);
}

// How well the simulated annotator does in each mode.
double skill(const std::string& prompt) {
  if (prompt.rfind("Based on the given source and reference", 0) == 0) return 0.8;
  if (prompt.rfind("Based on the given reference", 0) == 0) return 0.85;
  if (prompt.rfind("Based on the given source", 0) == 0) return 0.6;
  return 0.5;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_e2e_fixture <output dir>\n";
    return 1;
  }
  const fs::path dir = argv[1];
  fs::remove_all(dir / "replay");
  fs::create_directories(dir);

  Rng rng(2024);
  std::vector<Segment> segments, pool;
  for (const auto& lp : pairs())
    for (std::size_t s = 0; s < lp.sources.size(); ++s)
      for (int system = 0; system < 4; ++system) segments.push_back(make_segment(lp, s, system, rng));
  const Corpus corpus(segments);

  // Demonstration pool: other seg ids so no test segment leaks into a prompt.
  for (const auto& lp : pairs())
    for (std::size_t s = 0; s < lp.sources.size(); ++s)
      for (int system : {0, 1, 2}) {
        auto d = make_segment(lp, s, system, rng);
        d.seg_id += 100;
        pool.push_back(d);
      }
  {
    std::ofstream out(dir / "corpus.jsonl");
    write_corpus_jsonl(corpus, out);
    std::ofstream demos(dir / "demos.jsonl");
    write_corpus_jsonl(Corpus(pool), demos);
  }

  std::map<std::pair<std::string, std::string>, const Segment*> by_translation;
  for (const auto& s : corpus) by_translation[{s.lp.target_lang, s.translation}] = &s;

  // Simulated annotator: keeps each gold error with a mode-dependent
  // probability and sometimes adds a spurious minor error.
  auto handler = [&](const std::string&, const nlohmann::json& body) {
    const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    const Segment* seg = nullptr;
    for (const auto& lang : {"German", "English"}) {
      auto t = quoted_after(prompt, std::string(lang) + " translation: \"");
      if (auto it = by_translation.find({lang, t}); it != by_translation.end()) seg = it->second;
    }
    if (!seg) throw std::runtime_error("fixture transport: unknown segment in prompt");
    Rng r(std::stoull(sha256_hex(prompt).substr(0, 15), nullptr, 16));
    const double q = skill(prompt);
    std::string answer;
    if (r.uniform() < 0.03) {
      answer = "I am not able to judge this translation.";
    } else {
      std::vector<ErrorAnnotation> out;
      for (const auto& e : seg->gold_errors) {
        if (r.uniform() > q) continue;
        auto copy = e;
        if (r.uniform() > q) copy.severity = copy.severity == Severity::Major ? Severity::Minor : Severity::Major;
        out.push_back(copy);
      }
      if (r.uniform() > q) {
        const auto words = text::split(seg->translation, ' ');
        ErrorAnnotation spurious;
        spurious.severity = Severity::Minor;
        spurious.category = CategoryLabel::from_raw("fluency");
        spurious.span_text = words[r.below(words.size())];
        out.push_back(spurious);
      }
      answer = render_error_line(out);
    }
    const auto reply = stub::chat_reply(answer, text::word_count(prompt), text::word_count(answer) + 1);
    return HttpResponse{200, reply.dump(), {}};
  };

  const std::string conf =
      "# End-to-end fixture: AutoMQM over all four modes, served from the replay store.\n"
      "corpus = tests/data/e2e/corpus.jsonl\n"
      "demo_pool = tests/data/e2e/demos.jsonl\n"
      "replay_dir = tests/data/e2e/replay\n"
      "replay = replay\n"
      "template = automqm\n"
      "modes = T,S-T,R-T,S-R-T\n"
      "model = fixture-model\n"
      "demo_k = 4\n"
      "demo_seed = 7\n"
      "seed = 11\n"
      "n_resamples = 1000\n"
      "price_prompt_per_1k = 0.0015\n"
      "price_completion_per_1k = 0.002\n"
      "out_dir = out/e2e\n";
  { std::ofstream(dir / "e2e.conf") << conf; }

  Settings s;
  s.load_file(dir / "e2e.conf");
  s.set("corpus", (dir / "corpus.jsonl").string());
  s.set("demo_pool", (dir / "demos.jsonl").string());
  s.set("replay_dir", (dir / "replay").string());
  s.set("replay", "record");
  s.set("out_dir", (fs::temp_directory_path() / "mqmeval_fixture_out").string());
  const auto cfg = make_run_config(s);
  auto transport = std::make_shared<stub::CallbackTransport>(handler);
  const auto run = pipeline::cmd_run(cfg, std::cout, transport);
  std::cout << "primed " << run.records.size() << " transcripts in " << (dir / "replay").string() << '\n';
  return 0;
}
