#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fixtures.hpp"
#include "golden.hpp"
#include "mqmeval/pipeline.hpp"
#include "stubs.hpp"

using namespace mqmeval;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("mqmeval_pipeline_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

// Two systems over five sources; every translation is distinct so a stub
// model can recover the segment from the prompt.
std::vector<Segment> small_corpus() {
  std::vector<Segment> out;
  for (int sys = 0; sys < 2; ++sys)
    for (int id = 1; id <= 5; ++id) {
      std::vector<ErrorAnnotation> errors;
      if (id % 2 == sys % 2) errors.push_back(fixture::error(Severity::Major, "accuracy/mistranslation", "eins", {2}));
      if (id > 3) errors.push_back(fixture::error(Severity::Minor, "fluency/grammar", "zwei", {3}));
      const std::string text = "s" + std::to_string(sys) + " eins zwei drei satz" + std::to_string(id);
      out.push_back(fixture::segment("en-de", "sys" + std::to_string(sys), id, errors, text));
    }
  return out;
}

fs::path write_corpus(const fs::path& dir, const std::vector<Segment>& segments) {
  const auto path = dir / "corpus.jsonl";
  std::ofstream out(path);
  write_corpus_jsonl(Corpus(segments), out);
  return path;
}

Settings base_settings(const fs::path& dir, const fs::path& corpus) {
  Settings s;
  s.set("corpus", corpus.string());
  s.set("out_dir", (dir / "out").string());
  s.set("model", "stub-model");
  s.set("replay_dir", (dir / "replay").string());
  return s;
}

// Answers every AutoMQM prompt with the gold errors of its segment.
stub::CallbackTransport::Handler oracle_handler(const std::vector<Segment>& segments) {
  return [segments](const std::string&, const nlohmann::json& body) {
    const auto prompt = body.at("messages").at(0).at("content").get<std::string>();
    const auto pos = prompt.rfind("German translation: \"");
    for (const auto& s : segments)
      if (pos != std::string::npos && prompt.compare(pos + 21, s.translation.size() + 1, s.translation + "\"") == 0)
        return HttpResponse{200, stub::chat_reply(render_error_line(s.gold_errors)).dump(), {}};
    return HttpResponse{500, "unknown segment", {}};
  };
}

}  // namespace

TEST(CmdPrompt, OnePromptPerSegmentAndMode) {
  const auto dir = scratch("prompt");
  auto s = base_settings(dir, write_corpus(dir, small_corpus()));
  s.set("modes", "T,S-R-T");
  std::ostringstream log;
  const auto items = pipeline::cmd_prompt(make_run_config(s), log);
  EXPECT_EQ(items.size(), 20u);
  const auto first = slurp(dir / "out" / "prompts.jsonl");
  long lines = std::count(first.begin(), first.end(), '\n');
  EXPECT_EQ(lines, 20);
  pipeline::cmd_prompt(make_run_config(s), log);
  EXPECT_EQ(slurp(dir / "out" / "prompts.jsonl"), first);
}

TEST(CmdPrompt, MatchesGoldenPrompts) {
  const auto dir = scratch("prompt_golden");
  auto s = base_settings(dir, golden::dir() / "segment.jsonl");
  s.set("template", "gemba-sqm");
  std::ostringstream log;
  const auto items = pipeline::cmd_prompt(make_run_config(s), log);
  ASSERT_EQ(items.size(), 4u);
  for (const auto& it : items) EXPECT_EQ(it.prompt.text, golden::expected("gemba-sqm", it.prompt.mode));
}

TEST(CmdRun, ResumesFromStoreAndReplaysOffline) {
  const auto dir = scratch("run");
  auto s = base_settings(dir, write_corpus(dir, small_corpus()));
  std::ostringstream log;

  auto live = std::make_shared<stub::CallbackTransport>(stub::default_handler);
  const auto first = pipeline::cmd_run(make_run_config(s), log, live);
  EXPECT_EQ(first.records.size(), 40u);
  EXPECT_EQ(live->calls.load(), 40);
  EXPECT_EQ(first.network_calls, 40);
  for (const auto& r : first.records) EXPECT_EQ(r.raw_output, "Score: 90");

  // A second record-mode run is fully served by the store.
  auto again = std::make_shared<stub::CallbackTransport>(stub::default_handler);
  const auto second = pipeline::cmd_run(make_run_config(s), log, again);
  EXPECT_EQ(again->calls.load(), 0);
  EXPECT_EQ(second.network_calls, 0);

  s.set("replay", "replay");
  auto offline = std::make_shared<stub::FailingTransport>();
  const auto third = pipeline::cmd_run(make_run_config(s), log, offline);
  EXPECT_EQ(offline->calls.load(), 0);
  ASSERT_EQ(third.records.size(), first.records.size());
  for (std::size_t i = 0; i < third.records.size(); ++i) {
    EXPECT_EQ(third.records[i].key, first.records[i].key);
    EXPECT_EQ(third.records[i].raw_output, first.records[i].raw_output);
  }
  EXPECT_EQ(third.usage.prompt_tokens, first.usage.prompt_tokens);
  EXPECT_EQ(third.usage.completion_tokens, first.usage.completion_tokens);
  EXPECT_EQ(pipeline::read_records(dir / "out" / "records.jsonl").size(), 40u);
}

TEST(CmdRun, StrictReplayMissIsAGatewayError) {
  const auto dir = scratch("run_miss");
  auto s = base_settings(dir, write_corpus(dir, small_corpus()));
  fs::create_directories(dir / "replay");
  s.set("replay", "replay");
  std::ostringstream log;
  EXPECT_THROW(pipeline::cmd_run(make_run_config(s), log, std::make_shared<stub::FailingTransport>()), GatewayError);
}

TEST(CmdMetaeval, PerfectAnnotatorScoresPerfectly) {
  const auto dir = scratch("metaeval");
  const auto segments = small_corpus();
  auto s = base_settings(dir, write_corpus(dir, segments));
  s.set("template", "automqm");
  s.set("demo_k", "0");
  s.set("n_resamples", "200");
  std::ostringstream log;
  auto transport = std::make_shared<stub::CallbackTransport>(oracle_handler(segments));
  pipeline::cmd_run(make_run_config(s), log, transport);
  const auto rep = pipeline::cmd_report(make_run_config(s), log);

  ASSERT_TRUE(rep.has_spans);
  ASSERT_TRUE(rep.has_shapley);
  EXPECT_EQ(rep.cols.front().label, "Acc");
  for (auto m : kAllModes) {
    EXPECT_DOUBLE_EQ(rep.values.at(m).front(), 1.0) << to_string(m);
    EXPECT_EQ(rep.evaluation.by_mode.at(m).failed, 0);
  }
  for (const auto& row : rep.spans.rows) {
    EXPECT_DOUBLE_EQ(std::get<report::Number>(row[3]).value, 1.0);  // SF1
    EXPECT_DOUBLE_EQ(std::get<report::Number>(row[7]).value, 1.0);  // MCC
  }
  // Identical predictions in every mode: nothing is significantly best and
  // neither input contributes.
  EXPECT_TRUE(rep.starred.empty());
  for (const auto& row : rep.shapley_table.rows) {
    EXPECT_NEAR(std::get<report::Number>(row[1]).value, 0.0, 1e-12);
    EXPECT_NEAR(std::get<report::Number>(row[2]).value, 0.0, 1e-12);
  }
  for (const char* f : {"report.md", "correlation.md", "correlation.tsv", "shapley.tsv", "significance.tsv",
                        "spans.tsv", "categories.tsv", "system_scores.tsv", "usage.tsv"})
    EXPECT_TRUE(fs::exists(dir / "out" / f)) << f;
}

TEST(CmdShapley, GivenScores) {
  const auto dir = scratch("shapley");
  Settings s;
  s.set("out_dir", dir.string());
  s.set("shapley_scores", "T=0.759,S-T=0.876,R-T=0.891,S-R-T=0.876");
  std::ostringstream log;
  const auto t = pipeline::cmd_shapley(make_run_config(s), log);
  ASSERT_EQ(t.rows.size(), 1u);
  EXPECT_NEAR(std::get<report::Number>(t.rows[0][1]).value, 0.051, 5e-4 + 1e-12);
  EXPECT_NEAR(std::get<report::Number>(t.rows[0][2]).value, 0.066, 5e-4 + 1e-12);
  s.set("shapley_scores", "T=0.7,S-T=0.8");
  EXPECT_THROW(pipeline::cmd_shapley(make_run_config(s), log), ConfigError);
}

// ---------------------------------------------------------------------------
// Command-line exit codes

namespace {

int cli(const std::string& args, const fs::path& dir) {
  const std::string cmd = std::string(MQMEVAL_CLI) + " " + args + " > " + (dir / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(Cli, ExitCodes) {
  const auto dir = scratch("cli");
  const auto corpus = write_corpus(dir, small_corpus());
  const std::string common = " --corpus " + corpus.string() + " --out_dir " + (dir / "out").string();

  EXPECT_EQ(cli("--help", dir), 0);
  EXPECT_EQ(cli("prompt" + common, dir), 0);
  EXPECT_TRUE(fs::exists(dir / "out" / "prompts.jsonl"));

  EXPECT_EQ(cli("frobnicate", dir), 1);
  EXPECT_EQ(cli("prompt --config " + (dir / "missing.conf").string(), dir), 1);
  EXPECT_EQ(cli("prompt --modes X-Y" + common, dir), 1);
  EXPECT_EQ(cli("run" + common, dir), 1);  // no model

  { std::ofstream(dir / "bad.jsonl") << "{not json\n"; }
  EXPECT_EQ(cli("prompt --corpus " + (dir / "bad.jsonl").string() + " --out_dir " + (dir / "out").string(), dir), 2);

  fs::create_directories(dir / "empty_store");
  EXPECT_EQ(cli("run --model m --replay replay --replay_dir " + (dir / "empty_store").string() + common, dir), 3);
  EXPECT_NE(slurp(dir / "cli.log").find("replay miss"), std::string::npos);
}

TEST(Cli, EndToEndReplay) {
  const fs::path data = fs::path(MQMEVAL_TEST_DATA) / "e2e";
  const auto dir = scratch("cli_e2e");
  const std::string args = "report --config " + (data / "e2e.conf").string() + " --corpus " +
                           (data / "corpus.jsonl").string() + " --demo_pool " + (data / "demos.jsonl").string() +
                           " --replay_dir " + (data / "replay").string() + " --out_dir " + dir.string();
  // report needs records: run first against the store only.
  ASSERT_EQ(cli("run" + args.substr(6), dir), 0) << slurp(dir / "cli.log");
  EXPECT_NE(slurp(dir / "cli.log").find("(0 network calls)"), std::string::npos);
  ASSERT_EQ(cli(args, dir), 0) << slurp(dir / "cli.log");
  const auto md = slurp(dir / "report.md");
  for (const char* title : {"Shapley values", "Span meta-evaluation", "Category meta-evaluation", "System-level",
                            "Token usage", "En-De"})
    EXPECT_NE(md.find(title), std::string::npos) << title;
}
