// Command-line front end. Exit codes: 0 success, 1 usage/config error,
// 2 data error, 3 gateway error.

#include <iostream>
#include <map>
#include <string>

#include "CLI11.hpp"
#include "mqmeval/mqmeval.hpp"

namespace {

using mqmeval::RunConfig;

void run_command(const std::string& name, const RunConfig& cfg) {
  namespace p = mqmeval::pipeline;
  auto& log = std::cout;
  if (name == "ingest") p::cmd_ingest(cfg, log);
  else if (name == "sample") p::cmd_sample(cfg, log);
  else if (name == "prompt") p::cmd_prompt(cfg, log);
  else if (name == "run") p::cmd_run(cfg, log);
  else if (name == "parse") p::cmd_parse(cfg, log);
  else if (name == "score") p::cmd_score(cfg, log);
  else if (name == "metaeval") p::cmd_metaeval(cfg, log);
  else if (name == "shapley") p::cmd_shapley(cfg, log);
  else if (name == "sigtest") p::cmd_sigtest(cfg, log);
  else if (name == "sft-build") p::cmd_sft_build(cfg, log);
  else if (name == "ced-eval") p::cmd_ced_eval(cfg, log);
  else if (name == "report") p::cmd_report(cfg, log);
  else throw mqmeval::ConfigError("unknown command '" + name + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MT evaluation meta-evaluation harness"};
  app.name("mqmeval");
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "flat key = value config file")->check(CLI::ExistingFile);
  std::map<std::string, std::string> flags;
  std::map<std::string, CLI::Option*> options;
  for (const auto& key : mqmeval::config_keys()) {
    std::string help = key.help;
    if (key.default_value) help += std::string(" [") + key.default_value + "]";
    options[key.name] = app.add_option(std::string("--") + key.name, flags[key.name], help);
  }

  const std::vector<std::pair<const char*, const char*>> commands{
      {"ingest", "load a corpus and write it as native JSONL"},
      {"sample", "filter by reference quality and sample the test set and demonstrations"},
      {"prompt", "render one prompt per (segment, mode)"},
      {"run", "send prompts to the model (or replay store) and write records"},
      {"parse", "parse model outputs and report failures"},
      {"score", "derive per-segment metric scores"},
      {"metaeval", "accuracy, correlations, spans, categories, Shapley and significance"},
      {"shapley", "Shapley values of source and reference"},
      {"sigtest", "PERM-BOTH tests between the best mode and the others"},
      {"sft-build", "build the instruction-tuning set"},
      {"ced-eval", "critical error detection metrics"},
      {"report", "write the full report suite"},
  };
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    mqmeval::Settings settings;
    if (!config_path.empty()) settings.load_file(config_path);
    for (const auto& [key, opt] : options)
      if (opt->count()) settings.set(key, flags[key]);
    const auto cfg = mqmeval::make_run_config(settings);
    run_command(app.get_subcommands().front()->get_name(), cfg);
    return 0;
  } catch (const mqmeval::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const mqmeval::GatewayError& e) {
    std::cerr << "gateway error: " << e.what() << '\n';
    return 3;
  } catch (const mqmeval::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
