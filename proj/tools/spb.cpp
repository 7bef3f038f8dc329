#include <csignal>
#include <iostream>

#include <CLI11.hpp>

#include "spb/cli.hpp"

namespace {

extern "C" void on_interrupt(int) { spb::cli::stop_flag().store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-preference bias measurement for LLM judges"};
  app.require_subcommand(1);
  app.fallthrough();

  spb::cli::GlobalFlags flags;
  std::string config, out;
  std::uint64_t seed = 0;
  app.add_option("--config", config, "Run config (JSON)");
  app.add_option("--out", out, "Output directory (overrides the config)");
  app.add_flag("--deterministic", flags.deterministic, "Omit timestamps so reruns are byte-identical");
  app.add_flag("--dry-run", flags.dry_run, "Render prompts without calling any endpoint");
  auto* seed_opt = app.add_option("--seed", seed, "RNG seed (simulator, retry jitter)");

  using Command = int (*)(const spb::cli::RunConfig&, std::ostream&);
  const std::pair<const char*, Command> commands[] = {
      {"judge", spb::cli::cmd_judge},
      {"verify", spb::cli::cmd_verify},
      {"metrics", spb::cli::cmd_metrics},
      {"analyze", spb::cli::cmd_analyze},
      {"simulate", spb::cli::cmd_simulate},
  };
  const char* help[] = {
      "Run judges over generator outputs and append to the verdict log",
      "Build the reference from programmatic verifiers",
      "Per-judge accuracy, overestimation and HSPP reports",
      "Committee, agreement sweep, delta matrix and slice reports",
      "Generate a synthetic judge population and a recovery report",
  };
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < std::size(commands); ++i) subs.push_back(app.add_subcommand(commands[i].first, help[i]));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : static_cast<int>(spb::ExitCode::config);
  }

  if (!config.empty()) flags.config = config;
  if (!out.empty()) flags.out = out;
  if (seed_opt->count()) flags.seed = seed;

  std::signal(SIGINT, on_interrupt);
  std::signal(SIGTERM, on_interrupt);
  try {
    const auto cfg = spb::cli::load_config(flags);
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return commands[i].second(cfg, std::cout);
  } catch (const spb::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(spb::ExitCode::data);
  }
  return 0;
}
