// Experiment runner: parses a config, dispatches the workload, and emits
// machine-readable reports. Exit status 0 iff every check passed.

#include <cstdlib>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "qslab/config.hpp"
#include "qslab/report.hpp"
#include "qslab/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"qslab - quadratic semimartingale laboratory"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::string format;
  std::int64_t node_budget = -1;
  int threads = -1;
  long long seed = -1;

  auto* run = app.add_subcommand("run", "run an experiment config");
  run->add_option("config", config_path, "path to the experiment config")->required();
  run->add_option("--seed", seed, "override the config seed");
  run->add_option("--out", out_dir, "output directory (default $QSLAB_OUT or config)");
  run->add_option("--format", format, "csv or jsonl")
      ->check(CLI::IsMember({"csv", "jsonl"}));
  run->add_option("--threads", threads, "parallel ladder solves");
  run->add_option("--node-budget", node_budget, "non-recombining leaf budget");

  CLI11_PARSE(app, argc, argv);

  qslab::ExperimentConfig cfg;
  try {
    cfg = qslab::parse_config_file(config_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }

  try {
    if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
    if (!format.empty()) cfg.format = format;
    if (threads > 0) cfg.threads = threads;
    if (node_budget > 0) cfg.node_budget = node_budget;

    std::string out = cfg.out;
    if (!out_dir.empty()) {
      out = out_dir + "/" + cfg.kind;
    } else if (out.empty()) {
      if (const char* env = std::getenv("QSLAB_OUT")) out = std::string(env) + "/" + cfg.kind;
    }

    qslab::ReportBundle bundle = qslab::run_experiment(cfg);
    if (!out.empty()) {
      qslab::emit_report(bundle, cfg.format, out);
      std::cout << "wrote " << out << (cfg.format == "jsonl" ? ".jsonl" : ".csv") << "\n";
    } else {
      std::cout << qslab::to_csv(bundle);
    }

    if (!bundle.all_pass()) {
      std::cerr << "FAIL:";
      for (const auto& r : bundle.rows)
        if (!r.pass) std::cerr << " " << r.check_name;
      std::cerr << "\n";
      return 1;
    }
    return 0;
  } catch (const std::exception& e) {
    // Budget violations, solver non-convergence, unwritable outputs.
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
