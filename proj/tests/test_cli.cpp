#include "doctest.h"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "qslab/config.hpp"
#include "qslab/report.hpp"
#include "qslab/runner.hpp"

using namespace qslab;

namespace {

const char* kLadderConfig = R"cfg(
kind = ladder
seed = 42

[model]
T = 1.0
N = 10
branching = 2
recombining = false

[coefficient]
name = q

[terminal]
name = linear-W
params = 1.0

[scheme]
method = implicit

[run]
n_list = 1,2,4,8,16,32
p_list = 1,1.5,2
)cfg";

}  // namespace

TEST_CASE("config parsing and diagnostics") {
  auto cfg = parse_config_text(kLadderConfig);
  CHECK(cfg.kind == "ladder");
  CHECK(cfg.seed == 42);
  CHECK(cfg.N == 10);
  CHECK(cfg.coefficient == "q");
  CHECK(cfg.terminal_params == std::vector<double>{1.0});
  CHECK(cfg.n_list == std::vector<double>{1, 2, 4, 8, 16, 32});

  // Unknown keys are hard errors with the line number.
  try {
    parse_config_text("kind = solve\n[model]\nT = 1\nwhat = 3\n");
    FAIL("expected a parse error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    CHECK(std::string(e.what()).find("what") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_text("kind = nope\n"), Error);
  CHECK_THROWS_AS(parse_config_text("[model]\nN = abc\n"), Error);
  CHECK_THROWS_AS(parse_config_text("[weird]\nx = 1\n"), Error);

  // Echo round-trips through the parser to the same effective config.
  auto cfg2 = parse_config_text(cfg.echo());
  CHECK(cfg2.echo() == cfg.echo());
}

TEST_CASE("terminal registry") {
  auto m = build_model(1.0, 2, 2);
  auto lin = build_terminal(m, "linear-W", {2.0});
  CHECK(lin[0] == doctest::Approx(2.0 * std::sqrt(2.0)).epsilon(1e-14));
  auto ab = build_terminal(m, "abs-W", {-1.0});
  for (double v : ab) CHECK(v >= 0.0);
  auto cst = build_terminal(m, "constant", {0.7});
  for (double v : cst) CHECK(v == 0.7);
  auto clip = build_terminal(m, "bounded-clip", {1.0});
  for (double v : clip) CHECK(std::abs(v) <= 1.0);
  CHECK_THROWS_AS(build_terminal(m, "nope", {}), Error);
}

TEST_CASE("run_experiment: ladder bundle passes and is deterministic") {
  auto cfg = parse_config_text(kLadderConfig);
  auto bundle = run_experiment(cfg);
  CHECK(bundle.all_pass());
  CHECK(!bundle.rows.empty());

  auto again = run_experiment(cfg);
  CHECK(to_csv(bundle) == to_csv(again));
  CHECK(to_jsonl(bundle) == to_jsonl(again));
}

TEST_CASE("run_experiment: node budget diagnostic") {
  auto cfg = parse_config_text("kind = solve\n[model]\nN = 30\n");
  try {
    run_experiment(cfg);
    FAIL("expected a node budget error");
  } catch (const NodeBudgetError& e) {
    CHECK(std::string(e.what()).find("node budget") != std::string::npos);
  }
}

TEST_CASE("run_experiment: inequalities and classify pass") {
  auto cfg = parse_config_text(
      "kind = inequalities\nseed = 7\n[model]\nN = 6\n[terminal]\nparams = 1.0\n"
      "[run]\ngarsia_seeds = 50\ndual_densities = 100\n");
  auto bundle = run_experiment(cfg);
  CHECK(bundle.all_pass());

  auto cfg2 = parse_config_text("kind = classify\nseed = 3\n[model]\nN = 8\n"
                                "[run]\ninstances = 40\n");
  auto bundle2 = run_experiment(cfg2);
  CHECK(bundle2.all_pass());

  auto cfg3 = parse_config_text("kind = dual\nseed = 11\n[run]\ndual_densities = 200\n");
  auto bundle3 = run_experiment(cfg3);
  CHECK(bundle3.all_pass());
}

TEST_CASE("emit_report: csv schema, jsonl round trip, meta sidecar") {
  auto cfg = parse_config_text("kind = dual\nseed = 5\n");
  auto bundle = run_experiment(cfg);

  const std::string base = (std::filesystem::temp_directory_path() / "qslab_test_report").string();
  emit_report(bundle, "csv", base);
  emit_report(bundle, "jsonl", base);

  std::ifstream csv(base + ".csv");
  REQUIRE(csv.good());
  std::string header;
  std::getline(csv, header);
  CHECK(header == "experiment_id,check_name,n_or_p,left,right,margin,pass");

  // Empty bundle: header only.
  ReportBundle empty;
  CHECK(to_csv(empty) == "experiment_id,check_name,n_or_p,left,right,margin,pass\n");

  // JSON-lines reparse reconstructs the margins bit-exactly.
  std::ifstream jl(base + ".jsonl");
  REQUIRE(jl.good());
  std::string line;
  std::size_t idx = 0;
  while (std::getline(jl, line)) {
    auto obj = nlohmann::json::parse(line);
    REQUIRE(idx < bundle.rows.size());
    CHECK(obj["check_name"].get<std::string>() == bundle.rows[idx].check_name);
    CHECK(obj["margin"].get<double>() == bundle.rows[idx].margin);
    CHECK(obj["left"].get<double>() == bundle.rows[idx].left);
    ++idx;
  }
  CHECK(idx == bundle.rows.size());

  std::ifstream meta(base + ".meta.json");
  REQUIRE(meta.good());
  std::string meta_line;
  std::getline(meta, meta_line);
  auto mobj = nlohmann::json::parse(meta_line);
  CHECK(mobj.contains("timestamp"));
  CHECK(mobj.contains("config"));

  std::remove((base + ".csv").c_str());
  std::remove((base + ".jsonl").c_str());
  std::remove((base + ".meta.json").c_str());
}

TEST_CASE("fmt17 round-trips doubles") {
  Rng rng(77);
  for (int i = 0; i < 1000; ++i) {
    const double x = (rng.uniform() - 0.5) * std::pow(10.0, rng.uniform(-12.0, 12.0));
    CHECK(std::stod(fmt17(x)) == x);
  }
}
