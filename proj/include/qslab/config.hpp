#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qslab/errors.hpp"

namespace qslab {

/// Parsed experiment description. The config format is a flat, sectioned
/// key-value text file; unknown sections or keys are hard errors.
struct ExperimentConfig {
  std::string kind = "solve";  // solve | ladder | inequalities | classify | dual
  std::uint64_t seed = 1;

  // [model]
  double T = 1.0;
  int N = 8;
  int branching = 2;
  bool recombining = false;

  // [coefficient]
  std::string coefficient = "q";
  std::vector<double> coefficient_params;

  // [terminal]  linear-W(lambda) | abs-W(lambda) | constant(c) | bounded-clip(B)
  std::string terminal = "linear-W";
  std::vector<double> terminal_params{1.0};

  // [structure]
  double l = 0.0;
  double c = 0.0;
  double delta = 1.0;

  // [scheme]
  std::string method = "implicit";  // explicit | implicit
  double tol = 1e-12;
  int max_iters = 100;

  // [run]
  std::vector<double> n_list{1.0, 2.0, 4.0, 8.0, 16.0, 32.0};
  std::vector<double> p_list{1.0, 1.5, 2.0};
  std::string out;
  std::string format = "csv";  // csv | jsonl
  int threads = 1;
  std::int64_t node_budget = std::int64_t(1) << 22;
  int garsia_seeds = 1000;
  int dual_densities = 1000;
  int dual_points = 8;
  int instances = 200;

  /// Canonical text round-trip of the effective configuration.
  std::string echo() const;
};

/// Parse errors carry the line and field in the message.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

}  // namespace qslab
