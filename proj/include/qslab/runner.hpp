#pragma once

#include "qslab/config.hpp"
#include "qslab/lattice.hpp"
#include "qslab/report.hpp"

namespace qslab {

/// Terminal-data registry: "linear-W", "abs-W", "constant", "bounded-clip".
std::vector<double> build_terminal(const ModelPtr& model, const std::string& name,
                                   const std::vector<double>& params);

/// Dispatches one experiment; throws on invalid configs, budget violations or
/// solver non-convergence, with the failing stage in the message.
ReportBundle run_experiment(const ExperimentConfig& cfg);

}  // namespace qslab
