#pragma once

#include <vector>

#include "qslab/coefficients.hpp"
#include "qslab/solver.hpp"
#include "qslab/transforms.hpp"

namespace qslab {

/// Solutions of BSDE(g_n, xi) along a regularization ladder, with the shared
/// problem data and the dominating terminal variable eta.
struct ApproximationRun {
  RegularizationLadder ladder;
  std::vector<BSDESolution> solutions;
  BSDESpec spec;               // coefficient = the base driver g
  std::vector<double> eta;
  std::vector<StoppingTime> battery;
};

/// Solves the ladder BSDEs (implicit scheme by default), verifying that every
/// member stays in the entropic class of eta and that the ladder is monotone
/// node-wise under the implicit scheme.
ApproximationRun run_ladder(const BSDESpec& spec, const std::vector<double>& eta,
                            const std::vector<double>& n_list, Scheme scheme = Scheme::Implicit,
                            const GridSpec& grid = {}, int threads = 1,
                            std::uint64_t battery_seed = 1);

struct PairDistance {
  double index_lo = 0.0, index_hi = 0.0;  // the two ladder indices
  double sup = 0.0;                       // max-node |Y^i - Y^j|
  double h1 = 0.0;                        // E[<M^i - M^j>^{1/2}]
  double h1_upper = 0.0;                  // (E[<M^i - M^j>])^{1/2} >= h1
  std::vector<double> h2p;                // E[<M^ij>^p]^{1/(2p)} per requested p
  double bmo = 0.0;
  double s1_drift = 0.0;                  // E[max |V^i - V^j|]
  bool exact = false;                     // identical solutions
};

struct ConvergenceReport {
  std::vector<double> p_list;
  std::vector<PairDistance> pairs;  // consecutive ladder pairs
  double z_bound = 0.0;             // max-node |Z| of the last solution
  int tail_start = -1;              // first index with n >= z_bound
  bool tail_exact = false;          // all tail pairs have distance exactly 0
};

ConvergenceReport convergence_report(const ApproximationRun& run,
                                     const std::vector<double>& p_list = {1.0});

struct QvEstimatesReport {
  bool pass = false;
  double margin_conditional = 0.0;     // (a) Phi_sigma - E[<M>_{sigma,N}|F_sigma]/2
  std::vector<double> margin_qv_p;     // (b) (2p)^p E[e^{p Xbar}] - E[<M>_N^p]
  std::vector<double> margin_tv_p;     // (c) same bound against E[|V|_N^p]
  double margin_bmo = 0.0;             // (d) 2 sup Phi - BMO^2
};

/// Exact checks of the quadratic-variation and total-variation estimates for a
/// solution dominated by eta; requires class membership first.
QvEstimatesReport qv_estimates_check(const BSDESolution& solution,
                                     const std::vector<double>& eta,
                                     const StructureParams& params,
                                     const std::vector<double>& p_list,
                                     const std::vector<StoppingTime>& stops);

struct CoefficientLimitReport {
  std::vector<double> residuals;  // max-node |g_n(., Y^n, Z^n) - g(., Y, Z)| per member
  bool growth_ok = false;         // |g_n(., Y^n, Z^n)| <= kappa(., Y^n, Z^n) everywhere
  double growth_margin = 0.0;
};

CoefficientLimitReport coefficient_limit_check(const ApproximationRun& run);

}  // namespace qslab
