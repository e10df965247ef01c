#pragma once

#include <cstdint>
#include <vector>

#include "qslab/lattice.hpp"

namespace qslab {

/// The forcing triple (Lambda, C, delta) of the structure bound
/// (1/delta) dLambda + |Y| dC + (delta/2) d<M>.
struct StructureParams {
  AdaptedProcess lambda;  // increasing, Lambda_0 = 0
  AdaptedProcess growth;  // C, increasing, C_0 = 0
  double delta = 1.0;

  static StructureParams zero(const ModelPtr& model);
  /// Constant rates: Lambda_t = l t, C_t = c t.
  static StructureParams from_rates(const ModelPtr& model, double l, double c, double delta = 1.0);

  void validate() const;
};

/// rho_k = (1/delta) ln E[exp(delta xi) | F_k]; exp(delta rho) is an exact
/// lattice martingale.
struct EntropicProcess {
  AdaptedProcess rho;
  double delta = 1.0;
};

/// Dominating family phi_{k,N} indexed by (terminal path, step); the discrete
/// backward recursion phi_k = dLambda_{k+1} + exp(dC_{k+1}) phi_{k+1} with
/// terminal datum eta >= 0. Decreasing in k along every path.
struct PathEnvelope {
  ModelPtr model;
  std::vector<std::vector<double>> phi;  // [terminal index][step]
};

/// Values attached to the (random) node sigma of a stopping time.
struct StoppedValues {
  std::vector<double> value;          // by node id; meaningful where defined
  std::vector<std::uint8_t> defined;  // 1 where sigma can stop
};

struct ClassifyReport {
  // Exact Doob-decomposition check of the structure inequality.
  bool structure_ok = false;
  double structure_margin = 0.0;  // most negative slack
  int structure_step = -1;
  NodeIndex structure_node = -1;
  // Advisory exponential-submartingale check, with its O(dt^2) tolerance.
  bool exp_ok = false;
  double exp_tol = 0.0;
  double exp_worst = 0.0;    // most negative normalized one-step drift of U+/-
  double exp_defect = 0.0;   // sum over steps of the worst normalized violation
};

struct BandViolation {
  std::size_t pair = 0;
  int step = -1;
  NodeIndex node = -1;
  double amount = 0.0;
};

struct BandReport {
  bool ok = false;
  double worst_margin = 0.0;  // min over all checks of (bound - value) slack
  std::vector<BandViolation> violations;
};

struct MembershipReport {
  bool member = false;
  double margin = 0.0;  // minimum slack of rho_sigma(...) - |Y_sigma|
  int worst_step = -1;
  NodeIndex worst_node = -1;
};

// -- Operations -----------------------------------------------------------------

EntropicProcess entropic_process(const ModelPtr& model, const std::vector<double>& xi,
                                 double delta = 1.0);

/// rho_sigma(xi) at a stopping time, by exact conditional log-sum-exp over the
/// paths through each sigma node.
StoppedValues entropic_at(const StoppingTime& sigma, const std::vector<double>& xi,
                          double delta = 1.0);

PathEnvelope phi_envelope(const ModelPtr& model, const std::vector<double>& eta,
                          const StructureParams& params);

/// Optional projection Phi_k = E[exp(phi_{k,N}) | F_k]; an exact lattice
/// supermartingale with Phi_N = exp(eta).
AdaptedProcess phi_projection(const std::vector<double>& eta, const StructureParams& params);

/// Phi at a stopping time sigma (values grouped per sigma node).
StoppedValues phi_projection_at(const StoppingTime& sigma, const std::vector<double>& eta,
                                const StructureParams& params);

/// One-step constancy defect of exp(phi) + sum exp(phi)(dLambda + phi dC).
struct EnvelopeConstancy {
  double max_step_defect = 0.0;
  double total_defect = 0.0;  // max over paths of summed |one-step defects|
};
EnvelopeConstancy phi_u_constancy(const PathEnvelope& env, const StructureParams& params);

/// X_k = Y_k + Lambda_k + sum_{j<k} |Y_j| dC_{j+1}.
AdaptedProcess x_transform(const AdaptedProcess& Y, const StructureParams& params);

/// Xbar_k = exp(C_k)|Y_k| + sum_{j<k} exp(C_j) dLambda_{j+1}; nonnegative.
AdaptedProcess xbar_transform(const AdaptedProcess& Y, const StructureParams& params);

/// U_k = exp(s Y_k) + sum_{j<k} exp(s Y_j)(dLambda_{j+1} + |Y_j| dC_{j+1}).
AdaptedProcess u_transform(const AdaptedProcess& Y, const StructureParams& params, int sign);

/// Dual verdicts: the exact structure check from the Doob decomposition and
/// the advisory exponential-submartingale criterion on U(e^{+-delta Y}).
ClassifyReport classify_quadratic(const AdaptedProcess& Y, const StructureParams& params,
                                  double tol = 1e-12);

/// Checks -rho_sigma(-X_tau) <= X_sigma <= rho_sigma(X_tau) on each pair.
BandReport check_entropic_band(const AdaptedProcess& X, double delta,
                               const std::vector<std::pair<StoppingTime, StoppingTime>>& pairs,
                               double tol = 1e-10);

/// Class membership |Y_sigma| <= rho_sigma(exp(C_{sigma,N})|eta| + integral)
/// at the tested stopping times; requires |eta| >= |Y_N| terminally.
MembershipReport check_sq_membership(const AdaptedProcess& Y, const std::vector<double>& eta,
                                     const StructureParams& params,
                                     const std::vector<StoppingTime>& stops, double tol = 1e-12);

/// Default stopping battery: every deterministic step plus `extra` seeded
/// hitting times of |driver|.
std::vector<StoppingTime> default_battery(const ModelPtr& model, std::uint64_t seed,
                                          int extra = 8);

/// All ordered pairs (pathwise min, pathwise max) over a battery.
std::vector<std::pair<StoppingTime, StoppingTime>> battery_pairs(
    const std::vector<StoppingTime>& battery);

// -- Seeded instance generators ----------------------------------------------------

/// A quadratic semimartingale with a known ground-truth label: dM = theta dW
/// with theta in [0.3, 1], dV = beta * bound with |beta| <= 1 (true instance)
/// or inflated well beyond the bound at one seeded node (violator).
struct StructureInstance {
  AdaptedProcess Y;
  StructureParams params;
  bool is_quadratic = false;
  int violation_step = -1;
  NodeIndex violation_node = -1;
};
StructureInstance sample_structure_instance(const ModelPtr& model, std::uint64_t seed,
                                            bool violate);

/// Saturated instance from smooth deterministic profiles theta(t), beta = 1;
/// refining the lattice keeps the same continuous data, so the advisory
/// exponential defect scales as O(dt) total.
AdaptedProcess saturated_profile_instance(const ModelPtr& model, std::uint64_t seed);

/// Exact discrete entropic-band instance: dY = theta dW - c_k with
/// c_k = alpha_k * lncosh(theta sqrt(dt)), |alpha| <= 1, which makes both
/// exp(Y) and exp(-Y) exact lattice submartingales (the discrete form of the
/// saturation-profile construction).
AdaptedProcess sample_entropic_saturated(const ModelPtr& model, std::uint64_t seed);

}  // namespace qslab
