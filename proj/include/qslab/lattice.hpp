#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "qslab/errors.hpp"
#include "qslab/rng.hpp"

namespace qslab {

using NodeIndex = std::int64_t;

struct ModelOptions {
  std::vector<double> increments;     // per-branch step increments; empty = default +/-sqrt(T/N)
  std::vector<double> probabilities;  // per-branch probabilities; empty = uniform
  std::int64_t node_budget = std::int64_t(1) << 22;
};

// Exact finite filtration on a b-ary tree over [0, T] with N steps.
//
// Non-recombining layout: the F_k-atoms at step k are the b^k length-k branch
// words, indexed path-lexicographically (most significant digit = first step).
// Recombining layout (binary, for path-independent workloads only): step k
// holds k+1 nodes indexed by up-move count.
//
// All expectations on the lattice are exact weighted sums; the summation
// order over branches and paths is fixed (lexicographic) so every result is
// bit-deterministic.
class LatticeModel {
public:
  static std::shared_ptr<const LatticeModel> build(double T, int N, int branching = 2,
                                                   bool recombining = false,
                                                   const ModelOptions& opts = {});

  double horizon() const { return T_; }
  int steps() const { return N_; }
  int branching() const { return b_; }
  bool recombining() const { return recombining_; }
  double dt() const { return dt_; }
  double time_at(int k) const { return dt_ * k; }

  const std::vector<double>& increments() const { return increments_; }
  const std::vector<double>& probabilities() const { return probabilities_; }

  NodeIndex level_size(int k) const;
  NodeIndex level_offset(int k) const { return level_offset_[k]; }
  NodeIndex node_count() const { return level_offset_[N_ + 1]; }
  NodeIndex node_id(int k, NodeIndex idx) const { return level_offset_[k] + idx; }

  /// Child of node (k, idx) along branch j.
  NodeIndex child_index([[maybe_unused]] int k, NodeIndex idx, int j) const {
    return recombining_ ? idx + (j == 0 ? 1 : 0) : idx * b_ + j;
  }

  /// Node at step k on the path to terminal node `terminal_idx` (non-recombining).
  NodeIndex ancestor_on_path(NodeIndex terminal_idx, int k) const;

  /// P(path to terminal node), product of branch probabilities.
  double path_weight(NodeIndex terminal_idx) const;

  /// Driver value W at (k, idx); the path sum of increments.
  double driver_value(int k, NodeIndex idx) const;

  std::int64_t path_count() const { return level_size(N_); }  // non-recombining: b^N

private:
  LatticeModel() = default;

  double T_ = 1.0;
  int N_ = 1;
  int b_ = 2;
  bool recombining_ = false;
  double dt_ = 1.0;
  std::vector<double> increments_;
  std::vector<double> probabilities_;
  std::vector<NodeIndex> level_offset_;
};

using ModelPtr = std::shared_ptr<const LatticeModel>;

/// Node-indexed real process; value at a node depends only on the path to it.
class AdaptedProcess {
public:
  AdaptedProcess() = default;
  AdaptedProcess(ModelPtr model, std::vector<double> values);

  static AdaptedProcess constant(ModelPtr model, double c);
  static AdaptedProcess zero(ModelPtr model) { return constant(std::move(model), 0.0); }
  /// Deterministic process from per-step values.
  static AdaptedProcess from_steps(ModelPtr model, const std::vector<double>& step_values);
  /// The driver walk W itself.
  static AdaptedProcess driver(ModelPtr model);

  const ModelPtr& model() const { return model_; }
  double at(int k, NodeIndex idx) const { return values_[model_->node_id(k, idx)]; }
  double& at(int k, NodeIndex idx) { return values_[model_->node_id(k, idx)]; }
  double root() const { return values_[0]; }
  std::span<const double> level(int k) const;
  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }
  std::vector<double> terminal() const;

  bool defined() const { return model_ != nullptr; }

private:
  ModelPtr model_;
  std::vector<double> values_;
};

/// Additive Doob decomposition S = S0 - V + M with predictable V and QV.
struct Decomposition {
  double initial = 0.0;
  AdaptedProcess martingale;  // M, M0 = 0
  AdaptedProcess drift;       // V, predictable increments, V0 = 0
  AdaptedProcess qv;          // <M>, predictable increments, QV0 = 0
  // Sub-ulp rounding compensation making reconstruct() bit-exact.
  AdaptedProcess residual;
};

/// Multiplicative decomposition S = S0 * exp(A) * E, E the one-step
/// conditional-mean-one product factor.
struct MultiplicativeDecomposition {
  AdaptedProcess factor;    // E, E0 = 1
  AdaptedProcess exponent;  // A, A0 = 0
};

/// Node-flagged stopping rule; a path stops at its first flagged node, or N.
class StoppingTime {
public:
  StoppingTime(ModelPtr model, std::vector<std::uint8_t> flags);

  static StoppingTime deterministic(ModelPtr model, int step);
  /// First step where |X| >= level, else N.
  static StoppingTime hitting(const AdaptedProcess& X, double level);

  const ModelPtr& model() const { return model_; }
  bool flagged(int k, NodeIndex idx) const { return flags_[model_->node_id(k, idx)] != 0; }
  /// Stop step along the path to a terminal node (non-recombining).
  int stop_step(NodeIndex terminal_idx) const;

  /// Pathwise min / max of two rules (valid stopping times again).
  static StoppingTime pathwise_min(const StoppingTime& a, const StoppingTime& b);
  static StoppingTime pathwise_max(const StoppingTime& a, const StoppingTime& b);

private:
  ModelPtr model_;
  std::vector<std::uint8_t> flags_;
};

struct StoppingSpec {
  std::vector<int> deterministic_steps;
  const AdaptedProcess* level_process = nullptr;  // defaults to |driver|
  std::vector<double> levels;                     // explicit hitting levels
  int count = 0;                                  // seeded random hitting levels
  std::uint64_t seed = 0;
};

struct SubmartingaleReport {
  bool verdict = false;
  int worst_step = -1;
  NodeIndex worst_node = -1;
  double worst_defect = 0.0;  // most negative one-step drift
};

enum class NormKind { Sp, Hp, TV, BMO };

// -- Operations ---------------------------------------------------------------

ModelPtr build_model(double T, int N, int branching = 2, bool recombining = false,
                     const ModelOptions& opts = {});

/// E[X_from | F_k] for all k <= from; values at steps > from copy X.
AdaptedProcess conditional_expectation(const AdaptedProcess& X, int from, int k);
/// Martingale closure of terminal values: E[xi | F_k] at every step.
AdaptedProcess conditional_expectation(ModelPtr model, const std::vector<double>& terminal_values);

Decomposition doob_decompose(const AdaptedProcess& S);
/// Reconstructs S from its decomposition; bit-equal to the input.
AdaptedProcess reconstruct(const Decomposition& dec, const ModelPtr& model);

MultiplicativeDecomposition multiplicative_decompose(const AdaptedProcess& S);

/// Predictable quadratic variation of a martingale (increments checked
/// conditionally centered to `tol`).
AdaptedProcess predictable_qv(const AdaptedProcess& M, double tol = 1e-10);

/// Pathwise running maximum from step `from`; absolute value by default.
AdaptedProcess running_max(const AdaptedProcess& X, int from = 0, bool absolute = true);

double process_norm(const AdaptedProcess& X, NormKind kind, double p = 1.0);

std::vector<StoppingTime> sample_stopping_times(const ModelPtr& model, const StoppingSpec& spec);

SubmartingaleReport is_submartingale(const AdaptedProcess& S, double tol = 0.0);

// -- Path utilities (non-recombining only) ------------------------------------

/// Calls fn(terminal_idx, weight) for every path, lexicographically.
void for_each_path(const LatticeModel& model,
                   const std::function<void(NodeIndex, double)>& fn);

/// Exact E[f(path)] where f reads any per-step values along the path.
double path_expectation(const LatticeModel& model,
                        const std::function<double(NodeIndex)>& f);

/// Cumulative process X with X_0 = x0 and X_{k+1} = X_k + dX(k, node at k)
/// where the increment over (k, k+1] is attached to the step-k node.
/// On recombining models the accumulated values must agree across paths.
AdaptedProcess accumulate_predictable(const ModelPtr& model, double x0,
                                      const std::function<double(int, NodeIndex)>& increment);

/// E[X_tau | F_sigma] evaluated at every sigma-node: returns pairs of
/// (value at sigma, conditional expectation) per path; used by optional
/// sampling style checks. X_tau is read pathwise at the tau stop node.
struct OptionalSamplingCheck {
  double max_abs_gap = 0.0;
};
OptionalSamplingCheck optional_sampling_check(const AdaptedProcess& M, const StoppingTime& sigma,
                                              const StoppingTime& tau);

}  // namespace qslab
