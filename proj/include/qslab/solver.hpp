#pragma once

#include <optional>
#include <vector>

#include "qslab/coefficients.hpp"
#include "qslab/lattice.hpp"
#include "qslab/transforms.hpp"

namespace qslab {

enum class Scheme { Explicit, Implicit, Oracle };

/// Problem description: terminal data, driver, structure forcing and clock.
/// For driver_dim d > 1 the model must have 2^d uniform branches; coordinate i
/// of the martingale driver moves by +-sqrt(dt) according to bit i of the
/// branch index.
struct BSDESpec {
  ModelPtr model;
  Coefficient coefficient;
  std::vector<double> terminal;
  StructureParams structure;
  AdaptedProcess clock;        // K, default K_t = t
  int driver_dim = 1;
  std::vector<double> gamma;   // per-coordinate clock weights, default 1

  static BSDESpec make(ModelPtr model, Coefficient coefficient, std::vector<double> terminal);
};

struct SolverDiagnostics {
  Scheme scheme = Scheme::Explicit;
  int max_inner_iterations = 0;
  double max_defect = 0.0;       // worst one-step relation defect
  double orthogonal_h2 = 0.0;    // H2 size of the part of M not spanned by the driver
};

struct BSDESolution {
  AdaptedProcess Y;
  std::vector<AdaptedProcess> Z;  // per coordinate; the value at (k, node) is predictable
  AdaptedProcess V;               // undefined if path-dependent on a recombining layout
  AdaptedProcess M;
  AdaptedProcess QV;
  SolverDiagnostics diagnostics;
};

BSDESolution solve_backward(const BSDESpec& spec, Scheme scheme, double tol = 1e-12,
                            int max_inner_iters = 100);

/// Exact solution of the saturated driver (delta/2)|z|^2: Y is the entropic
/// process of the terminal data, decomposed on the lattice.
BSDESolution solve_entropic_oracle(const std::vector<double>& xi, double delta,
                                   const ModelPtr& model);

struct PicardResult {
  BSDESolution solution;
  std::vector<double> trace;  // sup-norm distances between successive sweeps
};

/// Fixed-point iteration freezing (Y, Z) inside g; needs a declared Lipschitz
/// constant and throws ConvergenceError when the sweep budget runs out.
PicardResult picard_solve(const BSDESpec& spec, double tol = 1e-12, int max_iters = 200);

struct ResidualReport {
  double max_defect = 0.0;
  std::vector<double> per_step;  // worst node defect per time step
  double total_defect = 0.0;     // sum of per-step worst defects
  double kappa_excess = 0.0;     // max |g| - kappa at visited points
};

/// Recomputes the one-step relation from the stored (Y, Z); `as_scheme`
/// overrides the solution's own convention (for cross-scheme order checks).
ResidualReport residual_check(const BSDESolution& solution, const BSDESpec& spec,
                              std::optional<Scheme> as_scheme = std::nullopt);

}  // namespace qslab
