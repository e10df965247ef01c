#pragma once

#include <string>
#include <vector>

#include "qslab/lattice.hpp"

namespace qslab {

/// One inequality evaluation. For one-sided checks margin = right - left; for
/// equality checks margin = tol*scale - |right - left|. In both conventions
/// pass <=> margin >= -1e-10 * scale with scale = max(1, |left|, |right|).
struct InequalityReport {
  std::string name;
  double left = 0.0;
  double right = 0.0;
  double margin = 0.0;
  bool pass = false;
  std::string instance;
};

InequalityReport make_report(std::string name, double left, double right, std::string instance,
                             bool equality = false, double tol = 1e-12);

/// Discrete exponential martingale of M: the product of one-step ratios
/// exp(dM) / E[exp(dM) | F_k]; L_0 = 1 and E[L_{k+1} | F_k] = L_k exactly.
AdaptedProcess exponential_martingale(const AdaptedProcess& M);

/// Doob L log L consequences for L = exponential_martingale(M), plus the
/// change-of-measure identity computed along two routes:
///   llogl-doob           E(L ln L)        <= E(max L) - 1
///   llogl-max-upper      E(max L) - 1     <= E(L ln max L)   (exact per step)
///   llogl-entropy-upper  E(L ln L)        <= E(L ln max L)
///   llogl-girsanov       E(L ln L) equals the Q-compensator route to 1e-12
/// The defect of llogl-max-upper is the lattice version of the continuous
/// identity E(max L) - 1 = E(L ln max L).
std::vector<InequalityReport> llogl_identity_check(const AdaptedProcess& M);

/// E(max L) - 1 - ln E(max L) <= E(L ln L) for a positive martingale, L_0 = 1.
InequalityReport harremoes_check(const AdaptedProcess& L);

/// Deterministic coarse-to-fine search for a two-step counterexample over
/// one-step ratio boxes; returns the minimal margin found (>= 0 if none).
struct AdversarialSearchResult {
  double min_margin = 0.0;
  std::vector<double> worst_params;
};
AdversarialSearchResult harremoes_adversarial_search(int stages = 3, int points_per_axis = 20);

/// Submartingale variant with u_m(x) = x - m - m ln x, m = E(U_N):
///   u_m(E(max U)) - u_m(U_0) <= E(U ln U) - E(U) ln E(U) = H^ent(U_N),
/// plus the derived bound E(max U) <= u_m^{-1}(u_m(U_0) + H^ent) by bisection.
std::vector<InequalityReport> um_submartingale_check(const AdaptedProcess& U);

/// Garsia-Neveu: if E[A_N - A_sigma | F_sigma] <= E[U 1_{sigma<N} | F_sigma]
/// at the tested stopping times then E[A_N^p] <= p^p E[U^p] for p >= 1.
struct GarsiaNeveuReport {
  bool premise_ok = false;
  double premise_margin = 0.0;  // min over sigma nodes
  std::vector<InequalityReport> conclusions;  // one per p, empty if premise fails
};
GarsiaNeveuReport garsia_neveu_check(const AdaptedProcess& A, const std::vector<double>& U,
                                     const std::vector<double>& p_list,
                                     const std::vector<StoppingTime>& stops);

/// psi_p(z) = z^p (p != 1), psi_1(z) = z ln z - z + 1.
double psi_p(double z, double p);

/// S^p data for an entropic submartingale X: the norms of exp(X) and of its
/// multiplicative martingale factor, and the psi_p moment of exp(X_N).
struct PsiReport {
  double sp_exp = 0.0;
  double sp_factor = 0.0;
  double psi_moment = 0.0;
};
PsiReport maximal_psi_check(const AdaptedProcess& X, double p);

/// Variational form of the entropic value on a finite terminal space:
/// every density has E_Q(xi) - H(Q|P) <= rho_0(xi), the tilt e^{xi - rho_0}
/// attains it, and seeded random densities stay below.
struct DualEntropyReport {
  double rho0 = 0.0;
  double min_margin = 0.0;       // over all tested densities except the optimizer
  double attainment_error = 0.0; // |gap at the optimizer|
  bool pass = false;
  int densities_tested = 0;
};
DualEntropyReport dual_entropy_check(const std::vector<double>& xi,
                                     const std::vector<double>& probs, int random_densities,
                                     std::uint64_t seed);

/// Optional seeded Monte Carlo cross-check (paths capped at 1e6) of
/// E(max L) and E(L ln L) for L the exponential martingale of lambda W, for
/// scale demonstrations beyond exact lattices. Nothing binds to these
/// estimates; the exact modes are authoritative.
struct McEstimate {
  double e_max = 0.0, e_max_se = 0.0;
  double e_llogl = 0.0, e_llogl_se = 0.0;
  long paths = 0;
};
McEstimate mc_llogl_estimate(double lambda, double T, int N, long paths, std::uint64_t seed);

}  // namespace qslab
