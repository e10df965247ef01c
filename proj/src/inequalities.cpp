#include "qslab/inequalities.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qslab/rng.hpp"

namespace qslab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

void check_is_martingale(const AdaptedProcess& M, const char* who) {
  const auto& m = *M.model();
  double scale = 1.0;
  for (double x : M.values()) scale = std::max(scale, std::abs(x));
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] * M.at(k + 1, m.child_index(k, i, j));
      require(std::abs(mean - M.at(k, i)) <= 1e-10 * scale,
              std::string(who) + ": input is not a lattice martingale");
    }
}

std::vector<NodeIndex> path_nodes(const LatticeModel& m, NodeIndex terminal) {
  std::vector<NodeIndex> idx(static_cast<std::size_t>(m.steps()) + 1);
  idx[static_cast<std::size_t>(m.steps())] = terminal;
  for (int k = m.steps(); k > 0; --k)
    idx[static_cast<std::size_t>(k - 1)] = idx[static_cast<std::size_t>(k)] / m.branching();
  return idx;
}

}  // namespace

InequalityReport make_report(std::string name, double left, double right, std::string instance,
                             bool equality, double tol) {
  InequalityReport rep;
  rep.name = std::move(name);
  rep.left = left;
  rep.right = right;
  const double scale = std::max({1.0, std::abs(left), std::abs(right)});
  rep.margin = equality ? tol * scale - std::abs(right - left) : right - left;
  rep.pass = rep.margin >= -1e-10 * scale;
  rep.instance = std::move(instance);
  return rep;
}

AdaptedProcess exponential_martingale(const AdaptedProcess& M) {
  const auto& m = *M.model();
  check_is_martingale(M, "exponential_martingale");
  std::vector<double> v(static_cast<std::size_t>(m.node_count()),
                        std::numeric_limits<double>::quiet_NaN());
  v[0] = 1.0;
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] *
                std::exp(M.at(k + 1, m.child_index(k, i, j)) - M.at(k, i));
      for (int j = 0; j < m.branching(); ++j) {
        const NodeIndex c = m.child_index(k, i, j);
        double& slot = v[static_cast<std::size_t>(m.node_id(k + 1, c))];
        const double next = v[static_cast<std::size_t>(m.node_id(k, i))] *
                            std::exp(M.at(k + 1, c) - M.at(k, i)) / mean;
        if (std::isnan(slot)) {
          slot = next;
        } else if (std::abs(slot - next) > 1e-9 * std::max(1.0, std::abs(slot))) {
          throw PathDependenceError("exponential_martingale: path-dependent on recombining");
        }
      }
    }
  return AdaptedProcess(M.model(), std::move(v));
}

std::vector<InequalityReport> llogl_identity_check(const AdaptedProcess& M) {
  const auto& m = *M.model();
  const AdaptedProcess L = exponential_martingale(M);
  const AdaptedProcess maxL = running_max(L, 0, /*absolute=*/false);

  const double e_max = path_expectation(m, [&](NodeIndex t) { return maxL.at(m.steps(), t); });
  const double e_llogl = path_expectation(m, [&](NodeIndex t) {
    const double l = L.at(m.steps(), t);
    return l * std::log(l);
  });
  const double e_lmax = path_expectation(m, [&](NodeIndex t) {
    return L.at(m.steps(), t) * std::log(maxL.at(m.steps(), t));
  });

  // Q-compensator route: E_Q[sum_k mu_k - lambda_k] with lambda_k the one-step
  // log-mean and mu_k the Q-drift of dM. Agrees with E(L ln L) by the tower
  // property; the continuous limit of the summand is d<M>/2.
  const double girsanov = path_expectation(m, [&](NodeIndex t) {
    const auto nodes = path_nodes(m, t);
    double s = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
      const NodeIndex a = nodes[static_cast<std::size_t>(k)];
      double mean = 0.0, mean_dm = 0.0;
      for (int j = 0; j < m.branching(); ++j) {
        const double dm = M.at(k + 1, m.child_index(k, a, j)) - M.at(k, a);
        const double w = m.probabilities()[j] * std::exp(dm);
        mean += w;
        mean_dm += w * dm;
      }
      s += mean_dm / mean - std::log(mean);
    }
    return L.at(m.steps(), t) * s;
  });

  std::vector<InequalityReport> out;
  out.push_back(make_report("llogl-doob", e_llogl, e_max - 1.0, "exp-martingale"));
  out.push_back(make_report("llogl-max-upper", e_max - 1.0, e_lmax, "exp-martingale"));
  out.push_back(make_report("llogl-entropy-upper", e_llogl, e_lmax, "exp-martingale"));
  out.push_back(make_report("llogl-girsanov", e_llogl, girsanov, "exp-martingale",
                            /*equality=*/true));
  return out;
}

InequalityReport harremoes_check(const AdaptedProcess& L) {
  const auto& m = *L.model();
  for (double v : L.values()) require(v > 0.0, "harremoes_check: L must be positive");
  require(std::abs(L.root() - 1.0) <= 1e-12, "harremoes_check: L_0 must be 1");
  check_is_martingale(L, "harremoes_check");

  const AdaptedProcess maxL = running_max(L, 0, false);
  const double e_max = path_expectation(m, [&](NodeIndex t) { return maxL.at(m.steps(), t); });
  const double e_llogl = path_expectation(m, [&](NodeIndex t) {
    const double l = L.at(m.steps(), t);
    return l * std::log(l);
  });
  return make_report("harremoes", e_max - 1.0 - std::log(e_max), e_llogl, "martingale",
                     false, 1e-12);
}

AdversarialSearchResult harremoes_adversarial_search(int stages, int points_per_axis) {
  // Two-step binary martingale with p = 1/2: first-step ratios 1 +- x, then
  // 1 +- y_u after up and 1 +- y_d after down. Margin of the Harremoes
  // inequality as a function of (x, y_u, y_d) on [0, 0.95]^3.
  auto margin_of = [](double x, double yu, double yd) {
    const double lu = 1.0 + x, ld = 1.0 - x;
    const double luu = lu * (1.0 + yu), lud = lu * (1.0 - yu);
    const double ldu = ld * (1.0 + yd), ldd = ld * (1.0 - yd);
    auto xlogx = [](double v) { return v > 0.0 ? v * std::log(v) : 0.0; };
    const double e_llogl = 0.25 * (xlogx(luu) + xlogx(lud) + xlogx(ldu) + xlogx(ldd));
    const double e_max = 0.25 * (std::max({1.0, lu, luu}) + std::max({1.0, lu, lud}) +
                                 std::max({1.0, ld, ldu}) + std::max({1.0, ld, ldd}));
    return e_llogl - (e_max - 1.0 - std::log(e_max));
  };

  double lo[3] = {0.0, 0.0, 0.0};
  double hi[3] = {0.95, 0.95, 0.95};
  AdversarialSearchResult res;
  res.min_margin = std::numeric_limits<double>::infinity();
  res.worst_params = {0.0, 0.0, 0.0};
  for (int stage = 0; stage < stages; ++stage) {
    double best[3] = {lo[0], lo[1], lo[2]};
    double best_margin = std::numeric_limits<double>::infinity();
    const int P = points_per_axis;
    for (int a = 0; a < P; ++a)
      for (int b = 0; b < P; ++b)
        for (int c = 0; c < P; ++c) {
          const double x = lo[0] + (hi[0] - lo[0]) * a / (P - 1.0);
          const double yu = lo[1] + (hi[1] - lo[1]) * b / (P - 1.0);
          const double yd = lo[2] + (hi[2] - lo[2]) * c / (P - 1.0);
          const double mg = margin_of(x, yu, yd);
          if (mg < best_margin) {
            best_margin = mg;
            best[0] = x;
            best[1] = yu;
            best[2] = yd;
          }
        }
    if (best_margin < res.min_margin) {
      res.min_margin = best_margin;
      res.worst_params = {best[0], best[1], best[2]};
    }
    for (int d = 0; d < 3; ++d) {
      const double span = (hi[d] - lo[d]) / (points_per_axis - 1.0);
      lo[d] = std::max(0.0, best[d] - span);
      hi[d] = std::min(0.95, best[d] + span);
    }
  }
  return res;
}

namespace {

double u_m(double x, double mval) { return x - mval - mval * std::log(x); }

// Inverse of u_m on the increasing branch [m, inf), by bisection.
double u_m_inverse(double target, double mval) {
  double lo = mval, hi = std::max(mval, 1.0);
  while (u_m(hi, mval) < target && hi < 1e300) hi *= 2.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (u_m(mid, mval) < target ? lo : hi) = mid;
    if (hi - lo <= 1e-12 * std::max(1.0, hi)) break;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

std::vector<InequalityReport> um_submartingale_check(const AdaptedProcess& U) {
  const auto& m = *U.model();
  for (double v : U.values()) require(v > 0.0, "um_submartingale_check: U must be positive");
  double scale = 1.0;
  for (double v : U.values()) scale = std::max(scale, std::abs(v));
  require(is_submartingale(U, 1e-10 * scale).verdict,
          "um_submartingale_check: U is not a submartingale");

  const double u0 = U.root();
  const double mval = path_expectation(m, [&](NodeIndex t) { return U.at(m.steps(), t); });
  const AdaptedProcess maxU = running_max(U, 0, false);
  const double e_max = path_expectation(m, [&](NodeIndex t) { return maxU.at(m.steps(), t); });
  const double h_ent = path_expectation(m, [&](NodeIndex t) {
                         const double u = U.at(m.steps(), t);
                         return u * std::log(u);
                       }) -
                       mval * std::log(mval);

  std::vector<InequalityReport> out;
  out.push_back(
      make_report("um-submartingale", u_m(e_max, mval) - u_m(u0, mval), h_ent, "submartingale"));
  const double bound = u_m_inverse(u_m(u0, mval) + h_ent, mval);
  out.push_back(make_report("um-max-bound", e_max, bound, "submartingale", false, 1e-9));
  return out;
}

GarsiaNeveuReport garsia_neveu_check(const AdaptedProcess& A, const std::vector<double>& U,
                                     const std::vector<double>& p_list,
                                     const std::vector<StoppingTime>& stops) {
  const auto& m = *A.model();
  require(static_cast<NodeIndex>(U.size()) == m.level_size(m.steps()),
          "garsia_neveu_check: U size mismatch");
  for (double u : U) require(u >= 0.0, "garsia_neveu_check: U must be positive");
  require(A.root() == 0.0, "garsia_neveu_check: A must start at 0");

  GarsiaNeveuReport rep;
  rep.premise_margin = std::numeric_limits<double>::infinity();
  for (const auto& sigma : stops) {
    std::vector<double> lhs(static_cast<std::size_t>(m.node_count()), 0.0);
    std::vector<double> rhs(static_cast<std::size_t>(m.node_count()), 0.0);
    std::vector<double> den(static_cast<std::size_t>(m.node_count()), 0.0);
    for_each_path(m, [&](NodeIndex t, double w) {
      const auto nodes = path_nodes(m, t);
      int ks = m.steps();
      for (int k = 0; k <= m.steps(); ++k)
        if (sigma.flagged(k, nodes[static_cast<std::size_t>(k)])) {
          ks = k;
          break;
        }
      const std::size_t id =
          static_cast<std::size_t>(m.node_id(ks, nodes[static_cast<std::size_t>(ks)]));
      lhs[id] += w * (A.at(m.steps(), t) - A.at(ks, nodes[static_cast<std::size_t>(ks)]));
      rhs[id] += w * (ks < m.steps() ? U[static_cast<std::size_t>(t)] : 0.0);
      den[id] += w;
    });
    for (std::size_t id = 0; id < den.size(); ++id)
      if (den[id] > 0.0)
        rep.premise_margin = std::min(rep.premise_margin, (rhs[id] - lhs[id]) / den[id]);
  }
  rep.premise_ok = rep.premise_margin >= -1e-12;
  if (!rep.premise_ok) return rep;

  for (double p : p_list) {
    require(p >= 1.0, "garsia_neveu_check: p must be >= 1");
    const double lhs =
        path_expectation(m, [&](NodeIndex t) { return std::pow(A.at(m.steps(), t), p); });
    const double rhs = std::pow(p, p) * path_expectation(m, [&](NodeIndex t) {
                         return std::pow(U[static_cast<std::size_t>(t)], p);
                       });
    rep.conclusions.push_back(
        make_report("garsia-neveu-p" + std::to_string(p), lhs, rhs, "premise-checked"));
  }
  return rep;
}

double psi_p(double z, double p) {
  if (p == 1.0) return z * std::log(z) - z + 1.0;
  return std::pow(z, p);
}

PsiReport maximal_psi_check(const AdaptedProcess& X, double p) {
  const auto& m = *X.model();
  std::vector<double> ev(X.values().size());
  for (std::size_t n = 0; n < ev.size(); ++n) ev[n] = std::exp(X.values()[n]);
  const AdaptedProcess expX(X.model(), std::move(ev));

  PsiReport rep;
  rep.sp_exp = process_norm(expX, NormKind::Sp, std::max(p, 1e-9));
  const auto md = multiplicative_decompose(expX);
  rep.sp_factor = process_norm(md.factor, NormKind::Sp, std::max(p, 1e-9));
  rep.psi_moment = path_expectation(
      m, [&](NodeIndex t) { return psi_p(expX.at(m.steps(), t), p); });
  return rep;
}

DualEntropyReport dual_entropy_check(const std::vector<double>& xi,
                                     const std::vector<double>& probs, int random_densities,
                                     std::uint64_t seed) {
  require(xi.size() == probs.size() && !xi.empty(), "dual_entropy_check: size mismatch");
  double psum = 0.0;
  for (double p : probs) {
    require(p > 0.0, "dual_entropy_check: probabilities must be positive");
    psum += p;
  }
  require(std::abs(psum - 1.0) <= 1e-12, "dual_entropy_check: probabilities must sum to 1");

  DualEntropyReport rep;
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : xi) mx = std::max(mx, x);
  double s = 0.0;
  for (std::size_t i = 0; i < xi.size(); ++i) s += probs[i] * std::exp(xi[i] - mx);
  rep.rho0 = mx + std::log(s);

  rep.min_margin = std::numeric_limits<double>::infinity();
  auto gap_of = [&](const std::vector<double>& L) {
    double eq = 0.0, h = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) {
      eq += probs[i] * L[i] * xi[i];
      h += probs[i] * L[i] * std::log(L[i]);
    }
    return rep.rho0 - (eq - h);  // >= 0 with equality at the optimizer
  };

  // Exponential tilts, the theta = 1 tilt being the optimizer.
  for (double theta : {-1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 0.9, 1.0, 1.1, 1.5}) {
    std::vector<double> L(xi.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) norm += probs[i] * std::exp(theta * xi[i]);
    for (std::size_t i = 0; i < xi.size(); ++i) L[i] = std::exp(theta * xi[i]) / norm;
    const double gap = gap_of(L);
    ++rep.densities_tested;
    if (theta == 1.0)
      rep.attainment_error = std::abs(gap);
    else
      rep.min_margin = std::min(rep.min_margin, gap);
  }

  Rng rng = Rng(seed).split(0xd0a1);
  for (int r = 0; r < random_densities; ++r) {
    std::vector<double> L(xi.size());
    double norm = 0.0;
    for (std::size_t i = 0; i < xi.size(); ++i) {
      L[i] = std::exp(rng.uniform(-2.0, 2.0));
      norm += probs[i] * L[i];
    }
    for (double& l : L) l /= norm;
    rep.min_margin = std::min(rep.min_margin, gap_of(L));
    ++rep.densities_tested;
  }

  rep.pass = rep.min_margin >= -1e-12 && rep.attainment_error <= 1e-12;
  return rep;
}

McEstimate mc_llogl_estimate(double lambda, double T, int N, long paths, std::uint64_t seed) {
  require(paths > 1, "mc_llogl_estimate: need at least two paths");
  paths = std::min(paths, 1000000L);
  const double s = std::sqrt(T / N);
  const double up = std::exp(lambda * s), down = std::exp(-lambda * s);
  const double mean = 0.5 * (up + down);

  McEstimate est;
  est.paths = paths;
  double sum_max = 0.0, sum2_max = 0.0, sum_ll = 0.0, sum2_ll = 0.0;
  Rng rng = Rng(seed).split(0x3c0a);
  for (long p = 0; p < paths; ++p) {
    double L = 1.0, mx = 1.0;
    for (int k = 0; k < N; ++k) {
      L *= (rng.next_u64() & 1ULL) ? up / mean : down / mean;
      mx = std::max(mx, L);
    }
    const double ll = L * std::log(L);
    sum_max += mx;
    sum2_max += mx * mx;
    sum_ll += ll;
    sum2_ll += ll * ll;
  }
  const double n = static_cast<double>(paths);
  est.e_max = sum_max / n;
  est.e_llogl = sum_ll / n;
  est.e_max_se = std::sqrt(std::max(sum2_max / n - est.e_max * est.e_max, 0.0) / n);
  est.e_llogl_se = std::sqrt(std::max(sum2_ll / n - est.e_llogl * est.e_llogl, 0.0) / n);
  return est;
}

}  // namespace qslab
