#include "qslab/stability.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

namespace qslab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

std::vector<NodeIndex> path_nodes(const LatticeModel& m, NodeIndex terminal) {
  std::vector<NodeIndex> idx(static_cast<std::size_t>(m.steps()) + 1);
  idx[static_cast<std::size_t>(m.steps())] = terminal;
  for (int k = m.steps(); k > 0; --k)
    idx[static_cast<std::size_t>(k - 1)] = idx[static_cast<std::size_t>(k)] / m.branching();
  return idx;
}

AdaptedProcess diff(const AdaptedProcess& a, const AdaptedProcess& b) {
  std::vector<double> v(a.values().size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = a.values()[n] - b.values()[n];
  return AdaptedProcess(a.model(), std::move(v));
}

}  // namespace

ApproximationRun run_ladder(const BSDESpec& spec, const std::vector<double>& eta,
                            const std::vector<double>& n_list, Scheme scheme,
                            const GridSpec& grid, int threads, std::uint64_t battery_seed) {
  const auto& m = *spec.model;
  require(!n_list.empty(), "run_ladder: empty index list");
  require(verify_structure(spec.coefficient).pass,
          "run_ladder: driver fails its declared structure bound");
  require(static_cast<NodeIndex>(eta.size()) == m.level_size(m.steps()),
          "run_ladder: eta size mismatch");
  for (std::size_t t = 0; t < eta.size(); ++t)
    require(std::abs(eta[t]) >= std::abs(spec.terminal[t]) - 1e-12,
            "run_ladder: |eta| must dominate |xi| terminally");

  ApproximationRun run;
  run.spec = spec;
  run.eta = eta;
  run.ladder = make_ladder(spec.coefficient, n_list, grid);
  run.battery = default_battery(spec.model, battery_seed, 8);
  run.solutions.resize(n_list.size());

  auto solve_member = [&](std::size_t i) {
    BSDESpec member = spec;
    member.coefficient = run.ladder.members[i];
    run.solutions[i] = solve_backward(member, scheme);
  };
  if (threads <= 1 || n_list.size() == 1) {
    for (std::size_t i = 0; i < n_list.size(); ++i) solve_member(i);
  } else {
    std::vector<std::thread> pool;
    std::size_t next = 0;
    const std::size_t width = static_cast<std::size_t>(std::max(1, threads));
    while (next < n_list.size()) {
      pool.clear();
      for (std::size_t j = 0; j < width && next + j < n_list.size(); ++j)
        pool.emplace_back(solve_member, next + j);
      for (auto& th : pool) th.join();
      next += width;
    }
  }

  // Monotone ladder under the implicit scheme; a violation flags a scheme bug.
  if (scheme == Scheme::Implicit) {
    for (std::size_t i = 0; i + 1 < run.solutions.size(); ++i)
      for (std::size_t n = 0; n < run.solutions[i].Y.values().size(); ++n)
        require(run.solutions[i].Y.values()[n] <=
                    run.solutions[i + 1].Y.values()[n] + 1e-12,
                "run_ladder: ladder not monotone");
  }

  // Every member must satisfy the entropic class bound against eta, up to the
  // certified one-step gap between the scheme increment (delta/2) z^2 dK and
  // the entropic increment (1/delta) lncosh(delta z sqrt(dK)): at most
  // (delta^3/12) z^4 dK^2 per step.
  const double delta = spec.coefficient.growth().delta;
  for (const auto& sol : run.solutions) {
    double tol = 1e-10;
    for (int k = 0; k < m.steps(); ++k) {
      double zmax = 0.0;
      for (const auto& zc : sol.Z)
        for (NodeIndex i = 0; i < m.level_size(k); ++i)
          zmax = std::max(zmax, std::abs(zc.at(k, i)));
      const double dK = m.dt();
      tol += 1.5 * (delta * delta * delta / 12.0) * zmax * zmax * zmax * zmax * dK * dK;
    }
    auto member = check_sq_membership(sol.Y, eta, spec.structure, run.battery, tol);
    require(member.member, "run_ladder: ladder member escapes the entropic class");
  }
  return run;
}

ConvergenceReport convergence_report(const ApproximationRun& run,
                                     const std::vector<double>& p_list) {
  const auto& m = *run.spec.model;
  ConvergenceReport rep;
  rep.p_list = p_list;

  const auto& last = run.solutions.back();
  for (std::size_t c = 0; c < last.Z.size(); ++c)
    for (int k = 0; k < m.steps(); ++k)
      for (NodeIndex i = 0; i < m.level_size(k); ++i)
        rep.z_bound = std::max(rep.z_bound, std::abs(last.Z[c].at(k, i)));
  for (std::size_t i = 0; i < run.ladder.indices.size(); ++i)
    if (run.ladder.indices[i] >= rep.z_bound) {
      rep.tail_start = static_cast<int>(i);
      break;
    }

  for (std::size_t i = 0; i + 1 < run.solutions.size(); ++i) {
    const auto& a = run.solutions[i];
    const auto& b = run.solutions[i + 1];
    PairDistance d;
    d.index_lo = run.ladder.indices[i];
    d.index_hi = run.ladder.indices[i + 1];
    for (std::size_t n = 0; n < a.Y.values().size(); ++n)
      d.sup = std::max(d.sup, std::abs(a.Y.values()[n] - b.Y.values()[n]));
    d.exact = d.sup == 0.0;

    const AdaptedProcess dm = diff(a.M, b.M);
    const AdaptedProcess qv = predictable_qv(dm, 1e-8);
    d.h1 = path_expectation(m, [&](NodeIndex t) { return std::sqrt(qv.at(m.steps(), t)); });
    const double eqv = path_expectation(m, [&](NodeIndex t) { return qv.at(m.steps(), t); });
    d.h1_upper = std::sqrt(eqv);
    for (double p : p_list) {
      const double e = path_expectation(
          m, [&](NodeIndex t) { return std::pow(qv.at(m.steps(), t), p); });
      d.h2p.push_back(std::pow(e, 1.0 / (2.0 * p)));
    }
    d.bmo = process_norm(dm, NormKind::BMO);
    d.s1_drift = process_norm(diff(a.V, b.V), NormKind::Sp, 1.0);
    rep.pairs.push_back(std::move(d));
  }

  rep.tail_exact = rep.tail_start >= 0;
  if (rep.tail_start >= 0)
    for (std::size_t i = static_cast<std::size_t>(rep.tail_start); i + 1 < run.solutions.size(); ++i)
      if (!(rep.pairs[i].sup == 0.0 && rep.pairs[i].h1 == 0.0 && rep.pairs[i].s1_drift == 0.0))
        rep.tail_exact = false;
  return rep;
}

QvEstimatesReport qv_estimates_check(const BSDESolution& solution,
                                     const std::vector<double>& eta,
                                     const StructureParams& params,
                                     const std::vector<double>& p_list,
                                     const std::vector<StoppingTime>& stops) {
  const auto& m = *solution.Y.model();
  auto member = check_sq_membership(solution.Y, eta, params, stops);
  require(member.member, "qv_estimates_check: solution escapes the entropic class of eta");

  std::vector<double> eta_abs(eta.size());
  for (std::size_t t = 0; t < eta.size(); ++t) eta_abs[t] = std::abs(eta[t]);
  const PathEnvelope env = phi_envelope(solution.Y.model(), eta_abs, params);

  QvEstimatesReport rep;
  rep.margin_conditional = std::numeric_limits<double>::infinity();

  // (a) E[<M>_{sigma,N} | F_sigma]/2 <= Phi_sigma at every tested sigma.
  for (const auto& sigma : stops) {
    StoppedValues Phi = phi_projection_at(sigma, eta_abs, params);
    std::vector<double> num(static_cast<std::size_t>(m.node_count()), 0.0);
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
      num[id] += w * (solution.QV.at(m.steps(), t) -
                      solution.QV.at(ks, nodes[static_cast<std::size_t>(ks)]));
      den[id] += w;
    });
    // sigma = N contributes 0 <= 0 through the indicator; skip those nodes.
    for (int k = 0; k < m.steps(); ++k)
      for (NodeIndex i = 0; i < m.level_size(k); ++i) {
        const std::size_t id = static_cast<std::size_t>(m.node_id(k, i));
        if (den[id] <= 0.0) continue;
        const double lhs = 0.5 * num[id] / den[id];
        rep.margin_conditional = std::min(rep.margin_conditional, Phi.value[id] - lhs);
      }
  }

  // (b), (c): E[<M>_N^p] and E[|V|_N^p] against (2p)^p E[exp(p Xbar_N(eta))].
  for (double p : p_list) {
    const double rhs =
        std::pow(2.0 * p, p) * path_expectation(m, [&](NodeIndex t) {
          return std::exp(p * env.phi[static_cast<std::size_t>(t)][0]);
        });
    const double qv_p = path_expectation(
        m, [&](NodeIndex t) { return std::pow(solution.QV.at(m.steps(), t), p); });
    const double tv_p = path_expectation(m, [&](NodeIndex t) {
      const auto nodes = path_nodes(m, t);
      double tv = 0.0;
      for (int k = 0; k < m.steps(); ++k)
        tv += std::abs(solution.V.at(k + 1, nodes[static_cast<std::size_t>(k + 1)]) -
                       solution.V.at(k, nodes[static_cast<std::size_t>(k)]));
      return std::pow(tv, p);
    });
    rep.margin_qv_p.push_back(rhs - qv_p);
    rep.margin_tv_p.push_back(rhs - tv_p);
  }

  // (d) BMO^2 <= 2 sup Phi (a consequence of (a)).
  const AdaptedProcess Phi_full = phi_projection(eta_abs, params);
  double sup_phi = 0.0;
  for (double v : Phi_full.values()) sup_phi = std::max(sup_phi, v);
  const double bmo = process_norm(solution.M, NormKind::BMO);
  rep.margin_bmo = 2.0 * sup_phi - bmo * bmo;

  rep.pass = rep.margin_conditional >= -1e-10 && rep.margin_bmo >= -1e-10;
  for (double v : rep.margin_qv_p) rep.pass = rep.pass && v >= -1e-10;
  for (double v : rep.margin_tv_p) rep.pass = rep.pass && v >= -1e-10;
  return rep;
}

CoefficientLimitReport coefficient_limit_check(const ApproximationRun& run) {
  const auto& m = *run.spec.model;
  const auto& limit = run.solutions.back();
  CoefficientLimitReport rep;
  rep.growth_ok = true;
  rep.growth_margin = std::numeric_limits<double>::infinity();

  const int dim = static_cast<int>(limit.Z.size());
  std::vector<double> zn(static_cast<std::size_t>(dim)), zl(static_cast<std::size_t>(dim));
  std::vector<double> zw(static_cast<std::size_t>(dim));
  for (std::size_t i = 0; i < run.solutions.size(); ++i) {
    const auto& sol = run.solutions[i];
    double worst = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
      const double t = m.time_at(k);
      for (NodeIndex node = 0; node < m.level_size(k); ++node) {
        for (int c = 0; c < dim; ++c) {
          zn[static_cast<std::size_t>(c)] = sol.Z[static_cast<std::size_t>(c)].at(k, node);
          zl[static_cast<std::size_t>(c)] = limit.Z[static_cast<std::size_t>(c)].at(k, node);
          const double g = c < static_cast<int>(run.spec.gamma.size())
                               ? run.spec.gamma[static_cast<std::size_t>(c)]
                               : 1.0;
          zw[static_cast<std::size_t>(c)] = std::sqrt(g) * zn[static_cast<std::size_t>(c)];
        }
        const double gn = run.ladder.members[i](t, sol.Y.at(k, node), zn);
        const double g = run.ladder.base(t, limit.Y.at(k, node), zl);
        worst = std::max(worst, std::abs(gn - g));
        const double margin =
            kappa_eval(t, sol.Y.at(k, node), zw, run.ladder.base.growth()) - std::abs(gn);
        rep.growth_margin = std::min(rep.growth_margin, margin);
        if (margin < -1e-10) rep.growth_ok = false;
      }
    }
    rep.residuals.push_back(worst);
  }
  return rep;
}

}  // namespace qslab
