#include "qslab/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qslab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

struct DriverLayout {
  int dim = 1;
  double step = 0.0;  // per-coordinate increment magnitude
  // increment of coordinate i on branch j
  double inc(int i, int j) const { return ((j >> (dim - 1 - i)) & 1) ? -step : step; }
};

DriverLayout driver_layout(const BSDESpec& spec) {
  const auto& m = *spec.model;
  DriverLayout lay;
  lay.dim = spec.driver_dim;
  require(lay.dim >= 1, "solver: driver dimension must be >= 1");
  if (lay.dim == 1) {
    require(m.branching() == 2, "solver: scalar driver needs a binary model");
    lay.step = m.increments()[0];
    require(m.increments()[1] == -lay.step, "solver: scalar driver needs symmetric increments");
  } else {
    require(m.branching() == (1 << lay.dim),
            "solver: d-dimensional driver needs 2^d branching");
    for (double p : m.probabilities())
      require(std::abs(p - 1.0 / m.branching()) <= 1e-14,
              "solver: d-dimensional driver needs uniform branch probabilities");
    lay.step = std::sqrt(m.dt());
  }
  return lay;
}

double predictable_clock_increment(const BSDESpec& spec, int k, NodeIndex i) {
  const auto& m = *spec.model;
  double mean = 0.0;
  for (int j = 0; j < m.branching(); ++j)
    mean += m.probabilities()[j] * spec.clock.at(k + 1, m.child_index(k, i, j));
  return mean - spec.clock.at(k, i);
}

/// One implicit node solve: y = ey + g(t, y, z) dK. Damped fixed point with a
/// Newton fallback on the residual.
double solve_node(const Coefficient& g, double t, double ey, std::span<const double> z,
                  double dK, double tol, int max_iters, int& iters_used) {
  double y = ey + g(t, ey, z) * dK;  // explicit predictor
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < max_iters; ++it) {
    const double res = y - ey - g(t, y, z) * dK;
    const double scale = std::max(1.0, std::abs(y));
    if (std::abs(res) <= tol * scale) {
      iters_used = std::max(iters_used, it);
      return y;
    }
    if (it < 8 && std::abs(res) < 0.5 * prev) {
      y -= res;  // plain fixed-point step while it contracts
    } else {
      const double h = 1e-7 * scale;
      const double slope = 1.0 - dK * (g(t, y + h, z) - g(t, y - h, z)) / (2.0 * h);
      y -= res / (std::abs(slope) > 1e-12 ? slope : 1.0);
    }
    prev = std::abs(res);
  }
  throw ConvergenceError("solver: implicit node iteration did not converge");
}

void attach_decomposition(BSDESolution& sol, const BSDESpec& spec,
                          const std::vector<double>& dV_by_node) {
  const auto& m = *spec.model;
  try {
    sol.V = accumulate_predictable(spec.model, 0.0, [&](int k, NodeIndex i) {
      return dV_by_node[static_cast<std::size_t>(m.node_id(k, i))];
    });
    std::vector<double> mv(sol.Y.values().size());
    for (std::size_t n = 0; n < mv.size(); ++n)
      mv[n] = sol.Y.values()[n] - sol.Y.root() + sol.V.values()[n];
    sol.M = AdaptedProcess(spec.model, std::move(mv));
    sol.QV = accumulate_predictable(spec.model, 0.0, [&](int k, NodeIndex i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] * sol.Y.at(k + 1, m.child_index(k, i, j));
      double var = 0.0;
      for (int j = 0; j < m.branching(); ++j) {
        const double d = sol.Y.at(k + 1, m.child_index(k, i, j)) - mean;
        var += m.probabilities()[j] * d * d;
      }
      return var;
    });
  } catch (const PathDependenceError&) {
    // Recombining layout with path-dependent V: expose Y and Z only.
    sol.V = AdaptedProcess();
    sol.M = AdaptedProcess();
    sol.QV = AdaptedProcess();
  }

  // H2 size of the residual of M against the span of the driver increments,
  // by exact path expectation (non-recombining only).
  const DriverLayout lay = driver_layout(spec);
  double acc = 0.0;
  if (!m.recombining()) {
    acc = path_expectation(m, [&](NodeIndex t) {
      double s = 0.0;
      NodeIndex idx = t;
      std::vector<NodeIndex> nodes(static_cast<std::size_t>(m.steps()) + 1);
      nodes[static_cast<std::size_t>(m.steps())] = t;
      for (int k = m.steps(); k > 0; --k) nodes[static_cast<std::size_t>(k - 1)] = idx /= m.branching();
      for (int k = 0; k < m.steps(); ++k) {
        const NodeIndex a = nodes[static_cast<std::size_t>(k)];
        const NodeIndex b = nodes[static_cast<std::size_t>(k + 1)];
        const int branch = static_cast<int>(b - a * m.branching());
        double mean = 0.0;
        for (int j = 0; j < m.branching(); ++j)
          mean += m.probabilities()[j] * sol.Y.at(k + 1, m.child_index(k, a, j));
        double r = sol.Y.at(k + 1, b) - mean;
        for (int i = 0; i < lay.dim; ++i) r -= sol.Z[static_cast<std::size_t>(i)].at(k, a) * lay.inc(i, branch);
        s += r * r;
      }
      return s;
    });
  }
  sol.diagnostics.orthogonal_h2 = std::sqrt(std::max(acc, 0.0));
}

}  // namespace

BSDESpec BSDESpec::make(ModelPtr model, Coefficient coefficient, std::vector<double> terminal) {
  BSDESpec spec;
  spec.model = model;
  spec.coefficient = std::move(coefficient);
  spec.terminal = std::move(terminal);
  spec.structure = StructureParams::zero(model);
  std::vector<double> steps(static_cast<std::size_t>(model->steps()) + 1);
  for (int k = 0; k <= model->steps(); ++k) steps[static_cast<std::size_t>(k)] = model->time_at(k);
  spec.clock = AdaptedProcess::from_steps(model, steps);
  spec.driver_dim = 1;
  spec.gamma = {1.0};
  return spec;
}

BSDESolution solve_backward(const BSDESpec& spec, Scheme scheme, double tol,
                            int max_inner_iters) {
  const auto& m = *spec.model;
  require(scheme != Scheme::Oracle, "solve_backward: scheme must be explicit or implicit");
  require(static_cast<NodeIndex>(spec.terminal.size()) == m.level_size(m.steps()),
          "solve_backward: terminal size mismatch");
  require(spec.clock.defined() && spec.clock.root() == 0.0,
          "solve_backward: clock must start at 0");
  const DriverLayout lay = driver_layout(spec);
  const double denom = lay.step * lay.step;

  BSDESolution sol;
  sol.diagnostics.scheme = scheme;
  std::vector<double> y(static_cast<std::size_t>(m.node_count()));
  std::vector<std::vector<double>> z(static_cast<std::size_t>(lay.dim));
  for (auto& zi : z) zi.assign(static_cast<std::size_t>(m.node_count()), 0.0);
  std::vector<double> dV(static_cast<std::size_t>(m.node_count()), 0.0);

  for (NodeIndex t = 0; t < m.level_size(m.steps()); ++t)
    y[static_cast<std::size_t>(m.node_id(m.steps(), t))] = spec.terminal[static_cast<std::size_t>(t)];

  std::vector<double> zbuf(static_cast<std::size_t>(lay.dim));
  for (int k = m.steps() - 1; k >= 0; --k) {
    const double t = m.time_at(k);
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double ey = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        ey += m.probabilities()[j] * y[m.node_id(k + 1, m.child_index(k, i, j))];
      for (int c = 0; c < lay.dim; ++c) {
        double cov = 0.0;
        for (int j = 0; j < m.branching(); ++j)
          cov += m.probabilities()[j] * y[m.node_id(k + 1, m.child_index(k, i, j))] * lay.inc(c, j);
        zbuf[static_cast<std::size_t>(c)] = cov / denom;
        z[static_cast<std::size_t>(c)][m.node_id(k, i)] = zbuf[static_cast<std::size_t>(c)];
      }
      const double dK = predictable_clock_increment(spec, k, i);
      double yk;
      if (scheme == Scheme::Explicit) {
        yk = ey + spec.coefficient(t, ey, zbuf) * dK;
      } else {
        yk = solve_node(spec.coefficient, t, ey, zbuf, dK, tol, max_inner_iters,
                        sol.diagnostics.max_inner_iterations);
      }
      if (!std::isfinite(yk)) throw OverflowError("solve_backward: non-finite value", k, i);
      y[m.node_id(k, i)] = yk;
      dV[m.node_id(k, i)] = yk - ey;
      const double yarg = scheme == Scheme::Explicit ? ey : yk;
      sol.diagnostics.max_defect = std::max(
          sol.diagnostics.max_defect, std::abs(yk - ey - spec.coefficient(t, yarg, zbuf) * dK));
    }
  }

  sol.Y = AdaptedProcess(spec.model, std::move(y));
  for (auto& zi : z) sol.Z.emplace_back(spec.model, std::move(zi));
  attach_decomposition(sol, spec, dV);
  return sol;
}

BSDESolution solve_entropic_oracle(const std::vector<double>& xi, double delta,
                                   const ModelPtr& model) {
  const auto& m = *model;
  const EntropicProcess ep = entropic_process(model, xi, delta);

  BSDESolution sol;
  sol.diagnostics.scheme = Scheme::Oracle;
  sol.Y = ep.rho;

  // Martingale-representation weights against the scalar driver.
  require(m.branching() == 2, "solve_entropic_oracle: binary models only");
  const double s = m.increments()[0];
  std::vector<double> z(static_cast<std::size_t>(m.node_count()), 0.0);
  std::vector<double> dV(static_cast<std::size_t>(m.node_count()), 0.0);
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double ey = 0.0, cov = 0.0;
      for (int j = 0; j < m.branching(); ++j) {
        const double yc = sol.Y.at(k + 1, m.child_index(k, i, j));
        ey += m.probabilities()[j] * yc;
        cov += m.probabilities()[j] * yc * m.increments()[j];
      }
      z[m.node_id(k, i)] = cov / (s * s);
      dV[m.node_id(k, i)] = sol.Y.at(k, i) - ey;
    }
  sol.Z.emplace_back(model, std::move(z));

  BSDESpec spec = BSDESpec::make(model, make_coefficient("q-delta", {delta}), xi);
  attach_decomposition(sol, spec, dV);
  return sol;
}

PicardResult picard_solve(const BSDESpec& spec, double tol, int max_iters) {
  const auto& m = *spec.model;
  require(spec.coefficient.lipschitz().has_value(),
          "picard_solve: coefficient needs a declared Lipschitz constant");
  const DriverLayout lay = driver_layout(spec);
  const double denom = lay.step * lay.step;

  // Start from the driverless solution E[xi | F_k].
  AdaptedProcess Y = conditional_expectation(spec.model, spec.terminal);
  std::vector<AdaptedProcess> Z;
  auto compute_z = [&](const AdaptedProcess& Ycur) {
    std::vector<AdaptedProcess> out;
    for (int c = 0; c < lay.dim; ++c) {
      std::vector<double> zc(static_cast<std::size_t>(m.node_count()), 0.0);
      for (int k = 0; k < m.steps(); ++k)
        for (NodeIndex i = 0; i < m.level_size(k); ++i) {
          double cov = 0.0;
          for (int j = 0; j < m.branching(); ++j)
            cov += m.probabilities()[j] * Ycur.at(k + 1, m.child_index(k, i, j)) * lay.inc(c, j);
          zc[m.node_id(k, i)] = cov / denom;
        }
      out.emplace_back(spec.model, std::move(zc));
    }
    return out;
  };
  Z = compute_z(Y);

  PicardResult result;
  std::vector<double> zbuf(static_cast<std::size_t>(lay.dim));
  for (int it = 0; it < max_iters; ++it) {
    std::vector<double> next(static_cast<std::size_t>(m.node_count()));
    for (NodeIndex t = 0; t < m.level_size(m.steps()); ++t)
      next[m.node_id(m.steps(), t)] = spec.terminal[static_cast<std::size_t>(t)];
    for (int k = m.steps() - 1; k >= 0; --k)
      for (NodeIndex i = 0; i < m.level_size(k); ++i) {
        double ey = 0.0;
        for (int j = 0; j < m.branching(); ++j)
          ey += m.probabilities()[j] * next[m.node_id(k + 1, m.child_index(k, i, j))];
        for (int c = 0; c < lay.dim; ++c)
          zbuf[static_cast<std::size_t>(c)] = Z[static_cast<std::size_t>(c)].at(k, i);
        next[m.node_id(k, i)] =
            ey + spec.coefficient(m.time_at(k), Y.at(k, i), zbuf) *
                     predictable_clock_increment(spec, k, i);
      }
    double gap = 0.0;
    for (std::size_t n = 0; n < next.size(); ++n)
      gap = std::max(gap, std::abs(next[n] - Y.values()[n]));
    Y = AdaptedProcess(spec.model, std::move(next));
    Z = compute_z(Y);
    result.trace.push_back(gap);
    if (gap <= tol) {
      std::vector<double> dV(static_cast<std::size_t>(m.node_count()), 0.0);
      for (int k = 0; k < m.steps(); ++k)
        for (NodeIndex i = 0; i < m.level_size(k); ++i) {
          double ey = 0.0;
          for (int j = 0; j < m.branching(); ++j)
            ey += m.probabilities()[j] * Y.at(k + 1, m.child_index(k, i, j));
          dV[m.node_id(k, i)] = Y.at(k, i) - ey;
        }
      result.solution.Y = Y;
      result.solution.Z = Z;
      result.solution.diagnostics.scheme = Scheme::Implicit;
      result.solution.diagnostics.max_inner_iterations = it + 1;
      attach_decomposition(result.solution, spec, dV);
      return result;
    }
  }
  throw ConvergenceError("picard_solve: no convergence in " + std::to_string(max_iters) +
                         " sweeps (L dK too large?)");
}

ResidualReport residual_check(const BSDESolution& solution, const BSDESpec& spec,
                              std::optional<Scheme> as_scheme) {
  const auto& m = *spec.model;
  const Scheme scheme = as_scheme.value_or(solution.diagnostics.scheme);
  const DriverLayout lay = driver_layout(spec);

  ResidualReport rep;
  rep.per_step.assign(static_cast<std::size_t>(m.steps()), 0.0);
  rep.kappa_excess = -std::numeric_limits<double>::infinity();
  std::vector<double> zbuf(static_cast<std::size_t>(lay.dim));
  std::vector<double> zw(static_cast<std::size_t>(lay.dim));
  for (int k = 0; k < m.steps(); ++k) {
    const double t = m.time_at(k);
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double ey = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        ey += m.probabilities()[j] * solution.Y.at(k + 1, m.child_index(k, i, j));
      for (int c = 0; c < lay.dim; ++c) {
        zbuf[static_cast<std::size_t>(c)] = solution.Z[static_cast<std::size_t>(c)].at(k, i);
        const double g = c < static_cast<int>(spec.gamma.size()) ? spec.gamma[static_cast<std::size_t>(c)] : 1.0;
        zw[static_cast<std::size_t>(c)] = std::sqrt(g) * zbuf[static_cast<std::size_t>(c)];
      }
      const double dK = predictable_clock_increment(spec, k, i);
      const double yarg = scheme == Scheme::Explicit ? ey : solution.Y.at(k, i);
      const double defect =
          std::abs(solution.Y.at(k, i) - ey - spec.coefficient(t, yarg, zbuf) * dK);
      rep.per_step[static_cast<std::size_t>(k)] =
          std::max(rep.per_step[static_cast<std::size_t>(k)], defect);
      rep.kappa_excess =
          std::max(rep.kappa_excess, std::abs(spec.coefficient(t, solution.Y.at(k, i), zbuf)) -
                                         kappa_eval(t, solution.Y.at(k, i), zw,
                                                    spec.coefficient.growth()));
    }
  }
  for (double d : rep.per_step) {
    rep.max_defect = std::max(rep.max_defect, d);
    rep.total_defect += d;
  }
  return rep;
}

}  // namespace qslab
