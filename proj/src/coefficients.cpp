#include "qslab/coefficients.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "qslab/rng.hpp"

namespace qslab {

namespace {

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

double l2sq(std::span<const double> z) {
  double s = 0.0;
  for (double x : z) s += x * x;
  return s;
}

}  // namespace

double kappa_eval(double, double y, std::span<const double> z, const GrowthData& g) {
  return g.l / g.delta + g.c * std::abs(y) + 0.5 * g.delta * l2sq(z);
}

double kappa_eval(double t, double y, double z, const GrowthData& g) {
  return kappa_eval(t, y, std::span<const double>(&z, 1), g);
}

double q_trunc(std::span<const double> z, double n) {
  require(n >= 0.0, "q_trunc: n must be nonnegative");
  const double r = std::sqrt(l2sq(z));
  return r <= n ? 0.5 * r * r : n * r - 0.5 * n * n;
}

double q_trunc(double z, double n) {
  return q_trunc(std::span<const double>(&z, 1), n);
}

double q_trunc_delta(double z, double n, double delta) {
  require(n >= 0.0, "q_trunc_delta: n must be nonnegative");
  const double r = std::abs(z);
  return r <= n / delta ? 0.5 * delta * r * r : n * r - 0.5 * n * n / delta;
}

// -- Coefficient -----------------------------------------------------------------

Coefficient::Coefficient(std::string name, Eval eval, GrowthData growth,
                         std::optional<double> lipschitz)
    : name_(std::move(name)), eval_(std::move(eval)), growth_(growth), lipschitz_(lipschitz) {}

double Coefficient::operator()(double t, double y, std::span<const double> z) const {
  const double v = eval_(t, y, z);
  if (!std::isfinite(v)) throw Error("Coefficient '" + name_ + "': non-finite value");
  return v;
}

double Coefficient::eval1(double t, double y, double z) const {
  return (*this)(t, y, std::span<const double>(&z, 1));
}

void Coefficient::set_analytic_ladder(std::function<Coefficient(double)> hook) {
  ladder_hook_ = std::move(hook);
}

void Coefficient::set_analytic_lower_truncate(std::function<Coefficient(double)> hook) {
  trunc_hook_ = std::move(hook);
}

// -- Numeric inf-convolution --------------------------------------------------------

namespace {

// Grid table of the two-pass separable l1 distance transform, with enough
// sweep state kept to answer off-grid queries exactly (w.r.t. the grid
// infimum) and to detect boundary attainment.
struct EnvelopeTable {
  GridSpec grid;
  double n = 1.0;
  // After the u-pass: forward/backward sweeps of g(u_a, w_b) + n * distance,
  // both indexed a * G + b.
  std::vector<double> fwd_u, bwd_u;

  double h_of(double y, int b) const {
    const int G = grid.points;
    const double du = grid.spacing();
    if (y <= grid.lo) return bwd_u[static_cast<std::size_t>(b)] + n * (grid.lo - y);
    if (y >= grid.hi)
      return fwd_u[static_cast<std::size_t>((G - 1) * G + b)] + n * (y - grid.hi);
    const int alo = static_cast<int>((y - grid.lo) / du);
    const int ahi = std::min(alo + 1, G - 1);
    const double lo_val = fwd_u[static_cast<std::size_t>(alo * G + b)] + n * (y - grid.at(alo));
    const double hi_val = bwd_u[static_cast<std::size_t>(ahi * G + b)] + n * (grid.at(ahi) - y);
    return std::min(lo_val, hi_val);
  }

  double eval(double y, double z) const {
    double best = std::numeric_limits<double>::infinity();
    for (int b = 0; b < grid.points; ++b)
      best = std::min(best, h_of(y, b) + n * std::abs(z - grid.at(b)));
    return best;
  }
};

// 1-D in-place Lipschitz envelope along a strided line, with argmin tracking.
void lipschitz_sweep(std::vector<double>& v, std::vector<int>& arg, int count, int stride,
                     int offset, double step_cost) {
  for (int i = 1; i < count; ++i) {
    const int at = offset + i * stride;
    const int prev = offset + (i - 1) * stride;
    if (v[static_cast<std::size_t>(prev)] + step_cost < v[static_cast<std::size_t>(at)]) {
      v[static_cast<std::size_t>(at)] = v[static_cast<std::size_t>(prev)] + step_cost;
      arg[static_cast<std::size_t>(at)] = arg[static_cast<std::size_t>(prev)];
    }
  }
  for (int i = count - 2; i >= 0; --i) {
    const int at = offset + i * stride;
    const int next = offset + (i + 1) * stride;
    if (v[static_cast<std::size_t>(next)] + step_cost < v[static_cast<std::size_t>(at)]) {
      v[static_cast<std::size_t>(at)] = v[static_cast<std::size_t>(next)] + step_cost;
      arg[static_cast<std::size_t>(at)] = arg[static_cast<std::size_t>(next)];
    }
  }
}

std::shared_ptr<EnvelopeTable> build_envelope(const Coefficient& g, double n,
                                              const GridSpec& grid) {
  require(n >= 0.0, "inf_convolve: n must be nonnegative");
  require(grid.points >= 3, "inf_convolve: grid too coarse");
  const int G = grid.points;
  const double du = grid.spacing();
  const double cost = n * du;

  auto table = std::make_shared<EnvelopeTable>();
  table->grid = grid;
  table->n = n;

  std::vector<double> raw(static_cast<std::size_t>(G) * G);
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b) {
      const double v = g.eval1(0.0, grid.at(a), grid.at(b));
      if (!std::isfinite(v))
        throw Error("inf_convolve: non-finite sample (coefficient unbounded?)");
      raw[static_cast<std::size_t>(a) * G + b] = v;
    }

  // Pass over u (rows), then over w (columns); track the attaining cell.
  std::vector<double> env = raw;
  std::vector<int> arg_u(env.size()), arg_w(env.size());
  for (std::size_t i = 0; i < env.size(); ++i) arg_u[i] = static_cast<int>(i) / G;
  for (int b = 0; b < G; ++b) lipschitz_sweep(env, arg_u, G, G, b, cost);
  table->fwd_u.assign(raw.begin(), raw.end());
  table->bwd_u.assign(raw.begin(), raw.end());
  for (int b = 0; b < G; ++b) {
    for (int a = 1; a < G; ++a) {
      auto& cur = table->fwd_u[static_cast<std::size_t>(a) * G + b];
      cur = std::min(cur, table->fwd_u[static_cast<std::size_t>(a - 1) * G + b] + cost);
    }
    for (int a = G - 2; a >= 0; --a) {
      auto& cur = table->bwd_u[static_cast<std::size_t>(a) * G + b];
      cur = std::min(cur, table->bwd_u[static_cast<std::size_t>(a + 1) * G + b] + cost);
    }
  }
  std::vector<int> arg_u_of_w = arg_u;  // propagate u-argmins through the w-pass
  for (std::size_t i = 0; i < env.size(); ++i) arg_w[i] = static_cast<int>(i) % G;
  for (int a = 0; a < G; ++a) {
    // combined sweep over w that carries both the w-argmin and its u-argmin
    for (int b = 1; b < G; ++b) {
      const std::size_t at = static_cast<std::size_t>(a) * G + b;
      if (env[at - 1] + cost < env[at]) {
        env[at] = env[at - 1] + cost;
        arg_w[at] = arg_w[at - 1];
        arg_u_of_w[at] = arg_u_of_w[at - 1];
      }
    }
    for (int b = G - 2; b >= 0; --b) {
      const std::size_t at = static_cast<std::size_t>(a) * G + b;
      if (env[at + 1] + cost < env[at]) {
        env[at] = env[at + 1] + cost;
        arg_w[at] = arg_w[at + 1];
        arg_u_of_w[at] = arg_u_of_w[at + 1];
      }
    }
  }

  // Reject when the infimum escapes through the grid boundary.
  for (int a = 0; a < G; ++a)
    for (int b = 0; b < G; ++b) {
      const std::size_t at = static_cast<std::size_t>(a) * G + b;
      const int au = arg_u_of_w[at];
      const int bw = arg_w[at];
      const bool u_boundary = (au == 0 || au == G - 1) && au != a;
      const bool w_boundary = (bw == 0 || bw == G - 1) && bw != b;
      if (u_boundary || w_boundary)
        throw Error("inf_convolve: infimum attained on the grid boundary (grid too small)");
    }
  return table;
}

Coefficient make_numeric_envelope(const Coefficient& g, double n, const GridSpec& grid) {
  auto table = build_envelope(g, n, grid);
  auto base = std::make_shared<Coefficient>(g);
  GrowthData growth = g.growth();
  // The query point itself always competes with the grid candidates, so the
  // result never exceeds g and is exact wherever g is locally n-Lipschitz.
  return Coefficient(
      g.name() + "[]b_" + std::to_string(n),
      [table, base](double t, double y, std::span<const double> z) {
        require(z.size() == 1, "inf_convolve: numeric envelope supports scalar z only");
        return std::min(table->eval(y, z[0]), (*base)(t, y, z));
      },
      growth, n);
}

}  // namespace

Coefficient inf_convolve_numeric(const Coefficient& g, double n, const GridSpec& grid) {
  return make_numeric_envelope(g, n, grid);
}

Coefficient inf_convolve(const Coefficient& g, double n, const GridSpec& grid) {
  if (g.ladder_hook_) return g.ladder_hook_(n);
  return make_numeric_envelope(g, n, grid);
}

Coefficient lower_truncate(const Coefficient& g, double p, const GridSpec& grid) {
  if (g.trunc_hook_) return g.trunc_hook_(p);
  // Numeric: g_p = g^+ - (g^-) [] b_p with the parts split pointwise.
  Coefficient neg_part(
      g.name() + "^-",
      [g](double t, double y, std::span<const double> z) {
        return std::max(-g(t, y, z), 0.0);
      },
      g.growth());
  Coefficient env = inf_convolve_numeric(neg_part, p, grid);
  auto env_ptr = std::make_shared<Coefficient>(std::move(env));
  auto base = std::make_shared<Coefficient>(g);
  return Coefficient(
      g.name() + "_p" + std::to_string(p),
      [base, env_ptr](double t, double y, std::span<const double> z) {
        return std::max((*base)(t, y, z), 0.0) - (*env_ptr)(t, y, z);
      },
      g.growth());
}

// -- Structure verification -----------------------------------------------------------

StructureReport verify_structure(const Coefficient& g, const SampleSpec& spec) {
  SampleSpec s = spec;
  if (s.y_grid.empty())
    for (int i = 0; i <= 40; ++i) s.y_grid.push_back(-s.range + 2.0 * s.range * i / 40.0);
  if (s.z_grid.empty())
    for (int i = 0; i <= 40; ++i) s.z_grid.push_back(-s.range + 2.0 * s.range * i / 40.0);

  StructureReport rep;
  rep.worst_excess = -std::numeric_limits<double>::infinity();
  auto probe = [&](double t, double y, std::span<const double> z) {
    const double excess = std::abs(g(t, y, z)) - kappa_eval(t, y, z, g.growth());
    if (excess > rep.worst_excess) {
      rep.worst_excess = excess;
      rep.worst_t = t;
      rep.worst_y = y;
      rep.worst_z.assign(z.begin(), z.end());
    }
  };

  std::vector<double> z(static_cast<std::size_t>(s.z_dim), 0.0);
  for (double t : s.t_grid)
    for (double y : s.y_grid)
      for (int axis = 0; axis < s.z_dim; ++axis)
        for (double zv : s.z_grid) {
          std::fill(z.begin(), z.end(), 0.0);
          z[static_cast<std::size_t>(axis)] = zv;
          probe(t, y, z);
        }

  Rng rng = Rng(s.seed).split(0xc0ef);
  for (int i = 0; i < s.random_points; ++i) {
    const double t = s.t_grid[static_cast<std::size_t>(rng.below(s.t_grid.size()))];
    const double y = rng.uniform(-s.range, s.range);
    for (double& zi : z) zi = rng.uniform(-s.range, s.range);
    probe(t, y, z);
  }
  rep.pass = rep.worst_excess <= 1e-12;
  return rep;
}

// -- Ladders ------------------------------------------------------------------------------

RegularizationLadder make_ladder(const Coefficient& g, const std::vector<double>& ns,
                                 const GridSpec& grid) {
  require(std::is_sorted(ns.begin(), ns.end()), "make_ladder: indices must be increasing");
  RegularizationLadder ladder;
  ladder.base = g;
  ladder.indices = ns;
  ladder.grid = grid;
  for (double n : ns) ladder.members.push_back(inf_convolve(g, n, grid));
  return ladder;
}

LadderReport verify_ladder(const RegularizationLadder& ladder,
                           const std::vector<MovingPoint>& moving, double target_y,
                           double target_z) {
  LadderReport rep;
  rep.monotone = rep.dominated = rep.lipschitz_ok = rep.bounded = true;

  const int probe_pts = 41;
  auto coord = [&](int i) {
    return ladder.grid.lo + (ladder.grid.hi - ladder.grid.lo) * i / (probe_pts - 1.0);
  };
  const auto& gr = ladder.base.growth();

  for (int iy = 0; iy < probe_pts; ++iy) {
    for (int iz = 0; iz < probe_pts; ++iz) {
      const double y = coord(iy), z = coord(iz);
      double prev = -std::numeric_limits<double>::infinity();
      const double base_val = ladder.base.eval1(0.0, y, z);
      for (std::size_t i = 0; i < ladder.members.size(); ++i) {
        const double v = ladder.members[i].eval1(0.0, y, z);
        if (v < prev - 1e-12) {
          rep.monotone = false;
          rep.worst_gap = std::max(rep.worst_gap, prev - v);
        }
        if (v > base_val + 1e-12) {
          rep.dominated = false;
          rep.worst_gap = std::max(rep.worst_gap, v - base_val);
        }
        const double n = ladder.indices[i];
        const double bound = gr.l / gr.delta + gr.c * std::abs(y) +
                             std::max(q_trunc_delta(z, ladder.lower_p, gr.delta),
                                      q_trunc_delta(z, n, gr.delta));
        if (std::abs(v) > bound + 1e-9) rep.bounded = false;
        prev = v;
      }
    }
  }

  Rng rng(0xaddeULL);
  for (int trial = 0; trial < 200; ++trial) {
    const double y1 = rng.uniform(ladder.grid.lo, ladder.grid.hi);
    const double z1 = rng.uniform(ladder.grid.lo, ladder.grid.hi);
    const double y2 = rng.uniform(ladder.grid.lo, ladder.grid.hi);
    const double z2 = rng.uniform(ladder.grid.lo, ladder.grid.hi);
    for (std::size_t i = 0; i < ladder.members.size(); ++i) {
      const double diff =
          std::abs(ladder.members[i].eval1(0.0, y1, z1) - ladder.members[i].eval1(0.0, y2, z2));
      const double allowed =
          ladder.indices[i] * (std::abs(y1 - y2) + std::abs(z1 - z2)) + 1e-9;
      if (diff > allowed) {
        rep.lipschitz_ok = false;
        rep.worst_gap = std::max(rep.worst_gap, diff - allowed);
      }
    }
  }

  if (!moving.empty()) {
    require(moving.size() == ladder.members.size(),
            "verify_ladder: one moving point per ladder member");
    const double target = ladder.base.eval1(0.0, target_y, target_z);
    for (std::size_t i = 0; i < moving.size(); ++i)
      rep.moving_residuals.push_back(
          std::abs(ladder.members[i].eval1(0.0, moving[i].y, moving[i].z) - target));
  }
  return rep;
}

// -- Registry -------------------------------------------------------------------------------

namespace {

double sum_q_trunc_delta(std::span<const double> z, double n, double delta) {
  double s = 0.0;
  for (double zi : z) s += q_trunc_delta(zi, n, delta);
  return s;
}

Coefficient make_q_delta(double delta) {
  Coefficient c(
      delta == 1.0 ? "q" : "q-delta",
      [delta](double, double, std::span<const double> z) { return 0.5 * delta * l2sq(z); },
      GrowthData{0.0, 0.0, delta});
  c.set_analytic_ladder([delta](double n) {
    Coefficient gn(
        "q_n" + std::to_string(n),
        [n, delta](double, double, std::span<const double> z) {
          return sum_q_trunc_delta(z, n, delta);
        },
        GrowthData{0.0, 0.0, delta}, n);
    // q_n [] b_m = q_min(m, n).
    gn.set_analytic_ladder([n, delta](double m) {
      const double k = std::min(m, n);
      return Coefficient(
          "q_n" + std::to_string(k),
          [k, delta](double, double, std::span<const double> z) {
            return sum_q_trunc_delta(z, k, delta);
          },
          GrowthData{0.0, 0.0, delta}, k);
    });
    return gn;
  });
  c.set_analytic_lower_truncate([c](double) { return c; });  // q >= 0
  return c;
}

Coefficient make_neg_q_trunc(double p) {
  // -q_p: p-Lipschitz in z, so its own b_n envelope for n >= p.
  Coefficient c(
      "neg-q_p" + std::to_string(p),
      [p](double, double, std::span<const double> z) { return -sum_q_trunc_delta(z, p, 1.0); },
      GrowthData{0.0, 0.0, 1.0}, p);
  c.set_analytic_ladder([p](double n) {
    require(n >= p, "neg-q_p: b_n regularization unbounded below for n < p");
    return make_neg_q_trunc(p);
  });
  return c;
}

}  // namespace

Coefficient make_coefficient(const std::string& name, const std::vector<double>& params) {
  auto param = [&](std::size_t i, double fallback) {
    return i < params.size() ? params[i] : fallback;
  };

  if (name == "q") return make_q_delta(1.0);
  if (name == "q-delta") return make_q_delta(param(0, 1.0));

  if (name == "neg-q") {
    Coefficient c(
        "neg-q", [](double, double, std::span<const double> z) { return -0.5 * l2sq(z); },
        GrowthData{0.0, 0.0, 1.0});
    c.set_analytic_lower_truncate([](double p) { return make_neg_q_trunc(p); });
    return c;
  }

  if (name == "sin-plus-q") {
    Coefficient c(
        "sin-plus-q",
        [](double, double y, std::span<const double> z) { return std::sin(y) + 0.5 * l2sq(z); },
        GrowthData{1.0, 0.0, 1.0});
    c.set_analytic_ladder([](double n) -> Coefficient {
      require(n >= 1.0, "sin-plus-q: closed-form ladder needs n >= 1");
      return Coefficient(
          "sin-plus-q_n" + std::to_string(n),
          [n](double, double y, std::span<const double> z) {
            return std::sin(y) + sum_q_trunc_delta(z, n, 1.0);
          },
          GrowthData{1.0, 0.0, 1.0}, n);
    });
    return c;
  }

  if (name == "lq") {
    const double l = param(0, 0.0), c = param(1, 0.0), delta = param(2, 1.0);
    Coefficient g(
        "lq",
        [l, c, delta](double, double y, std::span<const double> z) {
          return l / delta + c * std::abs(y) + 0.5 * delta * l2sq(z);
        },
        GrowthData{l, c, delta});
    g.set_analytic_ladder([l, c, delta](double n) -> Coefficient {
      require(n >= c, "lq: closed-form ladder needs n >= c");
      return Coefficient(
          "lq_n" + std::to_string(n),
          [l, c, delta, n](double, double y, std::span<const double> z) {
            return l / delta + c * std::abs(y) + sum_q_trunc_delta(z, n, delta);
          },
          GrowthData{l, c, delta}, n);
    });
    return g;
  }

  if (name == "zero" || (name == "constant" && params.empty())) {
    Coefficient c(
        "zero", [](double, double, std::span<const double>) { return 0.0; },
        GrowthData{0.0, 0.0, 1.0}, 0.0);
    c.set_analytic_ladder([c](double) { return c; });
    return c;
  }

  if (name == "constant") {
    const double v = params[0];
    Coefficient c(
        "constant", [v](double, double, std::span<const double>) { return v; },
        GrowthData{std::abs(v), 0.0, 1.0}, 0.0);
    c.set_analytic_ladder([c](double) { return c; });
    return c;
  }

  throw Error("make_coefficient: unknown driver '" + name + "'");
}

}  // namespace qslab
