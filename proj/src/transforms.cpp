#include "qslab/transforms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qslab {

namespace {

constexpr double kLogHeadroom = 700.0;
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

/// Ancestor node indices of a terminal path, idx[k] for k = 0..N.
std::vector<NodeIndex> path_nodes(const LatticeModel& m, NodeIndex terminal) {
  std::vector<NodeIndex> idx(m.steps() + 1);
  idx[m.steps()] = terminal;
  for (int k = m.steps(); k > 0; --k) idx[k - 1] = idx[k] / m.branching();
  return idx;
}

/// Forward accumulation with branch-dependent increments (adapted measures).
AdaptedProcess accumulate_branchwise(const ModelPtr& model, double x0,
                                     const std::function<double(int, NodeIndex, int)>& inc) {
  const auto& m = *model;
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), kNaN);
  v[0] = x0;
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const double here = v[m.node_id(k, i)];
      for (int j = 0; j < m.branching(); ++j) {
        const double next = here + inc(k, i, j);
        double& slot = v[m.node_id(k + 1, m.child_index(k, i, j))];
        if (std::isnan(slot)) {
          slot = next;
        } else if (std::abs(slot - next) > 1e-9 * std::max(1.0, std::abs(slot))) {
          throw PathDependenceError("transform: path-dependent values on a recombining model");
        }
      }
    }
  }
  return AdaptedProcess(model, std::move(v));
}

}  // namespace

// -- StructureParams --------------------------------------------------------------

StructureParams StructureParams::zero(const ModelPtr& model) {
  StructureParams p;
  p.lambda = AdaptedProcess::zero(model);
  p.growth = AdaptedProcess::zero(model);
  p.delta = 1.0;
  return p;
}

StructureParams StructureParams::from_rates(const ModelPtr& model, double l, double c,
                                            double delta) {
  std::vector<double> lam(model->steps() + 1), gr(model->steps() + 1);
  for (int k = 0; k <= model->steps(); ++k) {
    lam[k] = l * model->time_at(k);
    gr[k] = c * model->time_at(k);
  }
  StructureParams p;
  p.lambda = AdaptedProcess::from_steps(model, lam);
  p.growth = AdaptedProcess::from_steps(model, gr);
  p.delta = delta;
  p.validate();
  return p;
}

void StructureParams::validate() const {
  require(delta > 0.0, "StructureParams: delta must be positive");
  require(lambda.defined() && growth.defined(), "StructureParams: processes unset");
  const auto& m = *lambda.model();
  require(lambda.root() == 0.0 && growth.root() == 0.0,
          "StructureParams: Lambda and C must start at 0");
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i)
      for (int j = 0; j < m.branching(); ++j) {
        const NodeIndex c = m.child_index(k, i, j);
        require(lambda.at(k + 1, c) >= lambda.at(k, i),
                "StructureParams: Lambda must be non-decreasing");
        require(growth.at(k + 1, c) >= growth.at(k, i),
                "StructureParams: C must be non-decreasing");
      }
}

// -- Entropic process ---------------------------------------------------------------

EntropicProcess entropic_process(const ModelPtr& model, const std::vector<double>& xi,
                                 double delta) {
  const auto& m = *model;
  require(delta > 0.0, "entropic_process: delta must be positive");
  require(static_cast<NodeIndex>(xi.size()) == m.level_size(m.steps()),
          "entropic_process: terminal size mismatch");
  for (NodeIndex t = 0; t < m.level_size(m.steps()); ++t) {
    if (!std::isfinite(xi[static_cast<std::size_t>(t)]) ||
        std::abs(delta * xi[static_cast<std::size_t>(t)]) > kLogHeadroom)
      throw OverflowError("entropic_process: terminal value beyond log-space headroom",
                          m.steps(), t);
  }

  std::vector<double> v(static_cast<std::size_t>(m.node_count()));
  for (NodeIndex t = 0; t < m.level_size(m.steps()); ++t)
    v[static_cast<std::size_t>(m.node_id(m.steps(), t))] = xi[static_cast<std::size_t>(t)];

  // Backward log-sum-exp recursion on delta-scaled values.
  for (int k = m.steps() - 1; k >= 0; --k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mx = -std::numeric_limits<double>::infinity();
      for (int j = 0; j < m.branching(); ++j)
        mx = std::max(mx, delta * v[m.node_id(k + 1, m.child_index(k, i, j))]);
      double s = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        s += m.probabilities()[j] *
             std::exp(delta * v[m.node_id(k + 1, m.child_index(k, i, j))] - mx);
      const double r = (mx + std::log(s)) / delta;
      if (std::abs(delta * r) > kLogHeadroom)
        throw OverflowError("entropic_process: value beyond log-space headroom", k, i);
      v[m.node_id(k, i)] = r;
    }
  }
  return EntropicProcess{AdaptedProcess(model, std::move(v)), delta};
}

namespace {

/// ln of the conditional expectation of exp(exponent(path)) given the sigma
/// node, grouped over paths; exact weights, log-sum-exp in each group.
StoppedValues conditional_lse(const StoppingTime& sigma,
                              const std::function<double(NodeIndex, int)>& exponent) {
  const auto& m = *sigma.model();
  const std::size_t n = static_cast<std::size_t>(m.node_count());
  std::vector<double> mx(n, -std::numeric_limits<double>::infinity());
  std::vector<double> sum(n, 0.0), den(n, 0.0);
  std::vector<std::uint8_t> seen(n, 0);

  std::vector<NodeIndex> group(static_cast<std::size_t>(m.path_count()));
  std::vector<double> expo(static_cast<std::size_t>(m.path_count()));
  for_each_path(m, [&](NodeIndex t, double) {
    const auto nodes = path_nodes(m, t);
    int ks = m.steps();
    for (int k = 0; k <= m.steps(); ++k)
      if (sigma.flagged(k, nodes[k])) {
        ks = k;
        break;
      }
    const NodeIndex id = m.node_id(ks, nodes[ks]);
    group[static_cast<std::size_t>(t)] = id;
    const double x = exponent(t, ks);
    expo[static_cast<std::size_t>(t)] = x;
    mx[static_cast<std::size_t>(id)] = std::max(mx[static_cast<std::size_t>(id)], x);
    seen[static_cast<std::size_t>(id)] = 1;
  });
  for_each_path(m, [&](NodeIndex t, double w) {
    const std::size_t id = static_cast<std::size_t>(group[static_cast<std::size_t>(t)]);
    sum[id] += w * std::exp(expo[static_cast<std::size_t>(t)] - mx[id]);
    den[id] += w;
  });

  StoppedValues out;
  out.value.assign(n, kNaN);
  out.defined = seen;
  for (std::size_t id = 0; id < n; ++id)
    if (seen[id]) out.value[id] = mx[id] + std::log(sum[id] / den[id]);
  return out;
}

}  // namespace

StoppedValues entropic_at(const StoppingTime& sigma, const std::vector<double>& xi,
                          double delta) {
  const auto& m = *sigma.model();
  require(static_cast<NodeIndex>(xi.size()) == m.level_size(m.steps()),
          "entropic_at: terminal size mismatch");
  StoppedValues out = conditional_lse(sigma, [&](NodeIndex t, int) {
    return delta * xi[static_cast<std::size_t>(t)];
  });
  for (double& v : out.value)
    if (!std::isnan(v)) v /= delta;
  return out;
}

// -- phi / Phi ------------------------------------------------------------------------

PathEnvelope phi_envelope(const ModelPtr& model, const std::vector<double>& eta,
                          const StructureParams& params) {
  const auto& m = *model;
  require(!m.recombining(), "phi_envelope: needs a non-recombining model");
  require(static_cast<NodeIndex>(eta.size()) == m.level_size(m.steps()),
          "phi_envelope: terminal size mismatch");
  params.validate();

  PathEnvelope env;
  env.model = model;
  env.phi.resize(static_cast<std::size_t>(m.path_count()));
  for (NodeIndex t = 0; t < m.path_count(); ++t) {
    const double e = eta[static_cast<std::size_t>(t)];
    require(e >= 0.0, "phi_envelope: eta must be nonnegative");
    const auto nodes = path_nodes(m, t);
    auto& phi = env.phi[static_cast<std::size_t>(t)];
    phi.assign(m.steps() + 1, 0.0);
    phi[m.steps()] = e;
    for (int k = m.steps() - 1; k >= 0; --k) {
      const double dL = params.lambda.at(k + 1, nodes[k + 1]) - params.lambda.at(k, nodes[k]);
      const double dC = params.growth.at(k + 1, nodes[k + 1]) - params.growth.at(k, nodes[k]);
      phi[k] = dL + std::exp(dC) * phi[k + 1];
      if (phi[k] > kLogHeadroom)
        throw OverflowError("phi_envelope: envelope beyond log-space headroom", k, nodes[k]);
    }
  }
  return env;
}

AdaptedProcess phi_projection(const std::vector<double>& eta, const StructureParams& params) {
  const auto& m = *params.lambda.model();
  const PathEnvelope env = phi_envelope(params.lambda.model(), eta, params);
  std::vector<double> num(static_cast<std::size_t>(m.node_count()), 0.0);
  std::vector<double> den(static_cast<std::size_t>(m.node_count()), 0.0);
  for_each_path(m, [&](NodeIndex t, double w) {
    const auto nodes = path_nodes(m, t);
    for (int k = 0; k <= m.steps(); ++k) {
      const std::size_t id = static_cast<std::size_t>(m.node_id(k, nodes[k]));
      num[id] += w * std::exp(env.phi[static_cast<std::size_t>(t)][k]);
      den[id] += w;
    }
  });
  std::vector<double> v(num.size());
  for (std::size_t id = 0; id < v.size(); ++id) v[id] = num[id] / den[id];
  return AdaptedProcess(params.lambda.model(), std::move(v));
}

StoppedValues phi_projection_at(const StoppingTime& sigma, const std::vector<double>& eta,
                                const StructureParams& params) {
  const PathEnvelope env = phi_envelope(sigma.model(), eta, params);
  StoppedValues out = conditional_lse(sigma, [&](NodeIndex t, int ks) {
    return env.phi[static_cast<std::size_t>(t)][ks];
  });
  for (double& v : out.value)
    if (!std::isnan(v)) v = std::exp(v);
  return out;
}

EnvelopeConstancy phi_u_constancy(const PathEnvelope& env, const StructureParams& params) {
  const auto& m = *env.model;
  EnvelopeConstancy res;
  for (NodeIndex t = 0; t < m.path_count(); ++t) {
    const auto nodes = path_nodes(m, t);
    const auto& phi = env.phi[static_cast<std::size_t>(t)];
    double total = 0.0;
    double u_prev = std::exp(phi[0]);
    double integral = 0.0;
    for (int k = 0; k < m.steps(); ++k) {
      const double dL = params.lambda.at(k + 1, nodes[k + 1]) - params.lambda.at(k, nodes[k]);
      const double dC = params.growth.at(k + 1, nodes[k + 1]) - params.growth.at(k, nodes[k]);
      integral += std::exp(phi[k]) * (dL + phi[k] * dC);
      const double u_next = std::exp(phi[k + 1]) + integral;
      const double defect = std::abs(u_next - u_prev);
      res.max_step_defect = std::max(res.max_step_defect, defect);
      total += defect;
      u_prev = u_next;
    }
    res.total_defect = std::max(res.total_defect, total);
  }
  return res;
}

// -- X / Xbar / U -----------------------------------------------------------------------

AdaptedProcess x_transform(const AdaptedProcess& Y, const StructureParams& params) {
  const auto& m = *Y.model();
  AdaptedProcess integral = accumulate_branchwise(Y.model(), 0.0, [&](int k, NodeIndex i, int j) {
    const NodeIndex c = m.child_index(k, i, j);
    return std::abs(Y.at(k, i)) * (params.growth.at(k + 1, c) - params.growth.at(k, i));
  });
  std::vector<double> v(Y.values().size());
  for (std::size_t n = 0; n < v.size(); ++n)
    v[n] = Y.values()[n] + params.lambda.values()[n] + integral.values()[n];
  return AdaptedProcess(Y.model(), std::move(v));
}

AdaptedProcess xbar_transform(const AdaptedProcess& Y, const StructureParams& params) {
  const auto& m = *Y.model();
  AdaptedProcess integral = accumulate_branchwise(Y.model(), 0.0, [&](int k, NodeIndex i, int j) {
    const NodeIndex c = m.child_index(k, i, j);
    return std::exp(params.growth.at(k, i)) *
           (params.lambda.at(k + 1, c) - params.lambda.at(k, i));
  });
  std::vector<double> v(Y.values().size());
  for (std::size_t n = 0; n < v.size(); ++n)
    v[n] = std::exp(params.growth.values()[n]) * std::abs(Y.values()[n]) + integral.values()[n];
  return AdaptedProcess(Y.model(), std::move(v));
}

AdaptedProcess u_transform(const AdaptedProcess& Y, const StructureParams& params, int sign) {
  require(sign == 1 || sign == -1, "u_transform: sign must be +-1");
  const auto& m = *Y.model();
  const double s = static_cast<double>(sign);
  for (double y : Y.values())
    if (std::abs(y) > kLogHeadroom)
      throw OverflowError("u_transform: exponent beyond log-space headroom", -1, -1);
  AdaptedProcess integral = accumulate_branchwise(Y.model(), 0.0, [&](int k, NodeIndex i, int j) {
    const NodeIndex c = m.child_index(k, i, j);
    const double dL = params.lambda.at(k + 1, c) - params.lambda.at(k, i);
    const double dC = params.growth.at(k + 1, c) - params.growth.at(k, i);
    return std::exp(s * Y.at(k, i)) * (dL + std::abs(Y.at(k, i)) * dC);
  });
  std::vector<double> v(Y.values().size());
  for (std::size_t n = 0; n < v.size(); ++n)
    v[n] = std::exp(s * Y.values()[n]) + integral.values()[n];
  return AdaptedProcess(Y.model(), std::move(v));
}

// -- Classification -----------------------------------------------------------------------

ClassifyReport classify_quadratic(const AdaptedProcess& Y, const StructureParams& params,
                                  double tol) {
  const auto& m = *Y.model();
  params.validate();
  const double delta = params.delta;
  ClassifyReport rep;

  const Decomposition dec = doob_decompose(Y);

  double max_dqv = 0.0;
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const NodeIndex c0 = m.child_index(k, i, 0);
      const double dV = dec.drift.at(k + 1, c0) - dec.drift.at(k, i);
      const double dQ = dec.qv.at(k + 1, c0) - dec.qv.at(k, i);
      max_dqv = std::max(max_dqv, delta * delta * dQ);
      double dL = 0.0, dC = 0.0;  // predictable projections of the forcing
      for (int j = 0; j < m.branching(); ++j) {
        const NodeIndex c = m.child_index(k, i, j);
        dL += m.probabilities()[j] * (params.lambda.at(k + 1, c) - params.lambda.at(k, i));
        dC += m.probabilities()[j] * (params.growth.at(k + 1, c) - params.growth.at(k, i));
      }
      const double bound = dL / delta + std::abs(Y.at(k, i)) * dC + 0.5 * delta * dQ;
      const double slack = bound - std::abs(dV);
      if (slack < worst) {
        worst = slack;
        rep.structure_step = k;
        rep.structure_node = i;
      }
    }
  }
  rep.structure_margin = worst;
  rep.structure_ok = worst >= -tol;

  // Advisory exponential criterion: U(e^{+delta Y}) and U(e^{-delta Y}) must
  // be submartingales up to the per-step second-order defect of exp.
  rep.exp_tol = 5.0 * max_dqv * max_dqv;
  std::vector<double> scaled(Y.values().size());
  for (std::size_t n = 0; n < scaled.size(); ++n) scaled[n] = delta * Y.values()[n];
  const AdaptedProcess dY(Y.model(), std::move(scaled));
  rep.exp_worst = 0.0;
  rep.exp_defect = 0.0;
  std::vector<double> step_worst(static_cast<std::size_t>(m.steps()), 0.0);
  for (int sign : {1, -1}) {
    const AdaptedProcess U = u_transform(dY, params, sign);
    for (int k = 0; k < m.steps(); ++k) {
      for (NodeIndex i = 0; i < m.level_size(k); ++i) {
        double mean = 0.0;
        for (int j = 0; j < m.branching(); ++j)
          mean += m.probabilities()[j] * U.at(k + 1, m.child_index(k, i, j));
        const double norm = (mean - U.at(k, i)) / std::max(std::abs(U.at(k, i)), 1e-300);
        rep.exp_worst = std::min(rep.exp_worst, norm);
        step_worst[static_cast<std::size_t>(k)] =
            std::max(step_worst[static_cast<std::size_t>(k)], std::max(0.0, -norm));
      }
    }
  }
  for (double d : step_worst) rep.exp_defect += d;
  rep.exp_ok = rep.exp_worst >= -rep.exp_tol;
  return rep;
}

// -- Entropic band and class membership -------------------------------------------------------

BandReport check_entropic_band(const AdaptedProcess& X, double delta,
                               const std::vector<std::pair<StoppingTime, StoppingTime>>& pairs,
                               double tol) {
  const auto& m = *X.model();
  BandReport rep;
  rep.ok = true;
  rep.worst_margin = std::numeric_limits<double>::infinity();

  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& sigma = pairs[p].first;
    const auto& tau = pairs[p].second;
    // X at tau, read pathwise.
    std::vector<double> x_tau(static_cast<std::size_t>(m.path_count()));
    for_each_path(m, [&](NodeIndex t, double) {
      const auto nodes = path_nodes(m, t);
      int ks = m.steps(), kt = m.steps();
      for (int k = 0; k <= m.steps(); ++k)
        if (sigma.flagged(k, nodes[k])) {
          ks = k;
          break;
        }
      for (int k = 0; k <= m.steps(); ++k)
        if (tau.flagged(k, nodes[k])) {
          kt = k;
          break;
        }
      kt = std::max(ks, kt);
      x_tau[static_cast<std::size_t>(t)] = X.at(kt, nodes[kt]);
    });
    StoppedValues up = conditional_lse(
        sigma, [&](NodeIndex t, int) { return delta * x_tau[static_cast<std::size_t>(t)]; });
    StoppedValues lo = conditional_lse(
        sigma, [&](NodeIndex t, int) { return -delta * x_tau[static_cast<std::size_t>(t)]; });
    for (int k = 0; k <= m.steps(); ++k) {
      for (NodeIndex i = 0; i < m.level_size(k); ++i) {
        const std::size_t id = static_cast<std::size_t>(m.node_id(k, i));
        if (!up.defined[id]) continue;
        const double upper = up.value[id] / delta;
        const double lower = -lo.value[id] / delta;
        const double xs = X.at(k, i);
        const double margin = std::min(upper - xs, xs - lower);
        rep.worst_margin = std::min(rep.worst_margin, margin);
        if (margin < -tol) {
          rep.ok = false;
          rep.violations.push_back(BandViolation{p, k, i, -margin});
        }
      }
    }
  }
  return rep;
}

MembershipReport check_sq_membership(const AdaptedProcess& Y, const std::vector<double>& eta,
                                     const StructureParams& params,
                                     const std::vector<StoppingTime>& stops, double tol) {
  const auto& m = *Y.model();
  std::vector<double> eta_abs(eta.size());
  for (std::size_t t = 0; t < eta.size(); ++t) eta_abs[t] = std::abs(eta[t]);
  const auto yn = Y.terminal();
  for (std::size_t t = 0; t < eta_abs.size(); ++t)
    if (eta_abs[t] < std::abs(yn[t]) - 1e-12)
      throw Error("check_sq_membership: |eta| must dominate |Y_N| terminally");

  const PathEnvelope env = phi_envelope(Y.model(), eta_abs, params);
  MembershipReport rep;
  rep.margin = std::numeric_limits<double>::infinity();
  for (const auto& sigma : stops) {
    StoppedValues v = conditional_lse(sigma, [&](NodeIndex t, int ks) {
      return env.phi[static_cast<std::size_t>(t)][ks];
    });
    for (int k = 0; k <= m.steps(); ++k)
      for (NodeIndex i = 0; i < m.level_size(k); ++i) {
        const std::size_t id = static_cast<std::size_t>(m.node_id(k, i));
        if (!v.defined[id]) continue;
        const double margin = v.value[id] - std::abs(Y.at(k, i));
        if (margin < rep.margin) {
          rep.margin = margin;
          rep.worst_step = k;
          rep.worst_node = i;
        }
      }
  }
  rep.member = rep.margin >= -tol;
  return rep;
}

std::vector<StoppingTime> default_battery(const ModelPtr& model, std::uint64_t seed, int extra) {
  StoppingSpec spec;
  spec.deterministic_steps.resize(model->steps() + 1);
  for (int k = 0; k <= model->steps(); ++k) spec.deterministic_steps[k] = k;
  spec.count = extra;
  spec.seed = seed;
  return sample_stopping_times(model, spec);
}

std::vector<std::pair<StoppingTime, StoppingTime>> battery_pairs(
    const std::vector<StoppingTime>& battery) {
  std::vector<std::pair<StoppingTime, StoppingTime>> pairs;
  for (std::size_t a = 0; a < battery.size(); ++a)
    for (std::size_t b = a; b < battery.size(); ++b)
      pairs.emplace_back(StoppingTime::pathwise_min(battery[a], battery[b]),
                         StoppingTime::pathwise_max(battery[a], battery[b]));
  return pairs;
}

// -- Instance generators --------------------------------------------------------------

StructureInstance sample_structure_instance(const ModelPtr& model, std::uint64_t seed,
                                            bool violate) {
  const auto& m = *model;
  require(m.branching() == 2, "sample_structure_instance: binary models only");
  Rng rng = Rng(seed).split(0x51ab);
  const double l = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 0.5);
  const double c = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 0.5);

  StructureInstance inst;
  inst.params = StructureParams::from_rates(model, l, c, 1.0);
  inst.is_quadratic = !violate;
  if (violate) {
    inst.violation_step = static_cast<int>(rng.below(static_cast<std::uint64_t>(m.steps())));
    inst.violation_node =
        static_cast<NodeIndex>(rng.below(static_cast<std::uint64_t>(m.level_size(inst.violation_step))));
  }

  const double dt = m.dt();
  const double s = std::sqrt(dt);
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), 0.0);
  v[0] = rng.uniform(-0.5, 0.5);
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const double theta = rng.uniform(0.3, 1.0);
      const double beta = rng.uniform(-1.0, 1.0);
      const double here = v[static_cast<std::size_t>(m.node_id(k, i))];
      const double bound = l * dt + std::abs(here) * c * dt + 0.5 * theta * theta * dt;
      double dV = beta * bound;
      if (k == inst.violation_step && i == inst.violation_node)
        dV = bound + 0.5 * bound + 2.0 * dt;  // clearly past the bound
      v[static_cast<std::size_t>(m.node_id(k + 1, m.child_index(k, i, 0)))] =
          here + theta * s - dV;
      v[static_cast<std::size_t>(m.node_id(k + 1, m.child_index(k, i, 1)))] =
          here - theta * s - dV;
    }
  inst.Y = AdaptedProcess(model, std::move(v));
  return inst;
}

AdaptedProcess saturated_profile_instance(const ModelPtr& model, std::uint64_t seed) {
  const auto& m = *model;
  require(m.branching() == 2, "saturated_profile_instance: binary models only");
  Rng rng = Rng(seed).split(0x9a0f);
  const double base = rng.uniform(0.5, 0.8);
  const double amp = rng.uniform(0.1, 0.2);
  const double phase = rng.uniform(0.0, 6.28318530717958648);

  const double dt = m.dt();
  const double s = std::sqrt(dt);
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), 0.0);
  for (int k = 0; k < m.steps(); ++k) {
    const double theta = base + amp * std::sin(6.28318530717958648 * m.time_at(k) + phase);
    const double dV = 0.5 * theta * theta * dt;  // beta = 1, saturated
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const double here = v[static_cast<std::size_t>(m.node_id(k, i))];
      v[static_cast<std::size_t>(m.node_id(k + 1, m.child_index(k, i, 0)))] =
          here + theta * s - dV;
      v[static_cast<std::size_t>(m.node_id(k + 1, m.child_index(k, i, 1)))] =
          here - theta * s - dV;
    }
  }
  return AdaptedProcess(model, std::move(v));
}

AdaptedProcess sample_entropic_saturated(const ModelPtr& model, std::uint64_t seed) {
  const auto& m = *model;
  require(m.branching() == 2, "sample_entropic_saturated: binary models only");
  Rng rng = Rng(seed).split(0xba0d);
  const double s = std::sqrt(m.dt());
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), 0.0);
  v[0] = rng.uniform(-0.5, 0.5);
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const double theta = rng.uniform(0.3, 1.0);
      const double alpha = rng.uniform(-1.0, 1.0);
      const double drift = alpha * std::log(std::cosh(theta * s));
      const double here = v[static_cast<std::size_t>(m.node_id(k, i))];
      v[static_cast<std::size_t>(m.node_id(k + 1, m.child_index(k, i, 0)))] =
          here + theta * s - drift;
      v[static_cast<std::size_t>(m.node_id(k + 1, m.child_index(k, i, 1)))] =
          here - theta * s - drift;
    }
  return AdaptedProcess(model, std::move(v));
}

}  // namespace qslab
