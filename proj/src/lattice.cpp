#include "qslab/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace qslab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

void require(bool ok, const std::string& msg) {
  if (!ok) throw Error(msg);
}

}  // namespace

// -- LatticeModel --------------------------------------------------------------

std::shared_ptr<const LatticeModel> LatticeModel::build(double T, int N, int branching,
                                                        bool recombining,
                                                        const ModelOptions& opts) {
  require(T > 0.0, "build_model: horizon T must be positive");
  require(N >= 1, "build_model: need at least one step");
  require(branching >= 2, "build_model: branching must be >= 2");
  if (recombining) require(branching == 2, "build_model: recombining layout is binary only");

  auto m = std::shared_ptr<LatticeModel>(new LatticeModel());
  m->T_ = T;
  m->N_ = N;
  m->b_ = branching;
  m->recombining_ = recombining;
  m->dt_ = T / N;

  const double step = std::sqrt(T / N);
  if (opts.increments.empty()) {
    if (branching == 2) {
      m->increments_ = {step, -step};
    } else {
      // Symmetric, zero-mean, variance T/N spread over b equispaced points.
      m->increments_.resize(branching);
      double var = 0.0;
      for (int j = 0; j < branching; ++j) {
        m->increments_[j] = (branching - 1) - 2.0 * j;  // b-1, b-3, ..., -(b-1)
        var += m->increments_[j] * m->increments_[j] / branching;
      }
      const double scale = step / std::sqrt(var);
      for (double& x : m->increments_) x *= scale;
    }
  } else {
    require(static_cast<int>(opts.increments.size()) == branching,
            "build_model: increments size must match branching");
    m->increments_ = opts.increments;
  }

  if (opts.probabilities.empty()) {
    m->probabilities_.assign(branching, 1.0 / branching);
  } else {
    require(static_cast<int>(opts.probabilities.size()) == branching,
            "build_model: invalid probability vector (size)");
    m->probabilities_ = opts.probabilities;
  }
  double psum = 0.0;
  for (double p : m->probabilities_) {
    require(p > 0.0, "build_model: invalid probability vector (non-positive entry)");
    psum += p;
  }
  require(std::abs(psum - 1.0) <= 1e-14, "build_model: invalid probability vector (sum != 1)");

  if (opts.increments.empty()) {
    // Default increments drive an exact martingale with <W>_t = t.
    double mean = 0.0, var = 0.0;
    for (int j = 0; j < branching; ++j) mean += m->probabilities_[j] * m->increments_[j];
    for (int j = 0; j < branching; ++j)
      var += m->probabilities_[j] * (m->increments_[j] - mean) * (m->increments_[j] - mean);
    require(std::abs(mean) <= 1e-14 * step, "build_model: default increments not centered");
    require(std::abs(var - T / N) <= 1e-14 * (T / N) * N,
            "build_model: default increment variance mismatch");
  }

  m->level_offset_.resize(N + 2);
  m->level_offset_[0] = 0;
  if (recombining) {
    for (int k = 0; k <= N; ++k) m->level_offset_[k + 1] = m->level_offset_[k] + (k + 1);
  } else {
    // Leaf count b^N against the node budget.
    double leaves = std::pow(static_cast<double>(branching), N);
    if (leaves > static_cast<double>(opts.node_budget))
      throw NodeBudgetError("build_model: node budget exceeded (b^N = " +
                            std::to_string(leaves) + " > " + std::to_string(opts.node_budget) + ")");
    NodeIndex width = 1;
    for (int k = 0; k <= N; ++k) {
      m->level_offset_[k + 1] = m->level_offset_[k] + width;
      width *= branching;
    }
  }
  return m;
}

NodeIndex LatticeModel::level_size(int k) const {
  return level_offset_[k + 1] - level_offset_[k];
}

NodeIndex LatticeModel::ancestor_on_path(NodeIndex terminal_idx, int k) const {
  require(!recombining_, "ancestor_on_path: path addressing needs a non-recombining model");
  NodeIndex idx = terminal_idx;
  for (int j = N_; j > k; --j) idx /= b_;
  return idx;
}

double LatticeModel::path_weight(NodeIndex terminal_idx) const {
  require(!recombining_, "path_weight: needs a non-recombining model");
  double w = 1.0;
  NodeIndex idx = terminal_idx;
  for (int k = N_; k > 0; --k) {
    w *= probabilities_[idx % b_];
    idx /= b_;
  }
  return w;
}

double LatticeModel::driver_value(int k, NodeIndex idx) const {
  if (recombining_) {
    // idx = number of up moves among k steps.
    return static_cast<double>(idx) * increments_[0] +
           static_cast<double>(k - idx) * increments_[1];
  }
  double w = 0.0;
  NodeIndex rest = idx;
  for (int j = k; j > 0; --j) {
    w += increments_[rest % b_];
    rest /= b_;
  }
  return w;
}

ModelPtr build_model(double T, int N, int branching, bool recombining, const ModelOptions& opts) {
  return LatticeModel::build(T, N, branching, recombining, opts);
}

// -- AdaptedProcess ------------------------------------------------------------

AdaptedProcess::AdaptedProcess(ModelPtr model, std::vector<double> values)
    : model_(std::move(model)), values_(std::move(values)) {
  require(static_cast<NodeIndex>(values_.size()) == model_->node_count(),
          "AdaptedProcess: value count must equal node count");
}

AdaptedProcess AdaptedProcess::constant(ModelPtr model, double c) {
  std::vector<double> v(static_cast<std::size_t>(model->node_count()), c);
  return AdaptedProcess(std::move(model), std::move(v));
}

AdaptedProcess AdaptedProcess::from_steps(ModelPtr model, const std::vector<double>& step_values) {
  require(static_cast<int>(step_values.size()) == model->steps() + 1,
          "from_steps: need one value per step");
  std::vector<double> v(static_cast<std::size_t>(model->node_count()));
  for (int k = 0; k <= model->steps(); ++k) {
    for (NodeIndex i = 0; i < model->level_size(k); ++i)
      v[static_cast<std::size_t>(model->node_id(k, i))] = step_values[k];
  }
  return AdaptedProcess(std::move(model), std::move(v));
}

AdaptedProcess AdaptedProcess::driver(ModelPtr model) {
  std::vector<double> v(static_cast<std::size_t>(model->node_count()));
  for (int k = 0; k <= model->steps(); ++k)
    for (NodeIndex i = 0; i < model->level_size(k); ++i)
      v[static_cast<std::size_t>(model->node_id(k, i))] = model->driver_value(k, i);
  return AdaptedProcess(std::move(model), std::move(v));
}

std::span<const double> AdaptedProcess::level(int k) const {
  return std::span<const double>(values_.data() + model_->level_offset(k),
                                 static_cast<std::size_t>(model_->level_size(k)));
}

std::vector<double> AdaptedProcess::terminal() const {
  auto s = level(model_->steps());
  return std::vector<double>(s.begin(), s.end());
}

// -- Conditional expectation ----------------------------------------------------

namespace {

// One backward sweep of exact conditional expectations from step `from` down
// to the root, writing into `out` (a full node vector).
void backward_sweep(const LatticeModel& m, std::vector<double>& out, int from) {
  for (int k = from - 1; k >= 0; --k) {
    const double* next = out.data() + m.level_offset(k + 1);
    double* cur = out.data() + m.level_offset(k);
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double acc = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        acc += m.probabilities()[j] * next[m.child_index(k, i, j)];
      cur[i] = acc;
    }
  }
}

}  // namespace

AdaptedProcess conditional_expectation(const AdaptedProcess& X, int from, int k) {
  const auto& m = *X.model();
  require(from >= 0 && from <= m.steps(), "conditional_expectation: step out of range");
  require(k >= 0 && k <= from, "conditional_expectation: step out of range");
  std::vector<double> v = X.values();
  backward_sweep(m, v, from);
  return AdaptedProcess(X.model(), std::move(v));
}

AdaptedProcess conditional_expectation(ModelPtr model, const std::vector<double>& terminal_values) {
  const auto& m = *model;
  require(static_cast<NodeIndex>(terminal_values.size()) == m.level_size(m.steps()),
          "conditional_expectation: terminal size mismatch");
  std::vector<double> v(static_cast<std::size_t>(m.node_count()));
  std::copy(terminal_values.begin(), terminal_values.end(), v.begin() + m.level_offset(m.steps()));
  backward_sweep(m, v, m.steps());
  return AdaptedProcess(std::move(model), std::move(v));
}

// -- Accumulation with recombining conflict detection ---------------------------

AdaptedProcess accumulate_predictable(const ModelPtr& model, double x0,
                                      const std::function<double(int, NodeIndex)>& increment) {
  const auto& m = *model;
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), kNaN);
  v[0] = x0;
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const double next = v[m.node_id(k, i)] + increment(k, i);
      for (int j = 0; j < m.branching(); ++j) {
        double& slot = v[m.node_id(k + 1, m.child_index(k, i, j))];
        if (std::isnan(slot)) {
          slot = next;
        } else if (std::abs(slot - next) > 1e-9 * std::max(1.0, std::abs(slot))) {
          throw PathDependenceError(
              "accumulate_predictable: path-dependent values on a recombining model");
        }
      }
    }
  }
  return AdaptedProcess(model, std::move(v));
}

// -- Doob decomposition ----------------------------------------------------------

Decomposition doob_decompose(const AdaptedProcess& S) {
  const auto& m = *S.model();
  // Predictable increments attached to the step-k node.
  std::vector<double> dV(static_cast<std::size_t>(m.node_count()), 0.0);
  std::vector<double> dQ(static_cast<std::size_t>(m.node_count()), 0.0);
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] * S.at(k + 1, m.child_index(k, i, j));
      const double here = S.at(k, i);
      dV[m.node_id(k, i)] = -(mean - here);
      double var = 0.0;
      for (int j = 0; j < m.branching(); ++j) {
        const double d = S.at(k + 1, m.child_index(k, i, j)) - mean;
        var += m.probabilities()[j] * d * d;
      }
      dQ[m.node_id(k, i)] = var;
    }
  }
  Decomposition dec;
  dec.initial = S.root();
  dec.drift = accumulate_predictable(S.model(), 0.0,
                                     [&](int k, NodeIndex i) { return dV[m.node_id(k, i)]; });
  dec.qv = accumulate_predictable(S.model(), 0.0,
                                  [&](int k, NodeIndex i) { return dQ[m.node_id(k, i)]; });
  // M = S - S0 + V, plus the sub-ulp residual of the reconstruction
  // expression (exact by Sterbenz), so reconstruct() reproduces S bitwise.
  std::vector<double> mv(static_cast<std::size_t>(m.node_count()));
  std::vector<double> rv(static_cast<std::size_t>(m.node_count()));
  for (std::size_t n = 0; n < mv.size(); ++n) {
    const double target = S.values()[n];
    const double v = dec.drift.values()[n];
    mv[n] = target - dec.initial + v;
    rv[n] = target - (dec.initial - v + mv[n]);
  }
  dec.martingale = AdaptedProcess(S.model(), std::move(mv));
  dec.residual = AdaptedProcess(S.model(), std::move(rv));
  return dec;
}

AdaptedProcess reconstruct(const Decomposition& dec, const ModelPtr& model) {
  std::vector<double> v(static_cast<std::size_t>(model->node_count()));
  const bool comp = dec.residual.defined();
  for (std::size_t n = 0; n < v.size(); ++n) {
    v[n] = dec.initial - dec.drift.values()[n] + dec.martingale.values()[n];
    if (comp) v[n] += dec.residual.values()[n];
  }
  return AdaptedProcess(model, std::move(v));
}

MultiplicativeDecomposition multiplicative_decompose(const AdaptedProcess& S) {
  const auto& m = *S.model();
  for (double x : S.values())
    if (!(x > 0.0)) throw Error("multiplicative_decompose: non-positive value encountered");

  std::vector<double> dA(static_cast<std::size_t>(m.node_count()), 0.0);
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean_ratio = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean_ratio += m.probabilities()[j] * S.at(k + 1, m.child_index(k, i, j)) / S.at(k, i);
      dA[m.node_id(k, i)] = std::log(mean_ratio);
    }
  }
  MultiplicativeDecomposition out;
  out.exponent = accumulate_predictable(S.model(), 0.0,
                                        [&](int k, NodeIndex i) { return dA[m.node_id(k, i)]; });
  // E = S / (S0 exp(A)), assembled in log space.
  std::vector<double> ev(static_cast<std::size_t>(m.node_count()));
  const double logS0 = std::log(S.root());
  for (std::size_t n = 0; n < ev.size(); ++n)
    ev[n] = std::exp(std::log(S.values()[n]) - logS0 - out.exponent.values()[n]);
  out.factor = AdaptedProcess(S.model(), std::move(ev));
  return out;
}

AdaptedProcess predictable_qv(const AdaptedProcess& M, double tol) {
  const auto& m = *M.model();
  double scale = 1.0;
  for (double x : M.values()) scale = std::max(scale, std::abs(x));
  std::vector<double> dQ(static_cast<std::size_t>(m.node_count()), 0.0);
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] * M.at(k + 1, m.child_index(k, i, j));
      if (std::abs(mean - M.at(k, i)) > tol * scale)
        throw Error("predictable_qv: input fails the martingale check");
      double var = 0.0;
      for (int j = 0; j < m.branching(); ++j) {
        const double d = M.at(k + 1, m.child_index(k, i, j)) - mean;
        var += m.probabilities()[j] * d * d;
      }
      dQ[m.node_id(k, i)] = var;
    }
  }
  return accumulate_predictable(M.model(), 0.0,
                                [&](int k, NodeIndex i) { return dQ[m.node_id(k, i)]; });
}

AdaptedProcess running_max(const AdaptedProcess& X, int from, bool absolute) {
  const auto& m = *X.model();
  require(from >= 0 && from <= m.steps(), "running_max: step out of range");
  auto val = [&](int k, NodeIndex i) {
    return absolute ? std::abs(X.at(k, i)) : X.at(k, i);
  };
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), kNaN);
  for (int k = 0; k <= from; ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) v[m.node_id(k, i)] = val(k, i);
  for (int k = from; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      for (int j = 0; j < m.branching(); ++j) {
        const NodeIndex c = m.child_index(k, i, j);
        const double cand = std::max(v[m.node_id(k, i)], val(k + 1, c));
        double& slot = v[m.node_id(k + 1, c)];
        if (std::isnan(slot)) {
          slot = cand;
        } else if (slot != cand) {
          throw PathDependenceError("running_max: path-dependent on a recombining model");
        }
      }
    }
  }
  return AdaptedProcess(X.model(), std::move(v));
}

// -- Paths ----------------------------------------------------------------------

void for_each_path(const LatticeModel& model,
                   const std::function<void(NodeIndex, double)>& fn) {
  if (model.recombining())
    throw PathDependenceError("for_each_path: needs a non-recombining model");
  const NodeIndex n = model.level_size(model.steps());
  for (NodeIndex t = 0; t < n; ++t) fn(t, model.path_weight(t));
}

double path_expectation(const LatticeModel& model,
                        const std::function<double(NodeIndex)>& f) {
  double acc = 0.0;
  for_each_path(model, [&](NodeIndex t, double w) { acc += w * f(t); });
  return acc;
}

// -- Norms ------------------------------------------------------------------------

namespace {

void check_martingale(const AdaptedProcess& M) {
  const auto& m = *M.model();
  double scale = 1.0;
  for (double x : M.values()) scale = std::max(scale, std::abs(x));
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] * M.at(k + 1, m.child_index(k, i, j));
      if (std::abs(mean - M.at(k, i)) > 1e-10 * scale)
        throw Error("process_norm: Hp/BMO demand a martingale input");
    }
  }
}

}  // namespace

double process_norm(const AdaptedProcess& X, NormKind kind, double p) {
  const auto& m = *X.model();
  switch (kind) {
    case NormKind::Sp: {
      require(p > 0.0, "process_norm: p must be positive");
      const AdaptedProcess rm = running_max(X, 0, true);
      const double e = path_expectation(
          m, [&](NodeIndex t) { return std::pow(rm.at(m.steps(), t), p); });
      return std::pow(e, 1.0 / p);
    }
    case NormKind::Hp: {
      require(p > 0.0, "process_norm: p must be positive");
      check_martingale(X);
      const AdaptedProcess qv = predictable_qv(X);
      if (m.recombining()) {
        // QV accumulated without conflict; expectation over terminal nodes needs
        // terminal weights, unavailable here without path addressing.
        throw PathDependenceError("process_norm: Hp needs a non-recombining model");
      }
      const double e = path_expectation(
          m, [&](NodeIndex t) { return std::pow(qv.at(m.steps(), t), p / 2.0); });
      return std::pow(e, 1.0 / p);
    }
    case NormKind::TV: {
      return path_expectation(m, [&](NodeIndex t) {
        double tv = 0.0;
        double prev = X.at(0, 0);
        for (int k = 1; k <= m.steps(); ++k) {
          const double cur = X.at(k, m.ancestor_on_path(t, k));
          tv += std::abs(cur - prev);
          prev = cur;
        }
        return tv;
      });
    }
    case NormKind::BMO: {
      check_martingale(X);
      const AdaptedProcess qv = predictable_qv(X);
      AdaptedProcess closure = conditional_expectation(qv, m.steps(), 0);
      double worst = 0.0;
      for (int k = 0; k <= m.steps(); ++k)
        for (NodeIndex i = 0; i < m.level_size(k); ++i)
          worst = std::max(worst, closure.at(k, i) - qv.at(k, i));
      return std::sqrt(worst);
    }
  }
  throw Error("process_norm: unknown norm kind");
}

// -- Stopping times ----------------------------------------------------------------

StoppingTime::StoppingTime(ModelPtr model, std::vector<std::uint8_t> flags)
    : model_(std::move(model)), flags_(std::move(flags)) {
  require(static_cast<NodeIndex>(flags_.size()) == model_->node_count(),
          "StoppingTime: flag count must equal node count");
}

StoppingTime StoppingTime::deterministic(ModelPtr model, int step) {
  require(step >= 0 && step <= model->steps(), "StoppingTime: step out of range");
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(model->node_count()), 0);
  for (NodeIndex i = 0; i < model->level_size(step); ++i)
    flags[static_cast<std::size_t>(model->node_id(step, i))] = 1;
  return StoppingTime(std::move(model), std::move(flags));
}

StoppingTime StoppingTime::hitting(const AdaptedProcess& X, double level) {
  const auto& m = *X.model();
  std::vector<std::uint8_t> flags(static_cast<std::size_t>(m.node_count()), 0);
  for (int k = 0; k <= m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i)
      if (std::abs(X.at(k, i)) >= level)
        flags[static_cast<std::size_t>(m.node_id(k, i))] = 1;
  return StoppingTime(X.model(), std::move(flags));
}

int StoppingTime::stop_step(NodeIndex terminal_idx) const {
  const auto& m = *model_;
  for (int k = 0; k <= m.steps(); ++k)
    if (flagged(k, m.ancestor_on_path(terminal_idx, k))) return k;
  return m.steps();
}

namespace {

// fired(k, node) = the rule has flagged some node on the path up to k.
std::vector<std::uint8_t> fired_region(const StoppingTime& s) {
  const auto& m = *s.model();
  if (m.recombining())
    throw PathDependenceError("StoppingTime combination needs a non-recombining model");
  std::vector<std::uint8_t> fired(static_cast<std::size_t>(m.node_count()), 0);
  fired[0] = s.flagged(0, 0) ? 1 : 0;
  for (int k = 0; k < m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i)
      for (int j = 0; j < m.branching(); ++j) {
        const NodeIndex c = m.child_index(k, i, j);
        fired[static_cast<std::size_t>(m.node_id(k + 1, c))] =
            fired[static_cast<std::size_t>(m.node_id(k, i))] || s.flagged(k + 1, c);
      }
  return fired;
}

}  // namespace

StoppingTime StoppingTime::pathwise_min(const StoppingTime& a, const StoppingTime& b) {
  require(a.model_ == b.model_, "StoppingTime: combining rules from different models");
  std::vector<std::uint8_t> flags(a.flags_.size());
  for (std::size_t n = 0; n < flags.size(); ++n) flags[n] = a.flags_[n] | b.flags_[n];
  return StoppingTime(a.model_, std::move(flags));
}

StoppingTime StoppingTime::pathwise_max(const StoppingTime& a, const StoppingTime& b) {
  require(a.model_ == b.model_, "StoppingTime: combining rules from different models");
  const auto fa = fired_region(a);
  const auto fb = fired_region(b);
  std::vector<std::uint8_t> flags(fa.size());
  for (std::size_t n = 0; n < flags.size(); ++n) flags[n] = fa[n] & fb[n];
  return StoppingTime(a.model_, std::move(flags));
}

std::vector<StoppingTime> sample_stopping_times(const ModelPtr& model, const StoppingSpec& spec) {
  std::vector<StoppingTime> out;
  for (int k : spec.deterministic_steps) out.push_back(StoppingTime::deterministic(model, k));

  AdaptedProcess base =
      spec.level_process ? *spec.level_process : AdaptedProcess::driver(model);
  for (double level : spec.levels) out.push_back(StoppingTime::hitting(base, level));

  if (spec.count > 0) {
    double hi = 0.0;
    for (double x : base.values()) hi = std::max(hi, std::abs(x));
    Rng rng = Rng(spec.seed).split(0x5708);
    for (int i = 0; i < spec.count; ++i)
      out.push_back(StoppingTime::hitting(base, rng.uniform(0.0, hi) + 1e-300));
  }
  return out;
}

OptionalSamplingCheck optional_sampling_check(const AdaptedProcess& M, const StoppingTime& sigma,
                                              const StoppingTime& tau) {
  const auto& m = *M.model();
  // Group paths by their sigma node; E[M_tau | F_sigma] must equal M_sigma.
  std::vector<double> num(static_cast<std::size_t>(m.node_count()), 0.0);
  std::vector<double> den(static_cast<std::size_t>(m.node_count()), 0.0);
  for_each_path(m, [&](NodeIndex t, double w) {
    const int ks = sigma.stop_step(t);
    const int kt = std::max(ks, tau.stop_step(t));
    const NodeIndex sn = m.node_id(ks, m.ancestor_on_path(t, ks));
    num[static_cast<std::size_t>(sn)] += w * M.at(kt, m.ancestor_on_path(t, kt));
    den[static_cast<std::size_t>(sn)] += w;
  });
  OptionalSamplingCheck chk;
  for (int k = 0; k <= m.steps(); ++k)
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      const std::size_t n = static_cast<std::size_t>(m.node_id(k, i));
      if (den[n] > 0.0)
        chk.max_abs_gap = std::max(chk.max_abs_gap, std::abs(num[n] / den[n] - M.at(k, i)));
    }
  return chk;
}

SubmartingaleReport is_submartingale(const AdaptedProcess& S, double tol) {
  const auto& m = *S.model();
  SubmartingaleReport rep;
  rep.verdict = true;
  double worst = 0.0;
  for (int k = 0; k < m.steps(); ++k) {
    for (NodeIndex i = 0; i < m.level_size(k); ++i) {
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j)
        mean += m.probabilities()[j] * S.at(k + 1, m.child_index(k, i, j));
      const double drift = mean - S.at(k, i);
      if (drift < worst) {
        worst = drift;
        rep.worst_step = k;
        rep.worst_node = i;
      }
    }
  }
  rep.worst_defect = worst;
  rep.verdict = worst >= -tol;
  return rep;
}

}  // namespace qslab
