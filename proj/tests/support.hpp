#pragma once

// Brute-force enumeration oracle for the unit and acceptance suites.
//
// Everything here recomputes expectations by direct iteration over branch
// words, independently of the library's backward recursions, so it can serve
// as the reference side of two-route checks.

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "qslab/lattice.hpp"
#include "qslab/rng.hpp"

namespace oracle {

struct Word {
  std::vector<int> branch;  // branch choice per step, branch[0] = first step
};

/// Iterate all branch words of a model; fn(word, weight).
inline void for_each_word(const qslab::LatticeModel& m,
                          const std::function<void(const Word&, double)>& fn) {
  const int N = m.steps();
  const int b = m.branching();
  Word w;
  w.branch.assign(N, 0);
  while (true) {
    double weight = 1.0;
    for (int k = 0; k < N; ++k) weight *= m.probabilities()[w.branch[k]];
    fn(w, weight);
    int k = N - 1;
    while (k >= 0 && ++w.branch[k] == b) w.branch[k--] = 0;
    if (k < 0) break;
  }
}

/// Driver path W_0..W_N for a branch word.
inline std::vector<double> driver_path(const qslab::LatticeModel& m, const Word& w) {
  std::vector<double> W(m.steps() + 1, 0.0);
  for (int k = 0; k < m.steps(); ++k) W[k + 1] = W[k] + m.increments()[w.branch[k]];
  return W;
}

/// Terminal node index of a branch word under path-lexicographic addressing.
inline qslab::NodeIndex terminal_index(const qslab::LatticeModel& m, const Word& w) {
  qslab::NodeIndex idx = 0;
  for (int k = 0; k < m.steps(); ++k) idx = idx * m.branching() + w.branch[k];
  return idx;
}

/// Exact E[f(word)] by enumeration.
inline double expect(const qslab::LatticeModel& m,
                     const std::function<double(const Word&)>& f) {
  double acc = 0.0;
  for_each_word(m, [&](const Word& w, double p) { acc += p * f(w); });
  return acc;
}

/// Exact E[f(driver path)] by enumeration.
inline double expect_path(const qslab::LatticeModel& m,
                          const std::function<double(const std::vector<double>&)>& f) {
  return expect(m, [&](const Word& w) { return f(driver_path(m, w)); });
}

/// Exact E[g(X path along word) ] for an adapted process.
inline double expect_process(const qslab::AdaptedProcess& X,
                             const std::function<double(const std::vector<double>&)>& f) {
  const auto& m = *X.model();
  return expect(m, [&](const Word& w) {
    std::vector<double> path(m.steps() + 1);
    qslab::NodeIndex idx = 0;
    path[0] = X.at(0, 0);
    for (int k = 0; k < m.steps(); ++k) {
      idx = idx * m.branching() + w.branch[k];
      path[k + 1] = X.at(k + 1, idx);
    }
    return f(path);
  });
}

/// Conditional expectation of terminal data given the step-k node, by
/// enumeration over the descendant words only.
inline double cond_expect_terminal(const qslab::LatticeModel& m, int k, qslab::NodeIndex idx,
                                   const std::function<double(qslab::NodeIndex)>& terminal_f) {
  const int rest = m.steps() - k;
  const int b = m.branching();
  std::vector<int> word(rest, 0);
  double num = 0.0, den = 0.0;
  while (true) {
    double weight = 1.0;
    qslab::NodeIndex t = idx;
    for (int j = 0; j < rest; ++j) {
      weight *= m.probabilities()[word[j]];
      t = t * b + word[j];
    }
    num += weight * terminal_f(t);
    den += weight;
    int j = rest - 1;
    while (j >= 0 && ++word[j] == b) word[j--] = 0;
    if (j < 0) break;
  }
  return num / den;
}

/// Random adapted process: independent seeded values at every node.
inline qslab::AdaptedProcess random_process(const qslab::ModelPtr& model, qslab::Rng rng,
                                            double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(static_cast<std::size_t>(model->node_count()));
  for (double& x : v) x = rng.uniform(lo, hi);
  return qslab::AdaptedProcess(model, std::move(v));
}

/// Random lattice martingale: conditionally centered increments, M0 = 0.
inline qslab::AdaptedProcess random_martingale(const qslab::ModelPtr& model, qslab::Rng rng,
                                               double scale = 1.0) {
  const auto& m = *model;
  std::vector<double> v(static_cast<std::size_t>(m.node_count()), 0.0);
  for (int k = 0; k < m.steps(); ++k) {
    for (qslab::NodeIndex i = 0; i < m.level_size(k); ++i) {
      std::vector<double> raw(m.branching());
      double mean = 0.0;
      for (int j = 0; j < m.branching(); ++j) {
        raw[j] = rng.uniform(-scale, scale);
        mean += m.probabilities()[j] * raw[j];
      }
      for (int j = 0; j < m.branching(); ++j) {
        const auto c = m.node_id(k + 1, m.child_index(k, i, j));
        v[static_cast<std::size_t>(c)] = v[static_cast<std::size_t>(m.node_id(k, i))] +
                                         (raw[j] - mean);
      }
    }
  }
  return qslab::AdaptedProcess(model, std::move(v));
}

}  // namespace oracle
