#include "doctest.h"

#include <cmath>

#include "qslab/lattice.hpp"
#include "support.hpp"

using namespace qslab;

namespace {

AdaptedProcess combine(const AdaptedProcess& X, const AdaptedProcess& Y, double a, double b) {
  std::vector<double> v(X.values().size());
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = a * X.values()[n] + b * Y.values()[n];
  return AdaptedProcess(X.model(), std::move(v));
}

}  // namespace

TEST_CASE("build_model: node layout and validation") {
  auto m1 = build_model(1.0, 1, 2);
  CHECK(m1->node_count() == 3);
  CHECK(m1->increments()[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(m1->increments()[1] == doctest::Approx(-1.0).epsilon(1e-15));

  auto m2 = build_model(1.0, 2, 2, /*recombining=*/true);
  CHECK(m2->node_count() == 6);  // 1 + 2 + 3

  CHECK_THROWS_AS(build_model(1.0, 25, 2, false), NodeBudgetError);

  ModelOptions bad;
  bad.probabilities = {0.7, 0.4};
  CHECK_THROWS_AS(build_model(1.0, 2, 2, false, bad), Error);
  bad.probabilities = {1.0, 0.0};
  CHECK_THROWS_AS(build_model(1.0, 2, 2, false, bad), Error);

  // Non-recombining node count (b^{N+1}-1)/(b-1).
  auto m3 = build_model(2.0, 3, 3);
  CHECK(m3->node_count() == (81 - 1) / 2);
  // Default increments: zero mean, variance T/N.
  double mean = 0.0, var = 0.0;
  for (int j = 0; j < 3; ++j) mean += m3->probabilities()[j] * m3->increments()[j];
  for (int j = 0; j < 3; ++j) var += m3->probabilities()[j] * m3->increments()[j] * m3->increments()[j];
  CHECK(std::abs(mean) <= 1e-14);
  CHECK(var == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("conditional_expectation: exact backward recursion") {
  auto m = build_model(1.0, 1, 2);
  AdaptedProcess X(m, {0.0, 2.0, 0.0});
  auto ce = conditional_expectation(X, 1, 0);
  CHECK(ce.root() == doctest::Approx(1.0).epsilon(1e-15));

  auto m4 = build_model(1.0, 4, 2);
  auto c = AdaptedProcess::constant(m4, 3.25);
  auto cec = conditional_expectation(c, 4, 0);
  for (double v : cec.values()) CHECK(v == 3.25);

  // E[W_N | F_k] = W_k: the driver is an exact martingale.
  auto W = AdaptedProcess::driver(m4);
  auto ceW = conditional_expectation(m4, W.terminal());
  for (int k = 0; k <= 4; ++k)
    for (NodeIndex i = 0; i < m4->level_size(k); ++i)
      CHECK(ceW.at(k, i) == doctest::Approx(W.at(k, i)).epsilon(1e-14));

  CHECK_THROWS_AS(conditional_expectation(X, 2, 0), Error);
}

TEST_CASE("conditional_expectation: tower property") {
  auto m = build_model(2.0, 5, 2);
  auto X = oracle::random_process(m, Rng(11), -3.0, 3.0);
  auto ce3 = conditional_expectation(X, 5, 3);
  auto ce_tower = conditional_expectation(ce3, 3, 1);
  auto ce_direct = conditional_expectation(X, 5, 1);
  for (NodeIndex i = 0; i < m->level_size(1); ++i)
    CHECK(std::abs(ce_tower.at(1, i) - ce_direct.at(1, i)) <= 1e-12);
}

TEST_CASE("doob_decompose: identity cases and W^2") {
  auto m = build_model(1.0, 4, 2);
  const double dt = m->dt();

  auto W = AdaptedProcess::driver(m);
  auto dec = doob_decompose(W);
  for (double v : dec.drift.values()) CHECK(v == 0.0);
  for (NodeIndex i = 0; i < m->level_size(4); ++i)
    CHECK(dec.martingale.at(4, i) == doctest::Approx(W.at(4, i)).epsilon(1e-15));

  std::vector<double> steps(5);
  for (int k = 0; k <= 4; ++k) steps[k] = k * dt;
  auto S = AdaptedProcess::from_steps(m, steps);
  auto dec2 = doob_decompose(S);
  for (double v : dec2.martingale.values()) CHECK(std::abs(v) <= 1e-15);
  for (int k = 0; k <= 4; ++k)
    CHECK(dec2.drift.at(k, 0) == doctest::Approx(-k * dt).epsilon(1e-14));

  // S = W^2: drift increment is -dt, QV of M is 4 W_k^2 dt summed.
  std::vector<double> sq(W.values().size());
  for (std::size_t n = 0; n < sq.size(); ++n) sq[n] = W.values()[n] * W.values()[n];
  auto dec3 = doob_decompose(AdaptedProcess(m, std::move(sq)));
  for (int k = 0; k <= 4; ++k)
    for (NodeIndex i = 0; i < m->level_size(k); ++i)
      CHECK(dec3.drift.at(k, i) == doctest::Approx(-k * dt).epsilon(1e-13));
  const double qv_terminal_expected = oracle::expect_path(*m, [&](const std::vector<double>& path) {
    double q = 0.0;
    for (int k = 0; k < 4; ++k) q += 4.0 * path[k] * path[k] * dt;
    return q;
  });
  const double qv_terminal = oracle::expect_process(dec3.qv, [](const std::vector<double>& p) {
    return p.back();
  });
  CHECK(qv_terminal == doctest::Approx(qv_terminal_expected).epsilon(1e-13));
}

TEST_CASE("doob_decompose: exact round trip and centered increments") {
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    auto m = build_model(1.5, 5, 2);
    auto S = oracle::random_process(m, Rng(seed), -5.0, 5.0);
    auto dec = doob_decompose(S);
    auto back = reconstruct(dec, m);
    for (std::size_t n = 0; n < back.values().size(); ++n)
      CHECK(back.values()[n] == S.values()[n]);  // exact

    // E[dM | F_k] = 0 within 1e-12, dQ >= 0, V predictable by construction.
    const auto& mm = *m;
    for (int k = 0; k < mm.steps(); ++k)
      for (NodeIndex i = 0; i < mm.level_size(k); ++i) {
        double mean = 0.0;
        for (int j = 0; j < mm.branching(); ++j)
          mean += mm.probabilities()[j] * dec.martingale.at(k + 1, mm.child_index(k, i, j));
        CHECK(std::abs(mean - dec.martingale.at(k, i)) <= 1e-12);
        CHECK(dec.qv.at(k + 1, mm.child_index(k, i, 0)) - dec.qv.at(k, i) >= 0.0);
      }
  }
}

TEST_CASE("multiplicative_decompose") {
  auto m = build_model(1.0, 3, 2);
  auto one = AdaptedProcess::constant(m, 1.0);
  auto md = multiplicative_decompose(one);
  for (double v : md.exponent.values()) CHECK(v == 0.0);
  for (double v : md.factor.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-15));

  const double c = 0.7;
  std::vector<double> steps(4);
  for (int k = 0; k <= 3; ++k) steps[k] = std::exp(c * k * m->dt());
  auto md2 = multiplicative_decompose(AdaptedProcess::from_steps(m, steps));
  for (int k = 0; k <= 3; ++k) {
    CHECK(md2.exponent.at(k, 0) == doctest::Approx(c * k * m->dt()).epsilon(1e-13));
  }
  for (double v : md2.factor.values()) CHECK(v == doctest::Approx(1.0).epsilon(1e-13));

  auto W = AdaptedProcess::driver(m);
  std::vector<double> ev(W.values().size());
  for (std::size_t n = 0; n < ev.size(); ++n) ev[n] = std::exp(W.values()[n]);
  auto md3 = multiplicative_decompose(AdaptedProcess(m, std::move(ev)));
  const double step_log = std::log(std::cosh(std::sqrt(m->dt())));
  for (int k = 1; k <= 3; ++k)
    for (NodeIndex i = 0; i < m->level_size(k); ++i)
      CHECK(md3.exponent.at(k, i) == doctest::Approx(k * step_log).epsilon(1e-13));

  // Reconstruction in log space to 1e-12.
  auto S = oracle::random_process(m, Rng(77), 0.3, 2.0);
  auto md4 = multiplicative_decompose(S);
  for (int k = 0; k <= 3; ++k)
    for (NodeIndex i = 0; i < m->level_size(k); ++i) {
      const double lhs = std::log(S.at(k, i));
      const double rhs = std::log(S.root()) + md4.exponent.at(k, i) + std::log(md4.factor.at(k, i));
      CHECK(std::abs(lhs - rhs) <= 1e-12);
    }

  std::vector<double> neg(m->node_count(), 1.0);
  neg[2] = -0.5;
  CHECK_THROWS_AS(multiplicative_decompose(AdaptedProcess(m, std::move(neg))), Error);
}

TEST_CASE("predictable_qv") {
  auto m = build_model(1.0, 5, 2);
  const double dt = m->dt();
  auto W = AdaptedProcess::driver(m);
  auto qv = predictable_qv(W);
  for (int k = 0; k <= 5; ++k)
    for (NodeIndex i = 0; i < m->level_size(k); ++i)
      CHECK(qv.at(k, i) == doctest::Approx(k * dt).epsilon(1e-14));

  auto zero = AdaptedProcess::zero(m);
  auto qv_zero = predictable_qv(zero);
  for (double v : qv_zero.values()) CHECK(v == 0.0);

  auto W2 = combine(W, W, 1.0, 1.0);
  auto qv4 = predictable_qv(W2);
  for (int k = 0; k <= 5; ++k)
    CHECK(qv4.at(k, 0) == doctest::Approx(4.0 * k * dt).epsilon(1e-14));

  // Non-martingale input rejected.
  auto S = oracle::random_process(m, Rng(5), 0.0, 1.0);
  CHECK_THROWS_AS(predictable_qv(S), Error);
}

TEST_CASE("predictable_qv: parallelogram identity") {
  auto m = build_model(1.0, 4, 2);
  auto M = oracle::random_martingale(m, Rng(21));
  auto Mp = oracle::random_martingale(m, Rng(22));
  auto qv_sum = predictable_qv(combine(M, Mp, 1.0, 1.0));
  auto qv_diff = predictable_qv(combine(M, Mp, 1.0, -1.0));
  auto qv_m = predictable_qv(M);
  auto qv_mp = predictable_qv(Mp);
  for (std::size_t n = 0; n < qv_m.values().size(); ++n) {
    const double lhs = qv_sum.values()[n] + qv_diff.values()[n];
    const double rhs = 2.0 * qv_m.values()[n] + 2.0 * qv_mp.values()[n];
    CHECK(std::abs(lhs - rhs) <= 1e-12);
  }
}

TEST_CASE("running_max") {
  auto m = build_model(1.0, 2, 2);
  const double s = std::sqrt(m->dt());

  std::vector<double> inc{0.0, 1.0, 2.5};
  auto X = AdaptedProcess::from_steps(m, inc);
  auto rm = running_max(X, 0, /*absolute=*/false);
  for (int k = 0; k <= 2; ++k)
    for (NodeIndex i = 0; i < m->level_size(k); ++i) CHECK(rm.at(k, i) == X.at(k, i));

  auto W = AdaptedProcess::driver(m);
  auto rmW = running_max(W);
  // Terminal paths uu, ud, du, dd.
  CHECK(rmW.at(2, 0) == doctest::Approx(2 * s));
  CHECK(rmW.at(2, 1) == doctest::Approx(s));
  CHECK(rmW.at(2, 2) == doctest::Approx(s));
  CHECK(rmW.at(2, 3) == doctest::Approx(2 * s));

  auto c = AdaptedProcess::constant(m, -0.75);
  auto rmc = running_max(c);
  for (double v : rmc.values()) CHECK(v == 0.75);
}

TEST_CASE("process_norm") {
  auto m = build_model(2.0, 6, 2);
  auto W = AdaptedProcess::driver(m);
  CHECK(process_norm(W, NormKind::Hp, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));

  auto zero = AdaptedProcess::zero(m);
  for (auto kind : {NormKind::Sp, NormKind::Hp, NormKind::TV, NormKind::BMO})
    CHECK(process_norm(zero, kind, 2.0) == 0.0);

  std::vector<double> drift(7);
  for (int k = 0; k <= 6; ++k) drift[k] = k * m->dt();
  CHECK(process_norm(AdaptedProcess::from_steps(m, drift), NormKind::TV, 1.0) ==
        doctest::Approx(2.0).epsilon(1e-14));

  // Sp of the driver against the enumeration oracle.
  const double sp2 = process_norm(W, NormKind::Sp, 2.0);
  const double sp2_oracle = std::sqrt(oracle::expect_path(*m, [](const std::vector<double>& p) {
    double mx = 0.0;
    for (double x : p) mx = std::max(mx, std::abs(x));
    return mx * mx;
  }));
  CHECK(sp2 == doctest::Approx(sp2_oracle).epsilon(1e-14));

  CHECK_THROWS_AS(process_norm(W, NormKind::Hp, -1.0), Error);
  auto S = oracle::random_process(m, Rng(9));
  CHECK_THROWS_AS(process_norm(S, NormKind::BMO), Error);
}

TEST_CASE("process_norm: BMO of the driver") {
  auto m = build_model(1.0, 5, 2);
  auto W = AdaptedProcess::driver(m);
  // E[<W>_N - <W>_k | F_k] = T - t_k, maximal at k = 0.
  CHECK(process_norm(W, NormKind::BMO) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("sample_stopping_times") {
  auto m = build_model(1.0, 2, 2);
  StoppingSpec spec;
  spec.deterministic_steps = {0, 2};
  auto st = sample_stopping_times(m, spec);
  REQUIRE(st.size() == 2);
  for (NodeIndex t = 0; t < m->path_count(); ++t) {
    CHECK(st[0].stop_step(t) == 0);
    CHECK(st[1].stop_step(t) == 2);
  }

  StoppingSpec hit;
  hit.levels = {std::sqrt(m->dt())};
  auto sh = sample_stopping_times(m, hit);
  REQUIRE(sh.size() == 1);
  for (NodeIndex t = 0; t < m->path_count(); ++t) CHECK(sh[0].stop_step(t) == 1);

  StoppingSpec rnd;
  rnd.count = 5;
  rnd.seed = 99;
  auto a = sample_stopping_times(m, rnd);
  auto b = sample_stopping_times(m, rnd);
  REQUIRE(a.size() == 5);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (NodeIndex t = 0; t < m->path_count(); ++t)
      CHECK(a[i].stop_step(t) == b[i].stop_step(t));
}

TEST_CASE("optional sampling at stopping pairs") {
  auto m = build_model(1.0, 5, 2);
  StoppingSpec spec;
  spec.deterministic_steps = {0, 2, 5};
  spec.count = 4;
  spec.seed = 123;
  auto battery = sample_stopping_times(m, spec);
  auto M = oracle::random_martingale(m, Rng(31), 0.8);
  for (std::size_t a = 0; a < battery.size(); ++a)
    for (std::size_t b = 0; b < battery.size(); ++b) {
      auto sigma = StoppingTime::pathwise_min(battery[a], battery[b]);
      auto tau = StoppingTime::pathwise_max(battery[a], battery[b]);
      auto chk = optional_sampling_check(M, sigma, tau);
      CHECK(chk.max_abs_gap <= 1e-12);
    }
}

TEST_CASE("is_submartingale") {
  auto m = build_model(1.0, 4, 2);
  auto W = AdaptedProcess::driver(m);
  CHECK(is_submartingale(W, 0.0).verdict);

  std::vector<double> ev(W.values().size());
  for (std::size_t n = 0; n < ev.size(); ++n) ev[n] = std::exp(W.values()[n]);
  auto expW = AdaptedProcess(m, ev);
  auto rep = is_submartingale(expW, 0.0);
  CHECK(rep.verdict);

  // One-step multiplicative drift is ln cosh(sqrt(dt)) ~ dt/2.
  auto md = multiplicative_decompose(expW);
  CHECK(md.exponent.at(1, 0) == doctest::Approx(std::log(std::cosh(std::sqrt(m->dt())))).epsilon(1e-13));

  for (double& v : ev) v = -v;
  auto repn = is_submartingale(AdaptedProcess(m, std::move(ev)), 0.0);
  CHECK_FALSE(repn.verdict);
  CHECK(repn.worst_defect < 0.0);
  CHECK(repn.worst_step >= 0);
}

TEST_CASE("BDG sanity brackets on randomized martingales") {
  for (std::uint64_t seed : {7ULL, 8ULL, 9ULL}) {
    auto m = build_model(1.0, 6, 2);
    auto M = oracle::random_martingale(m, Rng(seed), 1.0);
    for (double p : {0.5, 1.0, 2.0, 4.0}) {
      const double num = std::pow(process_norm(M, NormKind::Sp, p), p);
      auto qv = predictable_qv(M);
      const double den = oracle::expect_process(qv, [&](const std::vector<double>& path) {
        return std::pow(path.back(), p / 2.0);
      });
      if (den > 0.0) {
        const double ratio = num / den;
        CHECK(ratio >= 1e-3);
        CHECK(ratio <= 1e3);
      }
    }
  }
}

TEST_CASE("recombining layout: consistent accumulation and conflicts") {
  auto m = build_model(1.0, 4, 2, /*recombining=*/true);
  auto W = AdaptedProcess::driver(m);
  // <W> is deterministic, so accumulation succeeds on the recombining layout.
  auto qv = predictable_qv(W);
  for (int k = 0; k <= 4; ++k)
    CHECK(qv.at(k, 0) == doctest::Approx(k * m->dt()).epsilon(1e-14));

  // A genuinely path-dependent accumulation must be rejected.
  CHECK_THROWS_AS(
      accumulate_predictable(m, 0.0, [&](int k, NodeIndex i) { return W.at(k, i); }),
      PathDependenceError);
}
