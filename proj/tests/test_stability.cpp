#include "doctest.h"

#include <cmath>

#include "qslab/stability.hpp"
#include "support.hpp"

using namespace qslab;

namespace {

std::vector<double> linear_terminal(const ModelPtr& m, double lam) {
  std::vector<double> xi(static_cast<std::size_t>(m->level_size(m->steps())));
  for (NodeIndex t = 0; t < m->level_size(m->steps()); ++t)
    xi[static_cast<std::size_t>(t)] = lam * m->driver_value(m->steps(), t);
  return xi;
}

std::vector<double> abs_of(const std::vector<double>& xi) {
  std::vector<double> a(xi.size());
  for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::abs(xi[i]);
  return a;
}

}  // namespace

TEST_CASE("run_ladder: monotone, tail-exact, near the oracle") {
  auto m = build_model(1.0, 10, 2);
  const double lam = 2.5;
  auto xi = linear_terminal(m, lam);
  auto spec = BSDESpec::make(m, make_coefficient("q"), xi);
  auto run = run_ladder(spec, abs_of(xi), {1.0, 2.0, 4.0, 8.0});

  double prev = -1e300;
  for (const auto& sol : run.solutions) {
    CHECK(sol.Y.root() >= prev - 1e-12);
    prev = sol.Y.root();
  }
  // Z = lam everywhere, so members with n >= lam coincide bitwise.
  for (std::size_t n = 0; n < run.solutions[2].Y.values().size(); ++n)
    CHECK(run.solutions[2].Y.values()[n] == run.solutions[3].Y.values()[n]);

  // Tail value sits within the O(1/N) scheme error of the entropic oracle.
  auto orc = solve_entropic_oracle(xi, 1.0, m);
  CHECK(std::abs(run.solutions.back().Y.root() - orc.Y.root()) <= 5.0 / m->steps());

  // Uniform bound |Y^n| <= rho(|eta|) node-wise (Lambda = C = 0), up to the
  // certified scheme gap (z^4/12) dt^2 per step.
  const double gap = 1.5 * std::pow(lam, 4) / 12.0 * m->dt() * m->dt() * m->steps();
  auto bound = entropic_process(m, abs_of(xi), 1.0).rho;
  for (const auto& sol : run.solutions)
    for (std::size_t n = 0; n < sol.Y.values().size(); ++n)
      CHECK(std::abs(sol.Y.values()[n]) <= bound.values()[n] + gap);
}

TEST_CASE("run_ladder: a Lipschitz-0 driver gives identical members") {
  auto m = build_model(1.0, 6, 2);
  auto xi = linear_terminal(m, 0.7);
  auto spec = BSDESpec::make(m, make_coefficient("constant", {0.3}), xi);
  spec.structure = StructureParams::from_rates(m, 0.3, 0.0);  // matches the driver's l
  auto run = run_ladder(spec, abs_of(xi), {1.0, 2.0, 4.0});
  for (std::size_t i = 1; i < run.solutions.size(); ++i)
    for (std::size_t n = 0; n < run.solutions[0].Y.values().size(); ++n)
      CHECK(run.solutions[i].Y.values()[n] == run.solutions[0].Y.values()[n]);
}

TEST_CASE("run_ladder: threaded solve matches serial") {
  auto m = build_model(1.0, 8, 2);
  auto xi = linear_terminal(m, 1.5);
  auto spec = BSDESpec::make(m, make_coefficient("q"), xi);
  auto serial = run_ladder(spec, abs_of(xi), {1.0, 2.0, 4.0}, Scheme::Implicit, {}, 1);
  auto threaded = run_ladder(spec, abs_of(xi), {1.0, 2.0, 4.0}, Scheme::Implicit, {}, 3);
  for (std::size_t i = 0; i < serial.solutions.size(); ++i)
    for (std::size_t n = 0; n < serial.solutions[i].Y.values().size(); ++n)
      CHECK(serial.solutions[i].Y.values()[n] == threaded.solutions[i].Y.values()[n]);
}

TEST_CASE("convergence_report") {
  auto m = build_model(1.0, 10, 2);
  const double lam = 2.5;
  auto xi = linear_terminal(m, lam);
  auto spec = BSDESpec::make(m, make_coefficient("q"), xi);
  auto run = run_ladder(spec, abs_of(xi), {1.0, 2.0, 4.0, 8.0, 16.0});
  auto rep = convergence_report(run, {1.0, 1.5});

  REQUIRE(rep.pairs.size() == 4);
  CHECK(rep.z_bound == doctest::Approx(lam).epsilon(1e-12));
  CHECK(rep.tail_start == 2);  // n = 4 is the first index >= 2.5
  CHECK(rep.tail_exact);
  CHECK(rep.pairs[2].sup == 0.0);
  CHECK(rep.pairs[2].h1 == 0.0);
  CHECK(rep.pairs[2].s1_drift == 0.0);
  CHECK(rep.pairs[3].sup == 0.0);

  // Distances shrink along the ladder and the H1 dominance chain holds.
  CHECK(rep.pairs[0].sup >= rep.pairs[1].sup);
  for (const auto& pd : rep.pairs) {
    CHECK(pd.h1 <= pd.h1_upper + 1e-12);
    CHECK(pd.bmo >= 0.0);
    REQUIRE(pd.h2p.size() == 2);
  }

  auto single = run_ladder(spec, abs_of(xi), {2.0});
  CHECK(convergence_report(single).pairs.empty());
}

TEST_CASE("qv_estimates_check: oracle instance and trivial instance") {
  auto m = build_model(1.0, 8, 2);
  auto xi = linear_terminal(m, 0.5);
  auto sol = solve_entropic_oracle(xi, 1.0, m);
  auto params = StructureParams::zero(m);
  auto stops = default_battery(m, 99, 8);

  auto rep = qv_estimates_check(sol, abs_of(xi), params, {1.0, 2.0}, stops);
  CHECK(rep.pass);
  CHECK(rep.margin_conditional > 0.0);
  for (double v : rep.margin_qv_p) CHECK(v > 0.0);
  for (double v : rep.margin_tv_p) CHECK(v > 0.0);
  CHECK(rep.margin_bmo > 0.0);

  // Oracle cross-check of bound (b) at p = 1 by direct enumeration.
  const double lhs = oracle::expect_process(sol.QV, [](const std::vector<double>& p) {
    return p.back();
  });
  const double rhs = 2.0 * oracle::expect(*m, [&](const oracle::Word& w) {
    return std::exp(std::abs(xi[static_cast<std::size_t>(oracle::terminal_index(*m, w))]));
  });
  CHECK(rep.margin_qv_p[0] == doctest::Approx(rhs - lhs).epsilon(1e-12));

  std::vector<double> zero(xi.size(), 0.0);
  auto solz = solve_entropic_oracle(zero, 1.0, m);
  auto repz = qv_estimates_check(solz, zero, params, {1.0}, stops);
  CHECK(repz.pass);

  // Membership precondition: eta must dominate.
  std::vector<double> tiny(xi.size(), 0.0);
  CHECK_THROWS_AS(qv_estimates_check(sol, tiny, params, {1.0}, stops), Error);
}

TEST_CASE("coefficient_limit_check") {
  auto m = build_model(1.0, 10, 2);
  auto xi = linear_terminal(m, 2.5);
  auto spec = BSDESpec::make(m, make_coefficient("q"), xi);

  auto run = run_ladder(spec, abs_of(xi), {1.0, 2.0, 4.0, 8.0});
  auto rep = coefficient_limit_check(run);
  REQUIRE(rep.residuals.size() == 4);
  CHECK(rep.residuals[0] > 0.0);
  CHECK(rep.residuals[1] > 0.0);
  CHECK(rep.residuals[2] == 0.0);  // tail member equals the base on the visited range
  CHECK(rep.residuals[3] == 0.0);
  CHECK(rep.growth_ok);

  // Truncated before the tail: residuals positive, decreasing.
  auto trunc = run_ladder(spec, abs_of(xi), {0.5, 1.0, 2.0});
  auto rept = coefficient_limit_check(trunc);
  CHECK(rept.residuals[0] > rept.residuals[1]);
  CHECK(rept.residuals[1] > rept.residuals[2]);
  CHECK(rept.residuals[2] > 0.0);

  // Zero driver: all residuals vanish.
  auto zspec = BSDESpec::make(m, make_coefficient("zero"), xi);
  auto zrun = run_ladder(zspec, abs_of(xi), {1.0, 2.0});
  auto zrep = coefficient_limit_check(zrun);
  for (double r : zrep.residuals) CHECK(r == 0.0);
}

TEST_CASE("biphasic run: lower truncation then ladder") {
  auto m = build_model(1.0, 8, 2);
  auto xi = linear_terminal(m, 2.0);
  auto eta = abs_of(xi);

  // Solutions of BSDE(-q_p) decrease in p toward the concave driver; with
  // Z = 2 the truncations differ at the visited points for p < 2.
  double prev = 1e300;
  std::vector<double> roots;
  for (double p : {0.5, 1.0, 2.0}) {
    auto gp = lower_truncate(make_coefficient("neg-q"), p);
    auto spec = BSDESpec::make(m, gp, xi);
    auto sol = solve_backward(spec, Scheme::Implicit);
    CHECK(sol.Y.root() <= prev + 1e-12);
    prev = sol.Y.root();
    roots.push_back(sol.Y.root());

    // Each truncated driver is its own ladder tail for n >= p.
    auto run = run_ladder(spec, eta, {p, 2.0 * p, 4.0 * p});
    auto rep = convergence_report(run);
    for (const auto& pd : rep.pairs) CHECK(pd.sup == 0.0);
  }
  CHECK(roots.front() > roots.back());
}
