#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qslab/errors.hpp"

namespace qslab {

/// Declared growth bounds of a driver: |g| <= (1/delta) l + c |y| + (delta/2)|z|^2.
struct GrowthData {
  double l = 0.0;
  double c = 0.0;
  double delta = 1.0;
};

/// The bound value kappa(t, y, z) for the declared growth data.
double kappa_eval(double t, double y, std::span<const double> z, const GrowthData& g);
double kappa_eval(double t, double y, double z, const GrowthData& g);

/// q_n(z) = |z|^2/2 if |z| <= n, else n|z| - n^2/2 (Euclidean |z|); the
/// Lipschitz-truncated quadratic, increasing to |z|^2/2 as n grows.
double q_trunc(std::span<const double> z, double n);
double q_trunc(double z, double n);
/// delta-scaled scalar variant used by ladders of (delta/2) z^2.
double q_trunc_delta(double z, double n, double delta);

/// An evaluable driver g(t, y, z) with declared growth and optional Lipschitz
/// constant (in the l1 metric on (y, z)). Evaluators must be pure.
class Coefficient {
public:
  using Eval = std::function<double(double, double, std::span<const double>)>;

  Coefficient() = default;
  Coefficient(std::string name, Eval eval, GrowthData growth,
              std::optional<double> lipschitz = std::nullopt);

  double operator()(double t, double y, std::span<const double> z) const;
  double eval1(double t, double y, double z) const;

  const std::string& name() const { return name_; }
  const GrowthData& growth() const { return growth_; }
  const std::optional<double>& lipschitz() const { return lipschitz_; }

  /// Closed-form b_n regularization, when one is known for this driver.
  void set_analytic_ladder(std::function<Coefficient(double)> hook);
  bool has_analytic_ladder() const { return static_cast<bool>(ladder_hook_); }
  /// Closed-form g^+ - g^- [] b_p, when one is known.
  void set_analytic_lower_truncate(std::function<Coefficient(double)> hook);
  bool has_analytic_lower_truncate() const { return static_cast<bool>(trunc_hook_); }

  friend Coefficient inf_convolve(const Coefficient&, double, const struct GridSpec&);
  friend Coefficient lower_truncate(const Coefficient&, double, const struct GridSpec&);

private:
  std::string name_;
  Eval eval_;
  GrowthData growth_;
  std::optional<double> lipschitz_;
  std::function<Coefficient(double)> ladder_hook_;
  std::function<Coefficient(double)> trunc_hook_;
};

/// Uniform grid for the numeric inf-convolution, shared by the y and z axes.
struct GridSpec {
  double lo = -10.0;
  double hi = 10.0;
  int points = 2001;

  double spacing() const { return (hi - lo) / (points - 1); }
  double at(int i) const { return lo + spacing() * i; }
};

/// g [] b_n with b_n(u, w) = n|u| + n|w|: the largest n-Lipschitz minorant.
/// Uses the driver's closed form when available, otherwise the separable
/// two-pass distance transform over the grid (scalar z only). The numeric
/// route treats g as time-independent.
Coefficient inf_convolve(const Coefficient& g, double n, const GridSpec& grid = {});
/// Always-numeric variant (for cross-checking closed forms).
Coefficient inf_convolve_numeric(const Coefficient& g, double n, const GridSpec& grid = {});

/// g_p = g^+ - g^- [] b_p: bounded below by -(l + c|y| + q_p(z)), above by g^+,
/// decreasing in p toward g, and always >= g.
Coefficient lower_truncate(const Coefficient& g, double p, const GridSpec& grid = {});

struct SampleSpec {
  std::vector<double> t_grid{0.0};
  std::vector<double> y_grid;
  std::vector<double> z_grid;
  int z_dim = 1;
  int random_points = 256;
  std::uint64_t seed = 1;
  double range = 5.0;  // random sampling box
};

struct StructureReport {
  bool pass = false;
  double worst_excess = 0.0;  // max |g| - kappa over the samples
  double worst_t = 0.0, worst_y = 0.0;
  std::vector<double> worst_z;
};

StructureReport verify_structure(const Coefficient& g, const SampleSpec& spec = {});

struct RegularizationLadder {
  Coefficient base;
  std::vector<double> indices;       // n_1 < n_2 < ...
  std::vector<Coefficient> members;  // g_{n_i}
  GridSpec grid;
  double lower_p = 0.0;  // p of the lower bound kappa_p that base satisfies
};

RegularizationLadder make_ladder(const Coefficient& g, const std::vector<double>& ns,
                                 const GridSpec& grid = {});

struct LadderReport {
  bool monotone = false;
  bool dominated = false;       // every member <= base on the grid
  bool lipschitz_ok = false;    // |g_n(x)-g_n(x')| <= n * l1 distance
  bool bounded = false;         // |g_n| <= l + c|y| + max(q_p, q_n)
  std::vector<double> moving_residuals;
  double worst_gap = 0.0;
};

struct MovingPoint {
  double y = 0.0;
  double z = 0.0;
};

LadderReport verify_ladder(const RegularizationLadder& ladder,
                           const std::vector<MovingPoint>& moving = {},
                           double target_y = 0.0, double target_z = 0.0);

/// Built-in drivers addressable by name: "q", "neg-q", "q-delta", "sin-plus-q",
/// "lq", "zero", "constant".
Coefficient make_coefficient(const std::string& name, const std::vector<double>& params = {});

}  // namespace qslab
