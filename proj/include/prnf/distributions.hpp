#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <string>

#include "prnf/rng.hpp"
#include "prnf/sde.hpp"

namespace prnf::eval {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Inverse-CDF sampler for a 1d density on [lo, hi] built from a 1024-cell
// quadrature table with monotone cubic interpolation.
class TabulatedInverseCdf {
 public:
  TabulatedInverseCdf(const std::function<double(double)>& density, double lo, double hi,
                      int cells = 1024);
  double sample(double u) const;  // u in (0,1]
  double total_mass() const { return total_; }

 private:
  std::vector<double> x_, c_, slope_;
  double total_ = 0.0;
};

struct InitialDistribution {
  std::string tag;
  int d = 0;
  sde::Box support;  // box hull of the support (degenerate for delta)
  std::function<Vector(RngStream&)> draw;
  std::function<double(const Vector&)> density;  // empty for delta

  bool has_density() const { return static_cast<bool>(density); }
  Vector sample(RngStream& rng) const { return draw(rng); }

  static InitialDistribution delta(const Vector& x);
  static InitialDistribution bar(double a, double b);
  // ~ sin^2(pi x / L) on [0, L]
  static InitialDistribution sin2(double L);
  // ~ max(0, (1-u^2) exp(-u^2/2)), u = (x-center)/width, on its positive part
  static InitialDistribution ricker(double center, double width);
  static InitialDistribution uniform(const sde::Box& box);
  // truncated Maxwellian in p over (p_min, p_max), xi uniform on (-1, 1)
  static InitialDistribution maxwellian(double T0_hat, double T_tilde, double p_min, double p_max);
  // density ~ exp(-sum ((x_i-c_i)/w_i)^2) restricted to box
  static InitialDistribution gaussian_cloud(const Vector& center, const Vector& widths,
                                            const sde::Box& box);
};

}  // namespace prnf::eval
