#pragma once

#include <array>
#include <functional>

#include "prnf/distributions.hpp"
#include "prnf/flow.hpp"
#include "prnf/kde.hpp"

namespace prnf::eval {

struct QoiSpec {
  std::function<double(const Vector&)> integrand;  // F
  std::int64_t m_init = 1;  // initial-state draws
  std::int64_t n_cond = 1;  // conditional draws per initial state

  void validate() const;
};

struct Estimate {
  double value = 0.0;
  double std_error = 0.0;
};

// (1/(MN)) sum_m sum_n F(xt^(n) | x0^(m)); the standard error comes from the
// sample variance of the per-m means.
Estimate qoi_estimate(const flow::PrnfModel& model, const InitialDistribution& p0,
                      const QoiSpec& spec, std::uint64_t seed);

// Same contract with direct SDE integration in place of the flow sampler.
Estimate mc_reference(const sde::SdeProblem& problem, const InitialDistribution& p0,
                      const QoiSpec& spec, const sde::IntegratorConfig& cfg);

struct KlDiagnostics {
  std::int64_t clipped = 0;  // grid nodes hit by the log-ratio clip
};

// D_KL(exact || KDE(samples)) by the trapezoid rule on the grid. Both sides
// are renormalized on the grid, which also enforces nonnegativity.
double kl_divergence_1d(const std::function<double(double)>& exact,
                        const std::vector<double>& samples, const Vector& grid,
                        KlDiagnostics* diag = nullptr);

// Per-coordinate KDE-vs-KDE KL (exact side given as samples too).
Vector marginal_kl(const Matrix& exact_samples, const Matrix& model_samples,
                   const std::vector<int>& dims);

// uniform grid helper
Vector linspace(double lo, double hi, int n);

// Terminal-state density of the 1d benchmark under initial law p0:
// the convolution of the analytic kernel with p0 (quadrature over p0's
// support; exact kernel evaluation for delta).
double sqrt1d_terminal_density(double x, const InitialDistribution& p0, double t);

// Fraction of conditional terminal samples with momentum above p_star when
// the initial state follows the truncated Maxwellian with temperature T0_hat.
double runaway_fraction(const flow::PrnfModel& model, double T0_hat, double p_star,
                        std::int64_t n, std::uint64_t seed, double T_tilde = 3.0,
                        double p_min = 0.5, double p_max = 5.0);
double runaway_fraction_mc(const sde::SdeProblem& problem, double T0_hat, double p_star,
                           std::int64_t n, std::uint64_t seed, double T_tilde = 3.0);

// Fraction of terminal samples inside [x_lo,x_hi] x R x [z_lo,z_hi] for a
// Gaussian cloud released at (x_c, pi, z_c) in the ABC domain.
double target_density(const flow::PrnfModel& model, double x_c, double z_c,
                      const std::array<double, 2>& x_bounds,
                      const std::array<double, 2>& z_bounds, std::int64_t n, std::uint64_t seed);
double target_density_mc(const sde::SdeProblem& problem, double x_c, double z_c,
                         const std::array<double, 2>& x_bounds,
                         const std::array<double, 2>& z_bounds, std::int64_t n,
                         std::uint64_t seed);

InitialDistribution abc_cloud(double x_c, double y_c, double z_c);

// Histogram exports (CSV): 1d bins or a 2d grid of densities.
void export_histogram_1d(const std::vector<double>& samples, int bins, const std::string& path,
                         const std::string& comment = "");
void export_histogram_2d(const Matrix& samples, int dim_x, int dim_y, int bins,
                         const std::string& path, const std::string& comment = "");

}  // namespace prnf::eval
