#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "prnf/rng.hpp"

namespace prnf::sde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class BoundaryPolicy { none, reflect, clamp };

struct Box {
  Vector lo, hi;
  int dim() const { return static_cast<int>(lo.size()); }
  bool contains(const Vector& x) const {
    return (x.array() >= lo.array()).all() && (x.array() <= hi.array()).all();
  }
  double width(int i) const { return hi(i) - lo(i); }
};

struct SdeProblem {
  int d = 0;  // state dimension
  int m = 0;  // Brownian dimension
  std::function<void(double, const Vector&, Vector&)> drift;      // (t, x) -> R^d
  std::function<void(double, const Vector&, Matrix&)> diffusion;  // (t, x) -> R^{d x m}
  Box domain;
  double horizon = 0.0;
  std::vector<BoundaryPolicy> boundary;  // per axis
  double default_dt = 1e-3;
  std::string name;

  void validate() const;
};

struct IntegratorConfig {
  double dt = 1e-3;
  std::uint64_t rng_seed = 0;
};

struct IntegrationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct PairDataset {
  int d = 0;
  double t_final = 0.0;
  Matrix x0, xt;  // d x N, column per row of the dataset

  std::int64_t rows() const { return x0.cols(); }
  void validate() const;
};

Vector euler_maruyama_step(const SdeProblem& problem, double t, const Vector& x, double dt,
                           const Vector& dW);

// Full path with increments from `rng`; w_total, when non-null, receives the
// accumulated Brownian motion W_T (used by the pathwise linear10d oracle).
Vector simulate_path(const SdeProblem& problem, const Vector& x0, double dt, RngStream& rng,
                     Vector* w_total = nullptr);

Vector simulate_terminal(const SdeProblem& problem, const Vector& x0, const IntegratorConfig& cfg);

// x0 i.i.d. uniform over the domain, xt by integration to the horizon.
// Row i uses the counter-based stream (cfg.rng_seed, i): byte-identical output
// for any worker count.
PairDataset generate_pairs(const SdeProblem& problem, std::int64_t n, const IntegratorConfig& cfg);

// Conditional density of the 1d benchmark problem (support x > 0).
double analytic_pdf_1d(double x, double x0, double t);

// Pathwise solution of the 10d linear benchmark driven by scalar W_t.
Vector analytic_solution_10d(const Vector& x0, double w_t, double t);
Matrix linear10d_K();

// Upper bound of the truncation error used by the matrix exponential; exposed
// so tests can assert the certification.
Matrix expm(const Matrix& A, double tol = 1e-16);

// ---- runaway-electron collision model ----

struct ReCoefficients {
  double Z_ion = 1.0;
  double tau = 6.0e3;
  double E0 = 1.0 / 2000.0;
  double T_tilde = 3.0;
  double T_hat_f = 0.05;
  double mc2 = 500.0;

  // derived (filled by finalize())
  double delta = 0.0;        // sqrt(2*T_hat_f/mc2)
  double delta_tilde = 0.0;  // sqrt(2*T_tilde/mc2)
  double v_T_bar = 0.0;      // sqrt(T_hat_f/T_tilde)
  double lnL_tilde = 0.0;
  double lnL_hat = 0.0;
  double nu_ee_bar = 0.0;
  double E = 0.0;  // E0*(T_tilde/T_hat_f)^{3/2}

  void finalize();
  static ReCoefficients make(double Z, double tau, double E0, double T_tilde, double T_hat_f,
                             double mc2);
};

struct CollisionTerms {
  double C_A, C_B, C_F, gamma;
  double dCA_dp;  // for the (1/p^2) d/dp (p^2 C_A) drift contribution
};

double chandrasekhar_phi(double y);    // (2/sqrt(pi)) \int_0^y e^{-s^2} ds
double chandrasekhar_psi(double y);    // [phi - y phi'] / (2 y^2)
double chandrasekhar_dpsi(double y);   // phi' - 2 psi / y
CollisionTerms re_coefficients(double p, const ReCoefficients& c);

struct CatalogError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problems: sqrt1d, linear10d, runaway2d, abc3d with paper defaults;
// `params` overrides individual constants, unknown keys are rejected.
SdeProblem problem_catalog(const std::string& name,
                           const std::map<std::string, double>& params = {});

}  // namespace prnf::sde
