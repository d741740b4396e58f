#include "prnf/sde.hpp"

#include <cmath>
#include <mutex>
#include <sstream>

#include "prnf/parallel.hpp"

namespace prnf::sde {

void SdeProblem::validate() const {
  if (d <= 0 || m <= 0) throw std::invalid_argument("state and Brownian dimensions must be > 0");
  if (horizon <= 0.0) throw std::invalid_argument("horizon must be > 0");
  if (domain.dim() != d) throw std::invalid_argument("domain dimension mismatch");
  for (int i = 0; i < d; ++i) {
    if (!(domain.lo(i) < domain.hi(i))) {
      throw std::invalid_argument("domain lower bound must be below upper bound");
    }
  }
  if (static_cast<int>(boundary.size()) != d) {
    throw std::invalid_argument("boundary policy must be given per axis");
  }
}

void PairDataset::validate() const {
  if (rows() < 1) throw std::invalid_argument("dataset needs at least one row");
  if (xt.cols() != x0.cols() || x0.rows() != d || xt.rows() != d) {
    throw std::invalid_argument("dataset shape mismatch");
  }
  if (!x0.allFinite() || !xt.allFinite()) {
    throw std::invalid_argument("dataset contains non-finite entries");
  }
}

namespace {

double apply_boundary(double x, double lo, double hi, BoundaryPolicy policy) {
  switch (policy) {
    case BoundaryPolicy::none:
      return x;
    case BoundaryPolicy::clamp:
      return std::min(std::max(x, lo), hi);
    case BoundaryPolicy::reflect: {
      const double w = hi - lo;
      double t = std::fmod(x - lo, 2.0 * w);
      if (t < 0.0) t += 2.0 * w;
      return lo + (t <= w ? t : 2.0 * w - t);
    }
  }
  return x;
}

[[noreturn]] void integration_failure(double t, const Vector& x, const char* what) {
  std::ostringstream os;
  os << "integration failure: non-finite " << what << " at t=" << t << ", x=[";
  for (int i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x(i);
  os << "]";
  throw IntegrationError(os.str());
}

}  // namespace

Vector euler_maruyama_step(const SdeProblem& problem, double t, const Vector& x, double dt,
                           const Vector& dW) {
  if (dt <= 0.0) throw std::invalid_argument("dt must be > 0");
  Vector b(problem.d);
  problem.drift(t, x, b);
  if (!b.allFinite()) integration_failure(t, x, "drift");
  Matrix sigma(problem.d, problem.m);
  problem.diffusion(t, x, sigma);
  if (!sigma.allFinite()) integration_failure(t, x, "diffusion");
  Vector next = x + b * dt + sigma * dW;
  for (int i = 0; i < problem.d; ++i) {
    next(i) = apply_boundary(next(i), problem.domain.lo(i), problem.domain.hi(i),
                             problem.boundary[i]);
  }
  return next;
}

Vector simulate_path(const SdeProblem& problem, const Vector& x0, double dt, RngStream& rng,
                     Vector* w_total) {
  const double T = problem.horizon;
  const auto n_steps = static_cast<std::int64_t>(std::llround(T / dt));
  const double sqrt_dt = std::sqrt(dt);
  Vector x = x0;
  Vector dW(problem.m);
  if (w_total) *w_total = Vector::Zero(problem.m);
  double t = 0.0;
  for (std::int64_t k = 0; k < n_steps; ++k) {
    for (int j = 0; j < problem.m; ++j) dW(j) = sqrt_dt * rng.normal();
    if (w_total) *w_total += dW;
    x = euler_maruyama_step(problem, t, x, dt, dW);
    t += dt;
  }
  // fractional last step when dt does not divide T
  const double rem = T - static_cast<double>(n_steps) * dt;
  if (rem > 1e-12 * T) {
    const double s = std::sqrt(rem);
    for (int j = 0; j < problem.m; ++j) dW(j) = s * rng.normal();
    if (w_total) *w_total += dW;
    x = euler_maruyama_step(problem, t, x, rem, dW);
  }
  return x;
}

Vector simulate_terminal(const SdeProblem& problem, const Vector& x0, const IntegratorConfig& cfg) {
  if (cfg.dt <= 0.0 || cfg.dt > problem.horizon) {
    throw std::invalid_argument("need 0 < dt <= horizon");
  }
  RngStream rng(cfg.rng_seed, 0);
  return simulate_path(problem, x0, cfg.dt, rng);
}

PairDataset generate_pairs(const SdeProblem& problem, std::int64_t n, const IntegratorConfig& cfg) {
  if (n < 1) throw std::invalid_argument("need at least one pair");
  if (cfg.dt <= 0.0 || cfg.dt > problem.horizon) {
    throw std::invalid_argument("need 0 < dt <= horizon");
  }
  problem.validate();
  PairDataset ds;
  ds.d = problem.d;
  ds.t_final = problem.horizon;
  ds.x0.resize(problem.d, n);
  ds.xt.resize(problem.d, n);

  std::string first_error;
  std::mutex err_mu;
  parallel_chunks(n, 512, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) {
      RngStream rng(cfg.rng_seed, static_cast<std::uint64_t>(i));
      Vector x0(problem.d);
      for (int j = 0; j < problem.d; ++j) {
        x0(j) = rng.uniform(problem.domain.lo(j), problem.domain.hi(j));
      }
      try {
        ds.xt.col(i) = simulate_path(problem, x0, cfg.dt, rng);
      } catch (const IntegrationError& err) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (first_error.empty()) {
          first_error = "row " + std::to_string(i) + ": " + err.what();
        }
        return;
      }
      ds.x0.col(i) = x0;
    }
  });
  if (!first_error.empty()) throw IntegrationError(first_error);
  return ds;
}

double analytic_pdf_1d(double x, double x0, double t) {
  if (t <= 0.0) throw std::invalid_argument("t must be > 0");
  if (x <= 0.0) return 0.0;  // the law of (sqrt(x0)+t+W_t)^2 lives on [0, inf)
  const double sx = std::sqrt(x);
  const double mu = std::sqrt(x0) + t;
  const double inv2t = 1.0 / (2.0 * t);
  const double pref = 1.0 / (2.0 * std::sqrt(2.0 * M_PI * t * x));
  const double em = std::exp(-(sx - mu) * (sx - mu) * inv2t);
  const double ep = std::exp(-(sx + mu) * (sx + mu) * inv2t);
  return pref * (em + ep);
}

Matrix linear10d_K() {
  Matrix K = Matrix::Zero(10, 10);
  for (int i = 0; i < 10; ++i) {
    K(i, i) = 0.5;
    if (i + 1 < 10) K(i, i + 1) = 0.5;
  }
  return K;
}

Matrix expm(const Matrix& A, double tol) {
  const double norm = A.cwiseAbs().colwise().sum().maxCoeff();  // 1-norm
  int squarings = 0;
  if (norm > 0.5) {
    squarings = static_cast<int>(std::ceil(std::log2(norm / 0.5)));
  }
  const Matrix B = A / std::exp2(squarings);
  const int n = static_cast<int>(A.rows());
  Matrix result = Matrix::Identity(n, n);
  Matrix term = Matrix::Identity(n, n);
  // after scaling ||B|| <= 1/2: remainder after k terms is bounded by
  // ||B||^{k+1}/(k+1)! * 1/(1-||B||) <= 2^{-k} -> certified below tol
  double term_bound = 1.0;
  for (int k = 1; k <= 60; ++k) {
    term = term * B / static_cast<double>(k);
    result += term;
    term_bound *= 0.5 / static_cast<double>(k);
    if (2.0 * term_bound < tol) break;
  }
  for (int s = 0; s < squarings; ++s) result = result * result;
  return result;
}

Vector analytic_solution_10d(const Vector& x0, double w_t, double t) {
  if (t < 0.0) throw std::invalid_argument("t must be >= 0");
  const Matrix K = linear10d_K();
  const Matrix A = (Matrix::Identity(10, 10) - 0.5 * K * K) * t + K * w_t;
  return expm(A) * x0;
}

// ---- runaway-electron collision model ----

void ReCoefficients::finalize() {
  if (T_tilde <= 0.0 || T_hat_f <= 0.0) throw std::invalid_argument("temperatures must be > 0");
  delta = std::sqrt(2.0 * T_hat_f / mc2);
  delta_tilde = std::sqrt(2.0 * T_tilde / mc2);
  v_T_bar = std::sqrt(T_hat_f / T_tilde);
  lnL_tilde = 14.9 - 0.5 * std::log(0.28) + std::log(T_tilde);
  lnL_hat = 14.9 - 0.5 * std::log(0.28) + std::log(T_hat_f);
  const double ratio32 = std::pow(T_tilde / T_hat_f, 1.5);
  nu_ee_bar = ratio32 * lnL_hat / lnL_tilde;
  E = E0 * ratio32;
}

ReCoefficients ReCoefficients::make(double Z, double tau, double E0, double T_tilde,
                                    double T_hat_f, double mc2) {
  ReCoefficients c;
  c.Z_ion = Z;
  c.tau = tau;
  c.E0 = E0;
  c.T_tilde = T_tilde;
  c.T_hat_f = T_hat_f;
  c.mc2 = mc2;
  c.finalize();
  return c;
}

double chandrasekhar_phi(double y) { return std::erf(y); }

namespace {
constexpr double kTwoOverSqrtPi = 1.1283791670955125738961589031215;

double phi_deriv(double y) { return kTwoOverSqrtPi * std::exp(-y * y); }
}  // namespace

double chandrasekhar_psi(double y) {
  if (y < 0.03) {
    // series: (2/sqrt(pi)) (y/3 - y^3/5 + y^5/14 - y^7/54)
    const double y2 = y * y;
    return kTwoOverSqrtPi * y * (1.0 / 3.0 + y2 * (-1.0 / 5.0 + y2 * (1.0 / 14.0 - y2 / 54.0)));
  }
  return (chandrasekhar_phi(y) - y * phi_deriv(y)) / (2.0 * y * y);
}

double chandrasekhar_dpsi(double y) { return phi_deriv(y) - 2.0 * chandrasekhar_psi(y) / y; }

CollisionTerms re_coefficients(double p, const ReCoefficients& c) {
  if (p <= 0.0) throw std::domain_error("momentum must be > 0");
  CollisionTerms out;
  const double gamma = std::sqrt(1.0 + (c.delta_tilde * p) * (c.delta_tilde * p));
  const double y = p / (gamma * c.v_T_bar);
  const double phi = chandrasekhar_phi(y);
  const double psi = chandrasekhar_psi(y);
  const double vT2 = c.v_T_bar * c.v_T_bar;
  out.gamma = gamma;
  out.C_A = c.nu_ee_bar * vT2 * psi / y;
  out.C_F = 2.0 * c.nu_ee_bar * c.v_T_bar * psi;
  const double d4 = c.delta * c.delta * c.delta * c.delta;
  out.C_B = 0.5 * c.nu_ee_bar * vT2 / y * (c.Z_ion + phi - psi + 0.5 * y * y * d4);
  // dC_A/dp = nu vT^2 * (psi'(y) y - psi)/y^2 * dy/dp with dy/dp = 1/(vT gamma^3)
  const double dy_dp = 1.0 / (c.v_T_bar * gamma * gamma * gamma);
  out.dCA_dp = c.nu_ee_bar * vT2 * (chandrasekhar_dpsi(y) * y - psi) / (y * y) * dy_dp;
  return out;
}

// ---- catalog ----

namespace {

std::map<std::string, double> with_defaults(const std::map<std::string, double>& params,
                                            std::map<std::string, double> defaults,
                                            const std::string& name) {
  for (const auto& [key, value] : params) {
    auto it = defaults.find(key);
    if (it == defaults.end()) {
      throw CatalogError("unknown parameter '" + key + "' for problem '" + name + "'");
    }
    it->second = value;
  }
  return defaults;
}

SdeProblem make_sqrt1d(const std::map<std::string, double>& params) {
  auto v = with_defaults(params, {{"T", 0.1}, {"L", 5.0}}, "sqrt1d");
  SdeProblem p;
  p.name = "sqrt1d";
  p.d = 1;
  p.m = 1;
  p.horizon = v.at("T");
  p.domain.lo = Vector::Constant(1, 0.0);
  p.domain.hi = Vector::Constant(1, v.at("L"));
  p.boundary = {BoundaryPolicy::none};
  // sqrt argument clamped at 0: Euler-Maruyama iterates can dip slightly
  // below the support of the exact law
  p.drift = [](double, const Vector& x, Vector& out) {
    out(0) = 2.0 * std::sqrt(std::max(x(0), 0.0)) + 1.0;
  };
  p.diffusion = [](double, const Vector& x, Matrix& out) {
    out(0, 0) = 2.0 * std::sqrt(std::max(x(0), 0.0));
  };
  return p;
}

SdeProblem make_linear10d(const std::map<std::string, double>& params) {
  auto v = with_defaults(params, {{"T", 1.0}}, "linear10d");
  SdeProblem p;
  p.name = "linear10d";
  p.d = 10;
  p.m = 1;  // Eq. with one shared Brownian motion driving K X dW
  p.horizon = v.at("T");
  p.domain.lo = Vector::Zero(10);
  p.domain.hi = Vector::Ones(10);
  p.boundary.assign(10, BoundaryPolicy::none);
  const Matrix K = linear10d_K();
  p.drift = [](double, const Vector& x, Vector& out) { out = x; };
  p.diffusion = [K](double, const Vector& x, Matrix& out) { out.col(0) = K * x; };
  return p;
}

SdeProblem make_runaway2d(const std::map<std::string, double>& params) {
  auto v = with_defaults(params,
                         {{"Z", 1.0},
                          {"tau", 6.0e3},
                          {"E0", 1.0 / 2000.0},
                          {"T_tilde", 3.0},
                          {"T_hat_f", 0.05},
                          {"mc2", 500.0},
                          {"p_min", 0.5},
                          {"p_max", 5.0},
                          {"T", 26.0}},
                         "runaway2d");
  const ReCoefficients coeffs = ReCoefficients::make(v.at("Z"), v.at("tau"), v.at("E0"),
                                                     v.at("T_tilde"), v.at("T_hat_f"),
                                                     v.at("mc2"));
  SdeProblem p;
  p.name = "runaway2d";
  p.d = 2;  // (p, xi)
  p.m = 2;
  p.horizon = v.at("T");
  p.domain.lo = Vector(2);
  p.domain.hi = Vector(2);
  p.domain.lo << v.at("p_min"), -1.0;
  p.domain.hi << v.at("p_max"), 1.0;
  p.boundary = {BoundaryPolicy::reflect, BoundaryPolicy::reflect};
  p.drift = [coeffs](double, const Vector& x, Vector& out) {
    const double mom = x(0), xi = x(1);
    const CollisionTerms ct = re_coefficients(mom, coeffs);
    const double one_m_xi2 = std::max(0.0, 1.0 - xi * xi);
    out(0) = coeffs.E * xi - ct.gamma * mom * one_m_xi2 / coeffs.tau - ct.C_F +
             2.0 * ct.C_A / mom + ct.dCA_dp;
    out(1) = coeffs.E * one_m_xi2 / mom + xi * one_m_xi2 / (coeffs.tau * ct.gamma) -
             2.0 * xi * ct.C_B / (mom * mom);
  };
  p.diffusion = [coeffs](double, const Vector& x, Matrix& out) {
    const double mom = x(0), xi = x(1);
    const CollisionTerms ct = re_coefficients(mom, coeffs);
    const double one_m_xi2 = std::max(0.0, 1.0 - xi * xi);
    out.setZero();
    out(0, 0) = std::sqrt(2.0 * ct.C_A);
    out(1, 1) = std::sqrt(2.0 * ct.C_B) * std::sqrt(one_m_xi2) / mom;
  };
  return p;
}

SdeProblem make_abc3d(const std::map<std::string, double>& params) {
  auto v = with_defaults(params, {{"Pe", 3.0}, {"A", 1.0}, {"B", 1.0}, {"C", 0.25}, {"T", 2.0}},
                         "abc3d");
  const double Pe = v.at("Pe"), A = v.at("A"), B = v.at("B"), C = v.at("C");
  SdeProblem p;
  p.name = "abc3d";
  p.d = 3;
  p.m = 3;
  p.horizon = v.at("T");
  p.domain.lo = Vector::Zero(3);
  p.domain.hi = Vector::Constant(3, 2.0 * M_PI);
  p.boundary.assign(3, BoundaryPolicy::none);
  p.drift = [Pe, A, B, C](double, const Vector& x, Vector& out) {
    out(0) = Pe * (A * std::sin(x(2)) + C * std::cos(x(1)));
    out(1) = Pe * (B * std::sin(x(0)) + A * std::cos(x(2)));
    out(2) = Pe * (C * std::sin(x(1)) + B * std::cos(x(0)));
  };
  p.diffusion = [](double, const Vector&, Matrix& out) { out = Matrix::Identity(3, 3); };
  return p;
}

}  // namespace

SdeProblem problem_catalog(const std::string& name, const std::map<std::string, double>& params) {
  SdeProblem p;
  if (name == "sqrt1d") {
    p = make_sqrt1d(params);
  } else if (name == "linear10d") {
    p = make_linear10d(params);
  } else if (name == "runaway2d") {
    p = make_runaway2d(params);
  } else if (name == "abc3d") {
    p = make_abc3d(params);
  } else {
    throw CatalogError("unknown problem '" + name +
                       "'; valid names: sqrt1d, linear10d, runaway2d, abc3d");
  }
  p.default_dt = 1e-3;
  p.validate();
  return p;
}

}  // namespace prnf::sde
