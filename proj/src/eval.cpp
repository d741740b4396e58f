#include "prnf/eval.hpp"

#include <cmath>
#include <cstdio>
#include <mutex>
#include <stdexcept>

#include "prnf/parallel.hpp"
#include "prnf/quadrature.hpp"

namespace prnf::eval {

void QoiSpec::validate() const {
  if (!integrand) throw std::invalid_argument("QoI needs an integrand");
  if (m_init < 1 || n_cond < 1) throw std::invalid_argument("QoI sample counts must be >= 1");
}

namespace {

// shared estimator core: per-m means -> grand mean + standard error
Estimate reduce_per_init(const std::vector<double>& per_m) {
  const auto M = static_cast<double>(per_m.size());
  Estimate est;
  for (double v : per_m) est.value += v;
  est.value /= M;
  if (per_m.size() > 1) {
    double ss = 0.0;
    for (double v : per_m) ss += (v - est.value) * (v - est.value);
    est.std_error = std::sqrt(ss / (M - 1.0) / M);
  }
  return est;
}

}  // namespace

Estimate qoi_estimate(const flow::PrnfModel& model, const InitialDistribution& p0,
                      const QoiSpec& spec, std::uint64_t seed) {
  spec.validate();
  if (p0.d != model.d) throw std::invalid_argument("initial distribution dimension mismatch");
  std::vector<double> per_m(spec.m_init, 0.0);
  const int d = model.d;
  parallel_chunks(spec.m_init, 64, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t m = b; m < e; ++m) {
      RngStream rng(seed, static_cast<std::uint64_t>(m));
      const Vector x0 = p0.sample(rng);
      const Vector x0s = model.norm.std0(x0);
      Matrix V(2 * d, spec.n_cond);
      for (std::int64_t k = 0; k < spec.n_cond; ++k) {
        V.col(k).head(d) = x0s;
        for (int j = 0; j < d; ++j) V(d + j, k) = rng.normal();
      }
      const auto tape = nn::forward(model.g1, V);
      const Matrix xt = model.norm.unstdt(tape.out);
      double acc = 0.0;
      for (std::int64_t k = 0; k < spec.n_cond; ++k) acc += spec.integrand(xt.col(k));
      per_m[m] = acc / static_cast<double>(spec.n_cond);
    }
  });
  return reduce_per_init(per_m);
}

Estimate mc_reference(const sde::SdeProblem& problem, const InitialDistribution& p0,
                      const QoiSpec& spec, const sde::IntegratorConfig& cfg) {
  spec.validate();
  if (p0.d != problem.d) throw std::invalid_argument("initial distribution dimension mismatch");
  std::vector<double> per_m(spec.m_init, 0.0);
  std::string first_error;
  std::mutex err_mu;
  parallel_chunks(spec.m_init, 16, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t m = b; m < e; ++m) {
      RngStream rng(cfg.rng_seed, static_cast<std::uint64_t>(m));
      const Vector x0 = p0.sample(rng);
      double acc = 0.0;
      try {
        for (std::int64_t k = 0; k < spec.n_cond; ++k) {
          acc += spec.integrand(sde::simulate_path(problem, x0, cfg.dt, rng));
        }
      } catch (const sde::IntegrationError& err) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (first_error.empty()) first_error = err.what();
        return;
      }
      per_m[m] = acc / static_cast<double>(spec.n_cond);
    }
  });
  if (!first_error.empty()) throw sde::IntegrationError(first_error);
  return reduce_per_init(per_m);
}

Vector linspace(double lo, double hi, int n) {
  Vector g(n);
  for (int i = 0; i < n; ++i) g(i) = lo + (hi - lo) * i / (n - 1);
  return g;
}

namespace {

// trapezoid weights on a (possibly nonuniform) grid
Vector trapezoid_weights(const Vector& grid) {
  const int n = static_cast<int>(grid.size());
  Vector w = Vector::Zero(n);
  for (int i = 0; i + 1 < n; ++i) {
    const double h = grid(i + 1) - grid(i);
    w(i) += 0.5 * h;
    w(i + 1) += 0.5 * h;
  }
  return w;
}

double kl_on_grid(const Vector& p, const Vector& q, const Vector& w, KlDiagnostics* diag) {
  // renormalize both densities on the grid; the discrete KL of the induced
  // probability vectors is then nonnegative by Jensen
  const double zp = (p.array() * w.array()).sum();
  const double zq = (q.array() * w.array()).sum();
  if (!(zp > 0.0) || !(zq > 0.0)) {
    throw std::invalid_argument("grid does not cover the densities' mass");
  }
  double kl = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    const double pi = p(i) / zp;
    if (pi <= 1e-300) continue;
    const double qi = q(i) / zq;
    double log_ratio = std::log(pi) - (qi > 0.0 ? std::log(qi) : -1e9);
    if (log_ratio > 700.0) {
      log_ratio = 700.0;  // KDE support hole under exact mass
      if (diag) ++diag->clipped;
    }
    kl += w(i) * pi * log_ratio;
  }
  return std::max(kl, 0.0);
}

}  // namespace

double kl_divergence_1d(const std::function<double(double)>& exact,
                        const std::vector<double>& samples, const Vector& grid,
                        KlDiagnostics* diag) {
  if (samples.size() < 2) throw std::invalid_argument("need at least two samples");
  Matrix pts(1, static_cast<Eigen::Index>(samples.size()));
  for (std::size_t i = 0; i < samples.size(); ++i) pts(0, i) = samples[i];
  const tune::KdeEstimator kde = tune::kde_fit(pts);
  const int n = static_cast<int>(grid.size());
  Vector p(n), q(n);
  parallel_chunks(n, 256, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) {
      p(i) = exact(grid(i));
      q(i) = kde.pdf(Vector::Constant(1, grid(i)));
    }
  });
  return kl_on_grid(p, q, trapezoid_weights(grid), diag);
}

Vector marginal_kl(const Matrix& exact_samples, const Matrix& model_samples,
                   const std::vector<int>& dims) {
  if (exact_samples.cols() < 2 || model_samples.cols() < 2) {
    throw std::invalid_argument("need at least two samples on both sides");
  }
  Vector out(static_cast<Eigen::Index>(dims.size()));
  for (std::size_t k = 0; k < dims.size(); ++k) {
    const int q = dims[k];
    const tune::KdeEstimator kde_p = tune::kde_fit(exact_samples.row(q));
    const tune::KdeEstimator kde_q = tune::kde_fit(model_samples.row(q));
    const double lo = std::min(exact_samples.row(q).minCoeff(), model_samples.row(q).minCoeff());
    const double hi = std::max(exact_samples.row(q).maxCoeff(), model_samples.row(q).maxCoeff());
    const double pad = 3.0 * std::max(kde_p.bandwidth(0), kde_q.bandwidth(0));
    const Vector grid = linspace(lo - pad, hi + pad, 512);
    Vector p(grid.size()), qv(grid.size());
    parallel_chunks(grid.size(), 128, [&](std::int64_t b, std::int64_t e, int) {
      for (std::int64_t i = b; i < e; ++i) {
        p(i) = kde_p.pdf(Vector::Constant(1, grid(i)));
        qv(i) = kde_q.pdf(Vector::Constant(1, grid(i)));
      }
    });
    out(static_cast<Eigen::Index>(k)) = kl_on_grid(p, qv, trapezoid_weights(grid), nullptr);
  }
  return out;
}

double sqrt1d_terminal_density(double x, const InitialDistribution& p0, double t) {
  if (p0.d != 1) throw std::invalid_argument("1d initial distribution required");
  if (p0.tag == "delta") return sde::analytic_pdf_1d(x, p0.support.lo(0), t);
  if (!p0.has_density()) throw std::invalid_argument("initial distribution lacks a density");
  const double lo = p0.support.lo(0), hi = p0.support.hi(0);
  return quad::adaptive_simpson(
      [&](double x0) { return p0.density(Vector::Constant(1, x0)) * sde::analytic_pdf_1d(x, x0, t); },
      lo, hi, 1e-10);
}

namespace {

Matrix flow_pushforward(const flow::PrnfModel& model, const InitialDistribution& p0,
                        std::int64_t n, std::uint64_t seed) {
  return flow::sample_joint(model, p0, n, seed).second;
}

}  // namespace

double runaway_fraction(const flow::PrnfModel& model, double T0_hat, double p_star,
                        std::int64_t n, std::uint64_t seed, double T_tilde, double p_min,
                        double p_max) {
  if (!(p_star >= p_min && p_star <= p_max)) {
    throw std::invalid_argument("threshold must lie within the momentum bounds");
  }
  const auto p0 = InitialDistribution::maxwellian(T0_hat, T_tilde, p_min, p_max);
  const Matrix xt = flow_pushforward(model, p0, n, seed);
  double count = 0.0;
  for (Eigen::Index i = 0; i < xt.cols(); ++i) count += xt(0, i) > p_star ? 1.0 : 0.0;
  return count / static_cast<double>(n);
}

double runaway_fraction_mc(const sde::SdeProblem& problem, double T0_hat, double p_star,
                           std::int64_t n, std::uint64_t seed, double T_tilde) {
  const auto p0 =
      InitialDistribution::maxwellian(T0_hat, T_tilde, problem.domain.lo(0), problem.domain.hi(0));
  QoiSpec spec;
  spec.integrand = [p_star](const Vector& x) { return x(0) > p_star ? 1.0 : 0.0; };
  spec.m_init = n;
  spec.n_cond = 1;
  sde::IntegratorConfig cfg;
  cfg.dt = problem.default_dt;
  cfg.rng_seed = seed;
  return mc_reference(problem, p0, spec, cfg).value;
}

InitialDistribution abc_cloud(double x_c, double y_c, double z_c) {
  Vector center(3), widths(3);
  center << x_c, y_c, z_c;
  widths << M_PI / 3.0, M_PI / 5.0, M_PI / 4.0;
  sde::Box box;
  box.lo = Vector::Zero(3);
  box.hi = Vector::Constant(3, 2.0 * M_PI);
  return InitialDistribution::gaussian_cloud(center, widths, box);
}

namespace {
double region_fraction(const Matrix& xt, const std::array<double, 2>& xb,
                       const std::array<double, 2>& zb) {
  double count = 0.0;
  for (Eigen::Index i = 0; i < xt.cols(); ++i) {
    if (xt(0, i) >= xb[0] && xt(0, i) <= xb[1] && xt(2, i) >= zb[0] && xt(2, i) <= zb[1]) {
      count += 1.0;
    }
  }
  return count / static_cast<double>(xt.cols());
}
}  // namespace

double target_density(const flow::PrnfModel& model, double x_c, double z_c,
                      const std::array<double, 2>& x_bounds,
                      const std::array<double, 2>& z_bounds, std::int64_t n, std::uint64_t seed) {
  if (!(x_bounds[0] <= x_bounds[1]) || !(z_bounds[0] <= z_bounds[1])) {
    throw std::invalid_argument("region bounds must be ordered");
  }
  const Matrix xt = flow_pushforward(model, abc_cloud(x_c, M_PI, z_c), n, seed);
  return region_fraction(xt, x_bounds, z_bounds);
}

double target_density_mc(const sde::SdeProblem& problem, double x_c, double z_c,
                         const std::array<double, 2>& x_bounds,
                         const std::array<double, 2>& z_bounds, std::int64_t n,
                         std::uint64_t seed) {
  const auto p0 = abc_cloud(x_c, M_PI, z_c);
  Matrix xt(3, n);
  std::string first_error;
  std::mutex err_mu;
  parallel_chunks(n, 64, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) {
      RngStream rng(seed, static_cast<std::uint64_t>(i));
      const Vector x0 = p0.sample(rng);
      try {
        xt.col(i) = sde::simulate_path(problem, x0, problem.default_dt, rng);
      } catch (const sde::IntegrationError& err) {
        std::lock_guard<std::mutex> lk(err_mu);
        if (first_error.empty()) first_error = err.what();
        return;
      }
    }
  });
  if (!first_error.empty()) throw sde::IntegrationError(first_error);
  return region_fraction(xt, x_bounds, z_bounds);
}

void export_histogram_1d(const std::vector<double>& samples, int bins, const std::string& path,
                         const std::string& comment) {
  if (samples.empty() || bins < 1) throw std::invalid_argument("empty histogram request");
  double lo = samples[0], hi = samples[0];
  for (double v : samples) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == lo) hi = lo + 1.0;
  const double w = (hi - lo) / bins;
  std::vector<std::int64_t> count(bins, 0);
  for (double v : samples) {
    int k = static_cast<int>((v - lo) / w);
    if (k == bins) k = bins - 1;
    ++count[k];
  }
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (!comment.empty()) std::fprintf(f, "# %s\n", comment.c_str());
  std::fprintf(f, "bin_left,bin_right,count,density\n");
  const double n = static_cast<double>(samples.size());
  for (int k = 0; k < bins; ++k) {
    std::fprintf(f, "%.17g,%.17g,%lld,%.17g\n", lo + k * w, lo + (k + 1) * w,
                 static_cast<long long>(count[k]), count[k] / (n * w));
  }
  std::fclose(f);
}

void export_histogram_2d(const Matrix& samples, int dim_x, int dim_y, int bins,
                         const std::string& path, const std::string& comment) {
  if (samples.cols() < 1 || bins < 1) throw std::invalid_argument("empty histogram request");
  const auto clamp_span = [&](int dim) {
    double lo = samples.row(dim).minCoeff(), hi = samples.row(dim).maxCoeff();
    if (hi == lo) hi = lo + 1.0;
    return std::pair<double, double>(lo, hi);
  };
  const auto [xlo, xhi] = clamp_span(dim_x);
  const auto [ylo, yhi] = clamp_span(dim_y);
  const double wx = (xhi - xlo) / bins, wy = (yhi - ylo) / bins;
  Matrix grid = Matrix::Zero(bins, bins);
  for (Eigen::Index i = 0; i < samples.cols(); ++i) {
    int kx = static_cast<int>((samples(dim_x, i) - xlo) / wx);
    int ky = static_cast<int>((samples(dim_y, i) - ylo) / wy);
    if (kx == bins) kx = bins - 1;
    if (ky == bins) ky = bins - 1;
    grid(kx, ky) += 1.0;
  }
  grid /= static_cast<double>(samples.cols()) * wx * wy;
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (!comment.empty()) std::fprintf(f, "# %s\n", comment.c_str());
  std::fprintf(f, "x,y,value\n");
  for (int kx = 0; kx < bins; ++kx) {
    for (int ky = 0; ky < bins; ++ky) {
      std::fprintf(f, "%.17g,%.17g,%.17g\n", xlo + (kx + 0.5) * wx, ylo + (ky + 0.5) * wy,
                   grid(kx, ky));
    }
  }
  std::fclose(f);
}

}  // namespace prnf::eval
