#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "prnf/nn.hpp"
#include "prnf/rng.hpp"

namespace testutil {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline MatrixXd random_matrix(int rows, int cols, prnf::RngStream& rng, double scale = 1.0) {
  MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = scale * rng.normal();
  return m;
}

// central finite differences of a scalar loss over every net parameter
struct FdReport {
  double max_rel = 0.0;
  double frac_within = 1.0;  // fraction of coordinates with rel err <= tol
  std::int64_t coords = 0;
};

inline FdReport fd_check(prnf::nn::Mlp& net, const prnf::nn::Gradients& analytic,
                         const std::function<double()>& loss, double tol, double h = 1e-6) {
  FdReport rep;
  std::int64_t within = 0;
  auto probe = [&](double* p, double grad) {
    const double save = *p;
    *p = save + h;
    const double lp = loss();
    *p = save - h;
    const double lm = loss();
    *p = save;
    const double fd = (lp - lm) / (2.0 * h);
    const double denom = std::max(std::abs(fd), std::abs(grad));
    const double rel = denom < 1e-10 ? 0.0 : std::abs(fd - grad) / denom;
    rep.max_rel = std::max(rep.max_rel, rel);
    ++rep.coords;
    if (rel <= tol) ++within;
  };
  for (int l = 0; l < net.layers(); ++l) {
    for (Eigen::Index i = 0; i < net.W[l].size(); ++i) {
      probe(net.W[l].data() + i, analytic.W[l].data()[i]);
    }
    for (Eigen::Index i = 0; i < net.b[l].size(); ++i) {
      probe(net.b[l].data() + i, analytic.b[l](i));
    }
  }
  rep.frac_within = static_cast<double>(within) / static_cast<double>(rep.coords);
  return rep;
}

// Kolmogorov-Smirnov statistic of samples against an analytic CDF
inline double ks_statistic(std::vector<double> samples, const std::function<double(double)>& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(f - static_cast<double>(i + 1) / n));
  }
  return d;
}

// chi^2 statistic for uniformity over [lo, hi] with `bins` equal cells
inline double chi2_uniform(const std::vector<double>& samples, double lo, double hi, int bins) {
  std::vector<double> count(static_cast<std::size_t>(bins), 0.0);
  for (double v : samples) {
    int k = static_cast<int>((v - lo) / (hi - lo) * bins);
    if (k < 0) k = 0;
    if (k >= bins) k = bins - 1;
    count[static_cast<std::size_t>(k)] += 1.0;
  }
  const double expected = static_cast<double>(samples.size()) / bins;
  double chi2 = 0.0;
  for (double c : count) chi2 += (c - expected) * (c - expected) / expected;
  return chi2;
}

// chi^2 inverse CDF at 0.99 for 19 dof (20 bins)
inline constexpr double kChi2_19_99 = 36.19086912927004;
// KS critical factor at alpha = 0.01 (asymptotic): D_crit = 1.628 / sqrt(n)
inline constexpr double kKs99 = 1.6276;

}  // namespace testutil
