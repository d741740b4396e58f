#include "prnf/kde.hpp"

#include <cmath>
#include <stdexcept>

#include "prnf/parallel.hpp"

namespace prnf::tune {

namespace {
constexpr double kLogSqrt2Pi = 0.91893853320467274178032973640562;

double log_kernel_sum(const KdeEstimator& kde, const Vector& x, double* max_out) {
  // dist2(j) = sum_i ((x_i - p_ij)/h_i)^2, vectorized over points
  Eigen::ArrayXd dist2 = Eigen::ArrayXd::Zero(kde.points.cols());
  for (int i = 0; i < kde.dim(); ++i) {
    dist2 += ((x(i) - kde.points.row(i).array()) / kde.bandwidth(i)).square();
  }
  const Eigen::ArrayXd v = -0.5 * dist2;
  const double vmax = v.maxCoeff();
  if (max_out) *max_out = vmax;
  return (v - vmax).exp().sum();
}
}  // namespace

double KdeEstimator::pdf(const Vector& x) const {
  double vmax;
  const double s = log_kernel_sum(*this, x, &vmax);
  return std::exp(log_norm + vmax) * s;
}

double KdeEstimator::log_pdf(const Vector& x) const {
  double vmax;
  const double s = log_kernel_sum(*this, x, &vmax);
  return log_norm + vmax + std::log(s);
}

Vector KdeEstimator::pdf_batch(const Matrix& X) const {
  Vector out(X.cols());
  parallel_chunks(X.cols(), 256, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) out(i) = pdf(X.col(i));
  });
  return out;
}

Vector KdeEstimator::log_pdf_batch(const Matrix& X) const {
  Vector out(X.cols());
  parallel_chunks(X.cols(), 256, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) out(i) = log_pdf(X.col(i));
  });
  return out;
}

KdeEstimator kde_fit(const Matrix& points, const Vector& bandwidth) {
  if (points.cols() < 2) throw std::invalid_argument("KDE needs at least two points");
  if (bandwidth.size() != points.rows() || (bandwidth.array() <= 0.0).any()) {
    throw std::invalid_argument("bandwidths must be positive, one per dimension");
  }
  KdeEstimator kde;
  kde.points = points;
  kde.bandwidth = bandwidth;
  kde.log_norm = -std::log(static_cast<double>(points.cols()));
  for (int i = 0; i < kde.dim(); ++i) {
    kde.log_norm -= std::log(bandwidth(i)) + kLogSqrt2Pi;
  }
  return kde;
}

KdeEstimator kde_fit(const Matrix& points) {
  if (points.cols() < 2) throw std::invalid_argument("KDE needs at least two points");
  const int k = static_cast<int>(points.rows());
  const double M = static_cast<double>(points.cols());
  const double factor = std::pow(M, -1.0 / (k + 4.0));
  const Vector mean = points.rowwise().mean();
  const Vector sigma =
      ((points.colwise() - mean).array().square().rowwise().sum() / (M - 1.0)).sqrt().matrix();
  const Vector width = points.rowwise().maxCoeff() - points.rowwise().minCoeff();
  const double fallback_width = std::max(width.maxCoeff(), 1.0);
  Vector h(k);
  for (int i = 0; i < k; ++i) {
    h(i) = sigma(i) * factor;
    if (!(h(i) > 0.0)) {
      const double w = width(i) > 0.0 ? width(i) : fallback_width;
      h(i) = 1e-6 * w;
    }
  }
  return kde_fit(points, h);
}

}  // namespace prnf::tune
