#pragma once

#include <Eigen/Dense>
#include <cstdint>

namespace prnf::tune {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Product-Gaussian kernel density estimator over M points in R^k
// (columns = points).
struct KdeEstimator {
  Matrix points;     // k x M
  Vector bandwidth;  // per dimension
  double log_norm;   // log(1/M) + sum_i log(1/(h_i sqrt(2 pi)))

  int dim() const { return static_cast<int>(points.rows()); }
  std::int64_t size() const { return points.cols(); }

  double pdf(const Vector& x) const;
  // numerically stable log f(x); never -inf (shifted log-sum-exp)
  double log_pdf(const Vector& x) const;
  Vector pdf_batch(const Matrix& X) const;
  Vector log_pdf_batch(const Matrix& X) const;
};

// Scott's rule per dimension: h_i = sigma_i * M^{-1/(k+4)}; a zero-variance
// dimension falls back to 1e-6 times the data width.
KdeEstimator kde_fit(const Matrix& points);
KdeEstimator kde_fit(const Matrix& points, const Vector& bandwidth);

}  // namespace prnf::tune
