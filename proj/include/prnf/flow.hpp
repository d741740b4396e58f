#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>

#include "prnf/dataset.hpp"
#include "prnf/distributions.hpp"
#include "prnf/nn.hpp"

namespace prnf::flow {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Affine per-coordinate rescaling of x0 and xt fitted on the training set.
// The nets see standardized coordinates; densities are corrected by the
// constant log-Jacobian of the map.
struct Standardizer {
  Vector mean0, scale0, meant, scalet;

  static Standardizer identity(int d);
  static Standardizer fit(const sde::PairDataset& ds);

  Matrix std0(const Matrix& X) const {
    return ((X.colwise() - mean0).array().colwise() / scale0.array()).matrix();
  }
  Matrix stdt(const Matrix& X) const {
    return ((X.colwise() - meant).array().colwise() / scalet.array()).matrix();
  }
  Matrix unstdt(const Matrix& X) const {
    return ((X.array().colwise() * scalet.array()).colwise() + meant.array()).matrix();
  }
  double log_scale_t() const { return scalet.array().log().sum(); }
};

struct PrnfModel {
  int d = 0;
  nn::Mlp h1;  // R^{2d} -> R^d, forward block
  nn::Mlp g1;  // R^{2d} -> R^d, inverse block
  Standardizer norm;
  std::string problem;            // problem identifier for schema checks
  double lambda = 0.0;            // selected loss weight
  std::string train_config_json;  // training provenance snapshot
};

// Fresh model with one net per block; hidden = sizes of hidden layers.
PrnfModel make_model(int d, const std::vector<int>& hidden, std::uint64_t seed,
                     const Standardizer& norm);

struct LatentSample {
  Vector z0, zt;
};

// z0 is the bitwise pass-through of x0; zt = h1(std(x0), std(xt)).
LatentSample map_forward(const PrnfModel& model, const Vector& x0, const Vector& xt);

// x_hat0 is the bitwise pass-through of z0; x_hat_t = unstd(g1(std(z0), zt)).
std::pair<Vector, Vector> map_inverse(const PrnfModel& model, const Vector& z0, const Vector& zt);

struct SignLog {
  double sign = 0.0;
  double log_abs = 0.0;
};

// Determinant of d zt / d xt (the reduced d x d block; the x0 block is never
// formed). Includes the standardization scaling, i.e. it is the Jacobian of
// the actual map xt -> zt at fixed x0.
SignLog log_det_h(const PrnfModel& model, const Vector& x0, const Vector& xt);

// log p(xt | x0) by change of variables; -inf when the block is degenerate.
double log_density(const PrnfModel& model, const Vector& x0, const Vector& xt);
Vector log_density_batch(const PrnfModel& model, const Matrix& x0, const Matrix& xt);

// zt ~ N(0, I_d) pushed through g1; deterministic in seed, d x n output.
Matrix sample_conditional(const PrnfModel& model, const Vector& x0, std::int64_t n,
                          std::uint64_t seed);

// x0 ~ p0 with one conditional draw each; returns (x0, x_hat_t) as d x n.
std::pair<Matrix, Matrix> sample_joint(const PrnfModel& model, const eval::InitialDistribution& p0,
                                       std::int64_t n, std::uint64_t seed);

// "PRNM" container with both net checkpoints, the standardizer, problem id,
// lambda and the config snapshot; JSON sidecar at <path>.json.
void save_model(const PrnfModel& model, const std::string& path,
                const std::string& sidecar_json = "");
PrnfModel load_model(const std::string& path);

}  // namespace prnf::flow
