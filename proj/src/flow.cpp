#include "prnf/flow.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "prnf/io.hpp"
#include "prnf/parallel.hpp"

namespace prnf::flow {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

Standardizer Standardizer::identity(int d) {
  Standardizer s;
  s.mean0 = Vector::Zero(d);
  s.meant = Vector::Zero(d);
  s.scale0 = Vector::Ones(d);
  s.scalet = Vector::Ones(d);
  return s;
}

Standardizer Standardizer::fit(const sde::PairDataset& ds) {
  ds.validate();
  Standardizer s;
  const double n = static_cast<double>(ds.rows());
  s.mean0 = ds.x0.rowwise().mean();
  s.meant = ds.xt.rowwise().mean();
  const Vector var0 = (ds.x0.colwise() - s.mean0).array().square().rowwise().sum() / n;
  const Vector vart = (ds.xt.colwise() - s.meant).array().square().rowwise().sum() / n;
  s.scale0 = var0.array().sqrt().max(1e-8).matrix();
  s.scalet = vart.array().sqrt().max(1e-8).matrix();
  return s;
}

PrnfModel make_model(int d, const std::vector<int>& hidden, std::uint64_t seed,
                     const Standardizer& norm) {
  if (d <= 0) throw std::invalid_argument("state dimension must be > 0");
  std::vector<int> widths;
  widths.push_back(2 * d);
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(d);
  PrnfModel m;
  m.d = d;
  m.h1 = nn::init(widths, RngStream::derive(seed, 1));
  m.g1 = nn::init(widths, RngStream::derive(seed, 2));
  m.norm = norm;
  return m;
}

namespace {

Matrix stacked_input(const PrnfModel& model, const Matrix& x0, const Matrix& xt) {
  Matrix U(2 * model.d, x0.cols());
  U.topRows(model.d) = model.norm.std0(x0);
  U.bottomRows(model.d) = model.norm.stdt(xt);
  return U;
}

}  // namespace

LatentSample map_forward(const PrnfModel& model, const Vector& x0, const Vector& xt) {
  LatentSample out;
  out.z0 = x0;  // identity block, bit-exact
  const auto tape = nn::forward(model.h1, stacked_input(model, x0, xt));
  out.zt = tape.out.col(0);
  return out;
}

std::pair<Vector, Vector> map_inverse(const PrnfModel& model, const Vector& z0, const Vector& zt) {
  Matrix V(2 * model.d, 1);
  V.topRows(model.d) = model.norm.std0(z0);
  V.bottomRows(model.d) = zt;
  const auto tape = nn::forward(model.g1, V);
  return {z0, model.norm.unstdt(tape.out).col(0)};
}

SignLog log_det_h(const PrnfModel& model, const Vector& x0, const Vector& xt) {
  const auto tape = nn::forward(model.h1, stacked_input(model, x0, xt));
  const auto bd = nn::jacobian_block_det(model.h1, tape, 0, model.d, model.d, false);
  if (bd.degenerate) return {0.0, -std::numeric_limits<double>::infinity()};
  return {bd.sign, bd.log_abs_det - model.norm.log_scale_t()};
}

double log_density(const PrnfModel& model, const Vector& x0, const Vector& xt) {
  const auto tape = nn::forward(model.h1, stacked_input(model, x0, xt));
  const auto bd = nn::jacobian_block_det(model.h1, tape, 0, model.d, model.d, false);
  if (bd.degenerate) return -std::numeric_limits<double>::infinity();
  const double quad = tape.out.col(0).squaredNorm();
  return -0.5 * model.d * kLog2Pi - 0.5 * quad + bd.log_abs_det - model.norm.log_scale_t();
}

Vector log_density_batch(const PrnfModel& model, const Matrix& x0, const Matrix& xt) {
  const auto n = x0.cols();
  Vector out(n);
  const Matrix U = stacked_input(model, x0, xt);
  const double log_scale = model.norm.log_scale_t();
  parallel_chunks(n, 1024, [&](std::int64_t b, std::int64_t e, int) {
    const auto tape = nn::forward(model.h1, U.middleCols(b, e - b));
    for (std::int64_t i = b; i < e; ++i) {
      const int local = static_cast<int>(i - b);
      const auto bd = nn::jacobian_block_det(model.h1, tape, local, model.d, model.d, false);
      if (bd.degenerate) {
        out(i) = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double quad = tape.out.col(local).squaredNorm();
      out(i) = -0.5 * model.d * kLog2Pi - 0.5 * quad + bd.log_abs_det - log_scale;
    }
  });
  return out;
}

Matrix sample_conditional(const PrnfModel& model, const Vector& x0, std::int64_t n,
                          std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  const int d = model.d;
  Matrix V(2 * d, n);
  const Vector x0s = model.norm.std0(x0);
  parallel_chunks(n, 4096, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) {
      RngStream rng(seed, static_cast<std::uint64_t>(i));
      V.col(i).head(d) = x0s;
      for (int j = 0; j < d; ++j) V(d + j, i) = rng.normal();
    }
  });
  Matrix out(d, n);
  parallel_chunks(n, 4096, [&](std::int64_t b, std::int64_t e, int) {
    const auto tape = nn::forward(model.g1, V.middleCols(b, e - b));
    out.middleCols(b, e - b) = model.norm.unstdt(tape.out);
  });
  return out;
}

std::pair<Matrix, Matrix> sample_joint(const PrnfModel& model, const eval::InitialDistribution& p0,
                                       std::int64_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("need at least one sample");
  if (p0.d != model.d) throw std::invalid_argument("initial distribution dimension mismatch");
  const int d = model.d;
  Matrix X0(d, n);
  Matrix V(2 * d, n);
  parallel_chunks(n, 4096, [&](std::int64_t b, std::int64_t e, int) {
    for (std::int64_t i = b; i < e; ++i) {
      RngStream rng(seed, static_cast<std::uint64_t>(i));
      const Vector x0 = p0.sample(rng);
      X0.col(i) = x0;
      V.col(i).head(d) = model.norm.std0(x0);
      for (int j = 0; j < d; ++j) V(d + j, i) = rng.normal();
    }
  });
  Matrix XT(d, n);
  parallel_chunks(n, 4096, [&](std::int64_t b, std::int64_t e, int) {
    const auto tape = nn::forward(model.g1, V.middleCols(b, e - b));
    XT.middleCols(b, e - b) = model.norm.unstdt(tape.out);
  });
  return {std::move(X0), std::move(XT)};
}

namespace {
constexpr char kMagic[4] = {'P', 'R', 'N', 'M'};
constexpr std::uint32_t kVersion = 1;

void put_vector(std::ostream& os, const Vector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) io::put_f64(os, v(i));
}

Vector get_vector(std::istream& is, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = io::get_f64(is);
  return v;
}
}  // namespace

void save_model(const PrnfModel& model, const std::string& path, const std::string& sidecar_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  io::put_magic(os, kMagic);
  io::put_u32(os, kVersion);
  io::put_u32(os, static_cast<std::uint32_t>(model.d));
  io::put_f64(os, model.lambda);
  put_vector(os, model.norm.mean0);
  put_vector(os, model.norm.scale0);
  put_vector(os, model.norm.meant);
  put_vector(os, model.norm.scalet);
  io::put_string(os, model.problem);
  io::put_string(os, model.train_config_json);
  nn::write_checkpoint_blob(model.h1, os);
  nn::write_checkpoint_blob(model.g1, os);
  if (!os) throw std::runtime_error("write failed: " + path);
  if (!sidecar_json.empty()) {
    std::ofstream ms(path + ".json");
    ms << sidecar_json << "\n";
  }
}

PrnfModel load_model(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  io::expect_magic(is, kMagic, "PRNM model");
  const std::uint32_t version = io::get_u32(is);
  if (version != kVersion) throw std::runtime_error("unsupported PRNM version");
  PrnfModel m;
  m.d = static_cast<int>(io::get_u32(is));
  if (m.d <= 0 || m.d > 4096) throw std::runtime_error("corrupt PRNM header");
  m.lambda = io::get_f64(is);
  m.norm.mean0 = get_vector(is, m.d);
  m.norm.scale0 = get_vector(is, m.d);
  m.norm.meant = get_vector(is, m.d);
  m.norm.scalet = get_vector(is, m.d);
  m.problem = io::get_string(is);
  m.train_config_json = io::get_string(is);
  m.h1 = nn::read_checkpoint_blob(is);
  m.g1 = nn::read_checkpoint_blob(is);
  if (m.h1.input_dim() != 2 * m.d || m.h1.output_dim() != m.d ||
      m.g1.input_dim() != 2 * m.d || m.g1.output_dim() != m.d) {
    throw std::runtime_error("model net shapes inconsistent with dimension");
  }
  return m;
}

}  // namespace prnf::flow
