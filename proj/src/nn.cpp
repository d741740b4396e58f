#include "prnf/nn.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "prnf/io.hpp"
#include "prnf/rng.hpp"

namespace prnf::nn {

std::int64_t Mlp::parameter_count() const {
  std::int64_t n = 0;
  for (std::size_t l = 0; l < W.size(); ++l) n += W[l].size() + b[l].size();
  return n;
}

Mlp init(const std::vector<int>& widths, std::uint64_t seed) {
  if (widths.size() < 2) throw std::invalid_argument("mlp needs at least input and output widths");
  for (int w : widths) {
    if (w <= 0) throw std::invalid_argument("zero-width layer");
  }
  Mlp net;
  net.widths = widths;
  const int L = static_cast<int>(widths.size()) - 1;
  net.W.resize(L);
  net.b.resize(L);
  for (int l = 0; l < L; ++l) {
    const int fan_in = widths[l], fan_out = widths[l + 1];
    const double limit = std::sqrt(6.0 / (fan_in + fan_out));
    RngStream rng(seed, static_cast<std::uint64_t>(l));
    net.W[l].resize(fan_out, fan_in);
    for (int j = 0; j < fan_in; ++j) {
      for (int i = 0; i < fan_out; ++i) net.W[l](i, j) = rng.uniform(-limit, limit);
    }
    net.b[l] = Vector::Zero(fan_out);
  }
  return net;
}

BatchTape forward(const Mlp& net, const Matrix& X) {
  if (X.rows() != net.input_dim()) throw std::invalid_argument("input dimension mismatch");
  const int L = net.layers();
  BatchTape tape;
  tape.act.resize(L);
  tape.act[0] = X;
  for (int l = 0; l < L - 1; ++l) {
    tape.act[l + 1] = ((net.W[l] * tape.act[l]).colwise() + net.b[l]).array().tanh().matrix();
  }
  tape.out = (net.W[L - 1] * tape.act[L - 1]).colwise() + net.b[L - 1];
  return tape;
}

void Gradients::set_zero() {
  for (auto& m : W) m.setZero();
  for (auto& v : b) v.setZero();
}

Gradients& Gradients::operator+=(const Gradients& o) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    W[l] += o.W[l];
    b[l] += o.b[l];
  }
  return *this;
}

Gradients zeros_like(const Mlp& net) {
  Gradients g;
  g.W.reserve(net.W.size());
  g.b.reserve(net.b.size());
  for (std::size_t l = 0; l < net.W.size(); ++l) {
    g.W.emplace_back(Matrix::Zero(net.W[l].rows(), net.W[l].cols()));
    g.b.emplace_back(Vector::Zero(net.b[l].size()));
  }
  return g;
}

void backward(const Mlp& net, const BatchTape& tape, const Matrix& Ybar,
              const std::vector<Matrix>* extra_act, Gradients& grads, Matrix* Xbar) {
  const int L = net.layers();
  Matrix delta = Ybar;  // pre-activation adjoint of the current layer
  for (int l = L - 1; l >= 0; --l) {
    grads.W[l].noalias() += delta * tape.act[l].transpose();
    grads.b[l] += delta.rowwise().sum();
    if (l > 0 || Xbar != nullptr) {
      Matrix abar = net.W[l].transpose() * delta;
      if (l > 0) {
        if (extra_act != nullptr && (*extra_act)[l].size() > 0) abar += (*extra_act)[l];
        // d tanh = 1 - a^2
        delta = (abar.array() * (1.0 - tape.act[l].array().square())).matrix();
      } else {
        *Xbar = std::move(abar);
      }
    }
  }
}

namespace {

// Right-to-left chain of the Jacobian columns [col0, col0+k):
// K_0 = W_0(:, cols); T_l = diag(1-a_l^2) K_{l-1}; K_l = W_l T_l.
void jacobian_chain(const Mlp& net, const BatchTape& tape, int sample, int col0, int k,
                    std::vector<Matrix>* keep_K, std::vector<Matrix>* keep_T, Matrix& out) {
  const int L = net.layers();
  Matrix K = net.W[0].middleCols(col0, k);
  if (keep_K) keep_K->push_back(K);
  for (int l = 1; l < L; ++l) {
    const auto a = tape.act[l].col(sample).array();
    Matrix T = ((1.0 - a.square()).matrix().asDiagonal()) * K;
    if (keep_T) keep_T->push_back(T);
    K = net.W[l] * T;
    if (keep_K) keep_K->push_back(K);
  }
  out = std::move(K);
}

}  // namespace

Matrix input_jacobian(const Mlp& net, const BatchTape& tape, int sample) {
  Matrix J;
  jacobian_chain(net, tape, sample, 0, net.input_dim(), nullptr, nullptr, J);
  return J;
}

Matrix jacobian_block(const Mlp& net, const BatchTape& tape, int sample, int col0, int k) {
  Matrix J;
  jacobian_chain(net, tape, sample, col0, k, nullptr, nullptr, J);
  return J;
}

BlockDet jacobian_block_det(const Mlp& net, const BatchTape& tape, int sample, int col0, int k,
                            bool need_inverse) {
  BlockDet r;
  r.block = jacobian_block(net, tape, sample, col0, k);
  Eigen::PartialPivLU<Matrix> lu(r.block);
  const auto& U = lu.matrixLU();
  double log_abs = 0.0;
  double sign = lu.permutationP().determinant();
  for (int i = 0; i < k; ++i) {
    const double u = U(i, i);
    if (u == 0.0 || !std::isfinite(u)) {
      r.log_abs_det = -std::numeric_limits<double>::infinity();
      r.sign = 0.0;
      r.degenerate = true;
      return r;
    }
    log_abs += std::log(std::abs(u));
    if (u < 0.0) sign = -sign;
  }
  r.log_abs_det = log_abs;
  r.sign = sign;
  r.degenerate = false;
  if (need_inverse) r.inv_transpose = lu.inverse().transpose();
  return r;
}

void jacobian_block_backward(const Mlp& net, const BatchTape& tape, int sample, int col0, int k,
                             const Matrix& Gbar, Gradients& grads,
                             std::vector<Matrix>& extra_act) {
  const int L = net.layers();
  std::vector<Matrix> Ks, Ts;
  Ks.reserve(L);
  Ts.reserve(L - 1);
  Matrix unused;
  jacobian_chain(net, tape, sample, col0, k, &Ks, &Ts, unused);

  Matrix Kbar = Gbar;  // adjoint of K_{L-1}
  for (int l = L - 1; l >= 1; --l) {
    // K_l = W_l T_l
    grads.W[l].noalias() += Kbar * Ts[l - 1].transpose();
    Matrix Tbar = net.W[l].transpose() * Kbar;
    // T_l = diag(s_l) K_{l-1}, s = 1 - a^2  =>  sbar_i = sum_c Tbar(i,c) K_{l-1}(i,c)
    const Vector sbar = (Tbar.array() * Ks[l - 1].array()).rowwise().sum().matrix();
    const auto a = tape.act[l].col(sample).array();
    extra_act[l].col(sample) += (-2.0 * a * sbar.array()).matrix();
    Kbar = ((1.0 - a.square()).matrix().asDiagonal()) * Tbar;
  }
  grads.W[0].middleCols(col0, k) += Kbar;
}

namespace {
constexpr char kMagic[4] = {'P', 'R', 'N', 'W'};
constexpr std::uint32_t kVersion = 1;
}  // namespace

void write_checkpoint_blob(const Mlp& net, std::ostream& os) {
  io::put_magic(os, kMagic);
  io::put_u32(os, kVersion);
  io::put_u32(os, static_cast<std::uint32_t>(net.layers()));
  for (int w : net.widths) io::put_u32(os, static_cast<std::uint32_t>(w));
  for (int l = 0; l < net.layers(); ++l) {
    const Matrix& W = net.W[l];
    for (Eigen::Index i = 0; i < W.rows(); ++i) {
      for (Eigen::Index j = 0; j < W.cols(); ++j) io::put_f64(os, W(i, j));
    }
    for (Eigen::Index i = 0; i < net.b[l].size(); ++i) io::put_f64(os, net.b[l](i));
  }
}

Mlp read_checkpoint_blob(std::istream& is) {
  io::expect_magic(is, kMagic, "PRNW checkpoint");
  const std::uint32_t version = io::get_u32(is);
  if (version != kVersion) throw std::runtime_error("unsupported PRNW version");
  const std::uint32_t L = io::get_u32(is);
  if (L == 0 || L > 64) throw std::runtime_error("corrupt PRNW header");
  Mlp net;
  net.widths.resize(L + 1);
  for (auto& w : net.widths) w = static_cast<int>(io::get_u32(is));
  net.W.resize(L);
  net.b.resize(L);
  for (std::uint32_t l = 0; l < L; ++l) {
    net.W[l].resize(net.widths[l + 1], net.widths[l]);
    for (Eigen::Index i = 0; i < net.W[l].rows(); ++i) {
      for (Eigen::Index j = 0; j < net.W[l].cols(); ++j) net.W[l](i, j) = io::get_f64(is);
    }
    net.b[l].resize(net.widths[l + 1]);
    for (Eigen::Index i = 0; i < net.b[l].size(); ++i) net.b[l](i) = io::get_f64(is);
  }
  return net;
}

void save_checkpoint(const Mlp& net, const std::string& path, const std::string& meta_json) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_checkpoint_blob(net, os);
  if (!os) throw std::runtime_error("write failed: " + path);
  if (!meta_json.empty()) {
    std::ofstream ms(path + ".json");
    ms << meta_json << "\n";
  }
}

Mlp load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_checkpoint_blob(is);
}

}  // namespace prnf::nn
