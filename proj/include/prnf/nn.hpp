#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

namespace prnf::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Fully-connected net, tanh on hidden layers, identity output.
struct Mlp {
  std::vector<int> widths;  // [n0, n1, ..., nL]
  std::vector<Matrix> W;    // W[l]: widths[l+1] x widths[l]
  std::vector<Vector> b;

  int input_dim() const { return widths.front(); }
  int output_dim() const { return widths.back(); }
  int layers() const { return static_cast<int>(W.size()); }
  std::int64_t parameter_count() const;
};

// Glorot-uniform weights, zero biases; deterministic in seed.
Mlp init(const std::vector<int>& widths, std::uint64_t seed);

// Activations retained from a forward pass over a batch (columns = samples).
// act[0] is the input, act[l] (1 <= l <= L-1) the l-th hidden activation.
struct BatchTape {
  std::vector<Matrix> act;
  Matrix out;
  int batch() const { return static_cast<int>(out.cols()); }
};

BatchTape forward(const Mlp& net, const Matrix& X);

struct Gradients {
  std::vector<Matrix> W;
  std::vector<Vector> b;

  void set_zero();
  Gradients& operator+=(const Gradients& o);
};

Gradients zeros_like(const Mlp& net);

// Reverse sweep for a batch. Ybar holds d(loss)/d(output) per column.
// extra_act, when given, has one matrix per tape.act entry; entries for
// hidden layers are added to the activation adjoints (used to inject the
// Jacobian-chain terms). Xbar, when non-null, receives d(loss)/d(input).
void backward(const Mlp& net, const BatchTape& tape, const Matrix& Ybar,
              const std::vector<Matrix>* extra_act, Gradients& grads, Matrix* Xbar);

// Jacobian of the output w.r.t. the input for one sample of the batch:
// J = W_L * diag(1-a^2) * W_{L-1} * ... * diag(1-a^2) * W_1.
Matrix input_jacobian(const Mlp& net, const BatchTape& tape, int sample);

// Columns [col0, col0+k) of the input Jacobian for one sample.
Matrix jacobian_block(const Mlp& net, const BatchTape& tape, int sample, int col0, int k);

struct BlockDet {
  Matrix block;          // k x k
  double log_abs_det;    // -inf when degenerate
  double sign;           // 0 when degenerate
  Matrix inv_transpose;  // empty unless requested and nondegenerate
  bool degenerate;
};

// LU with partial pivoting of a square Jacobian block; the inverse transpose
// is the adjoint of log|det| and of the determinant-product loss term.
BlockDet jacobian_block_det(const Mlp& net, const BatchTape& tape, int sample, int col0, int k,
                            bool need_inverse);

// Accumulates d(loss)/d(params) given Gbar = d(loss)/d(block) for one sample,
// and adds the induced activation adjoints into extra_act (column `sample`).
void jacobian_block_backward(const Mlp& net, const BatchTape& tape, int sample, int col0, int k,
                             const Matrix& Gbar, Gradients& grads,
                             std::vector<Matrix>& extra_act);

// "PRNW" checkpoint + JSON sidecar (<path>.json) with widths and provenance.
void save_checkpoint(const Mlp& net, const std::string& path, const std::string& meta_json = "");
Mlp load_checkpoint(const std::string& path);
void write_checkpoint_blob(const Mlp& net, std::ostream& os);
Mlp read_checkpoint_blob(std::istream& is);

}  // namespace prnf::nn
