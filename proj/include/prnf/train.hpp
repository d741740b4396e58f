#pragma once

#include <functional>
#include <string>

#include "prnf/flow.hpp"

namespace prnf::train {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct LossWeights {
  double lambda = 0.0;  // weight of the pseudo-reversibility loss
};

struct TrainConfig {
  int epochs = 0;
  int batch_size = 1000;  // 0 => full batch
  double learning_rate = 1e-3;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 0;

  // optional observer, called every snapshot_every epochs with current losses
  int snapshot_every = 0;
  std::function<void(int, const flow::PrnfModel&, double, double, double)> snapshot;

  void validate() const;
};

struct TrainReport {
  std::vector<double> L, L1, L2;  // full-dataset values per epoch
  std::vector<double> wall;       // cumulative seconds at the end of each epoch
  double wall_seconds = 0.0;
  int epochs_run = 0;
  bool aborted = false;
  std::string abort_reason;
};

struct LossBreakdown {
  double total = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  std::int64_t degenerate_rows = 0;
  std::int64_t rows = 0;
};

// Batch means over the given pairs (original coordinates, columns = rows).
LossBreakdown loss_eval(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt,
                        double lambda);

// L1 is exactly the batch mean of -log_density; aborts (throws) when more
// than 1% of the batch has a degenerate Jacobian block.
double loss_l1(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt);
double loss_l2(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt);

// Composite loss and its exact parameter gradients (batch means).
LossBreakdown loss_and_grad(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt,
                            double lambda, nn::Gradients& grad_h, nn::Gradients& grad_g);

struct AdamState {
  nn::Gradients m, v;
  long t = 0;
  static AdamState like(const nn::Mlp& net);
};

void adam_step(nn::Mlp& net, const nn::Gradients& grads, AdamState& state,
               const TrainConfig& cfg);

TrainReport train(flow::PrnfModel& model, const sde::PairDataset& ds, const LossWeights& weights,
                  const TrainConfig& cfg);

// CSV: epoch, L, L1, L2, wallclock_s (cumulative at the final row only)
void save_report_csv(const TrainReport& report, const std::string& path,
                     const std::string& comment = "");

}  // namespace prnf::train
