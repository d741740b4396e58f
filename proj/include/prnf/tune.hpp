#pragma once

#include <string>
#include <vector>

#include "prnf/flow.hpp"
#include "prnf/kde.hpp"
#include "prnf/train.hpp"

namespace prnf::tune {

struct CrossEntropyResult {
  double H = 0.0;
  std::int64_t underflow_rows = 0;  // rows hit by the 1e-300 density floor
};

// H = -(1/N) sum_n log p_KDE(row_n): the KDE is fitted on M generator samples
// (z0 uniform over `domain`, zt standard normal, pushed through g). In joint
// mode the KDE lives on (x0, xt) pairs and is evaluated at the joint training
// rows; in marginal mode it lives on xt alone.
CrossEntropyResult cross_entropy(const flow::PrnfModel& model, const sde::PairDataset& ds,
                                 const sde::Box& domain, std::int64_t m_samples,
                                 std::uint64_t seed, bool joint = true);

struct GridSearchResult {
  std::vector<double> lambdas;
  std::vector<double> H;
  std::vector<double> train_seconds;
  std::vector<double> final_L1, final_L2;
  std::vector<bool> failed;  // candidates whose training aborted
  std::vector<flow::PrnfModel> models;
  int selected_index = -1;
  double selected_lambda = 0.0;

  // CSV: lambda, H, train_seconds, final_L1, final_L2
  void save_csv(const std::string& path, const std::string& comment = "") const;
};

struct GridSearchConfig {
  std::vector<int> hidden = {256};
  train::TrainConfig train;
  std::int64_t kde_samples = 100000;
  bool joint_kde = true;
};

// One training per candidate (seeds derived from train.seed), scored by
// cross-entropy; argmin wins, ties break toward the larger lambda.
GridSearchResult grid_search(const sde::SdeProblem& problem, const sde::PairDataset& ds,
                             const std::vector<double>& lambdas, const GridSearchConfig& cfg);

}  // namespace prnf::tune
