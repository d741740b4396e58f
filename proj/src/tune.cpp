#include "prnf/tune.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <stdexcept>

namespace prnf::tune {

namespace {
const double kLogFloor = std::log(1e-300);
}

CrossEntropyResult cross_entropy(const flow::PrnfModel& model, const sde::PairDataset& ds,
                                 const sde::Box& domain, std::int64_t m_samples,
                                 std::uint64_t seed, bool joint) {
  if (m_samples < 2) throw std::invalid_argument("need at least two generator samples");
  ds.validate();
  const auto p0 = eval::InitialDistribution::uniform(domain);
  const auto [gx0, gxt] = flow::sample_joint(model, p0, m_samples, seed);

  Matrix eval_points;
  KdeEstimator kde;
  if (joint) {
    Matrix pts(2 * model.d, m_samples);
    pts.topRows(model.d) = gx0;
    pts.bottomRows(model.d) = gxt;
    kde = kde_fit(pts);
    eval_points.resize(2 * model.d, ds.rows());
    eval_points.topRows(model.d) = ds.x0;
    eval_points.bottomRows(model.d) = ds.xt;
  } else {
    kde = kde_fit(gxt);
    eval_points = ds.xt;
  }

  const Vector logp = kde.log_pdf_batch(eval_points);
  CrossEntropyResult out;
  for (Eigen::Index i = 0; i < logp.size(); ++i) {
    double v = logp(i);
    if (!(v > kLogFloor)) {
      v = kLogFloor;
      ++out.underflow_rows;
    }
    out.H -= v;
  }
  out.H /= static_cast<double>(logp.size());
  return out;
}

void GridSearchResult::save_csv(const std::string& path, const std::string& comment) const {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (!comment.empty()) std::fprintf(f, "# %s\n", comment.c_str());
  std::fprintf(f, "lambda,H,train_seconds,final_L1,final_L2\n");
  for (std::size_t j = 0; j < lambdas.size(); ++j) {
    std::fprintf(f, "%.17g,%.17g,%.6f,%.17g,%.17g\n", lambdas[j], H[j], train_seconds[j],
                 final_L1[j], final_L2[j]);
  }
  std::fclose(f);
}

GridSearchResult grid_search(const sde::SdeProblem& problem, const sde::PairDataset& ds,
                             const std::vector<double>& lambdas, const GridSearchConfig& cfg) {
  if (lambdas.size() < 2) throw std::invalid_argument("grid search needs at least two candidates");
  ds.validate();

  GridSearchResult result;
  result.lambdas = lambdas;
  const std::size_t J = lambdas.size();
  result.H.assign(J, std::numeric_limits<double>::infinity());
  result.train_seconds.assign(J, 0.0);
  result.final_L1.assign(J, 0.0);
  result.final_L2.assign(J, 0.0);
  result.failed.assign(J, false);
  result.models.resize(J);

  const auto norm = flow::Standardizer::fit(ds);
  // all candidates score against the same generator-sample stream
  const std::uint64_t kde_seed = RngStream::derive(cfg.train.seed, 0x6B6465ULL);

  for (std::size_t j = 0; j < J; ++j) {
    train::TrainConfig tc = cfg.train;
    tc.seed = RngStream::derive(cfg.train.seed, j);
    flow::PrnfModel model = flow::make_model(ds.d, cfg.hidden, tc.seed, norm);
    model.problem = problem.name;
    model.lambda = lambdas[j];
    const train::TrainReport rep = train::train(model, ds, {lambdas[j]}, tc);
    result.train_seconds[j] = rep.wall_seconds;
    if (rep.aborted || rep.L1.empty()) {
      result.failed[j] = true;
      continue;
    }
    result.final_L1[j] = rep.L1.back();
    result.final_L2[j] = rep.L2.back();
    result.H[j] = cross_entropy(model, ds, problem.domain, cfg.kde_samples, kde_seed,
                                cfg.joint_kde)
                      .H;
    result.models[j] = std::move(model);
  }

  int best = -1;
  for (std::size_t j = 0; j < J; ++j) {
    if (result.failed[j]) continue;
    if (best < 0 || result.H[j] < result.H[best] ||
        (result.H[j] == result.H[best] && lambdas[j] > lambdas[best])) {
      best = static_cast<int>(j);
    }
  }
  if (best < 0) throw std::runtime_error("every grid-search candidate aborted during training");
  result.selected_index = best;
  result.selected_lambda = lambdas[best];
  return result;
}

}  // namespace prnf::tune
