#include "prnf/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "prnf/parallel.hpp"

namespace prnf::train {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;
constexpr double kLogDetClip = -700.0;  // training-only guard for degenerate rows
constexpr std::int64_t kChunk = 256;

struct RowStats {
  double l1_sum = 0.0;
  double rec_sum = 0.0;
  double det_sum = 0.0;
  std::int64_t degenerate = 0;

  RowStats& operator+=(const RowStats& o) {
    l1_sum += o.l1_sum;
    rec_sum += o.rec_sum;
    det_sum += o.det_sum;
    degenerate += o.degenerate;
    return *this;
  }
};

// The whole composite loss for columns of U = [std(x0); std(xt)], with
// gradients when grad_h/grad_g are non-null. Derivation of the adjoints:
//   L1 row = d/2 log 2pi + |zt|^2/2 - log|det Bh| + sum log scale_t
//   L2 row = |g1(x0s, zt) - xts|^2 + |det Bg det Bh - 1|
// with Bh, Bg the d x d input-Jacobian blocks w.r.t. the xt / zt slots.
// d log|det B| / dB = B^{-T}; d (det Bg det Bh) / dBh = P Bh^{-T}, P = product.
// Bg additionally depends on theta_h through zt, routed via g's input adjoint.
RowStats composite_range(const flow::PrnfModel& model, const Eigen::Ref<const Matrix>& U,
                         double lambda, nn::Gradients* grad_h, nn::Gradients* grad_g) {
  const int d = model.d;
  const auto nb = U.cols();
  const bool want_grad = grad_h != nullptr;
  RowStats stats;

  const auto tape_h = nn::forward(model.h1, U);
  Matrix V(2 * d, nb);
  V.topRows(d) = U.topRows(d);
  V.bottomRows(d) = tape_h.out;
  const auto tape_g = nn::forward(model.g1, V);

  std::vector<nn::BlockDet> bh(nb), bg(nb);
  for (Eigen::Index i = 0; i < nb; ++i) {
    bh[i] = nn::jacobian_block_det(model.h1, tape_h, static_cast<int>(i), d, d, want_grad);
    bg[i] = nn::jacobian_block_det(model.g1, tape_g, static_cast<int>(i), d, d, want_grad);
  }

  const double l1_const = 0.5 * d * kLog2Pi + model.norm.log_scale_t();
  std::vector<double> det_coeff(nb, 0.0);
  std::vector<char> ok_h(nb), ok_g(nb);
  for (Eigen::Index i = 0; i < nb; ++i) {
    ok_h[i] = !bh[i].degenerate && bh[i].log_abs_det > kLogDetClip;
    ok_g[i] = !bg[i].degenerate && bg[i].log_abs_det > kLogDetClip;
    const double ld_h = ok_h[i] ? bh[i].log_abs_det : kLogDetClip;
    const double ld_g = ok_g[i] ? bg[i].log_abs_det : kLogDetClip;
    if (!ok_h[i] || !ok_g[i]) ++stats.degenerate;
    stats.l1_sum += l1_const + 0.5 * tape_h.out.col(i).squaredNorm() - ld_h;
    const double rec = (tape_g.out.col(i) - U.col(i).tail(d)).squaredNorm();
    const double P = bh[i].sign * bg[i].sign * std::exp(ld_h + ld_g);
    stats.rec_sum += rec;
    stats.det_sum += std::abs(P - 1.0);
    if (ok_h[i] && ok_g[i]) {
      det_coeff[i] = (P > 1.0 ? 1.0 : (P < 1.0 ? -1.0 : 0.0)) * P;
    }
  }
  if (!want_grad) return stats;

  std::vector<Matrix> extra_g(model.g1.layers());
  for (int l = 1; l < model.g1.layers(); ++l) {
    extra_g[l] = Matrix::Zero(model.g1.widths[l], nb);
  }
  Matrix Vbar = Matrix::Zero(2 * d, nb);
  if (lambda != 0.0) {
    for (Eigen::Index i = 0; i < nb; ++i) {
      if (ok_h[i] && ok_g[i] && det_coeff[i] != 0.0) {
        const Matrix G = (lambda * det_coeff[i]) * bg[i].inv_transpose;
        nn::jacobian_block_backward(model.g1, tape_g, static_cast<int>(i), d, d, G, *grad_g,
                                    extra_g);
      }
    }
    const Matrix Ybar_g = 2.0 * lambda * (tape_g.out - U.bottomRows(d));
    nn::backward(model.g1, tape_g, Ybar_g, &extra_g, *grad_g, &Vbar);
  }

  std::vector<Matrix> extra_h(model.h1.layers());
  for (int l = 1; l < model.h1.layers(); ++l) {
    extra_h[l] = Matrix::Zero(model.h1.widths[l], nb);
  }
  for (Eigen::Index i = 0; i < nb; ++i) {
    if (!ok_h[i]) continue;
    const double c = -1.0 + lambda * det_coeff[i] * (ok_g[i] ? 1.0 : 0.0);
    if (c == 0.0) continue;
    const Matrix G = c * bh[i].inv_transpose;
    nn::jacobian_block_backward(model.h1, tape_h, static_cast<int>(i), d, d, G, *grad_h, extra_h);
  }
  const Matrix Zbar = tape_h.out + Vbar.bottomRows(d);
  nn::backward(model.h1, tape_h, Zbar, &extra_h, *grad_h, nullptr);
  return stats;
}

struct BatchResult {
  RowStats stats;
  std::int64_t rows = 0;
};

// chunked over columns with fixed boundaries; ordered reduction
BatchResult run_batch(const flow::PrnfModel& model, const Matrix& U, double lambda,
                      nn::Gradients* grad_h, nn::Gradients* grad_g) {
  const std::int64_t n = U.cols();
  const auto n_chunks = static_cast<std::size_t>((n + kChunk - 1) / kChunk);
  std::vector<RowStats> stats(n_chunks);
  std::vector<nn::Gradients> gh, gg;
  const bool want_grad = grad_h != nullptr;
  if (want_grad) {
    gh.resize(n_chunks);
    gg.resize(n_chunks);
  }
  parallel_chunks(n, kChunk, [&](std::int64_t b, std::int64_t e, int idx) {
    nn::Gradients* ph = nullptr;
    nn::Gradients* pg = nullptr;
    if (want_grad) {
      gh[idx] = nn::zeros_like(model.h1);
      gg[idx] = nn::zeros_like(model.g1);
      ph = &gh[idx];
      pg = &gg[idx];
    }
    stats[idx] = composite_range(model, U.middleCols(b, e - b), lambda, ph, pg);
  });
  BatchResult out;
  out.rows = n;
  for (std::size_t i = 0; i < n_chunks; ++i) out.stats += stats[i];
  if (want_grad) {
    for (std::size_t i = 0; i < n_chunks; ++i) {
      *grad_h += gh[i];
      *grad_g += gg[i];
    }
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& W : grad_h->W) W *= inv;
    for (auto& b : grad_h->b) b *= inv;
    for (auto& W : grad_g->W) W *= inv;
    for (auto& b : grad_g->b) b *= inv;
  }
  return out;
}

LossBreakdown to_breakdown(const BatchResult& r, double lambda) {
  LossBreakdown out;
  out.rows = r.rows;
  out.degenerate_rows = r.stats.degenerate;
  const double inv = 1.0 / static_cast<double>(r.rows);
  out.l1 = r.stats.l1_sum * inv;
  out.l2 = (r.stats.rec_sum + r.stats.det_sum) * inv;
  out.total = out.l1 + lambda * out.l2;
  return out;
}

Matrix stack_standardized(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt) {
  Matrix U(2 * model.d, x0.cols());
  U.topRows(model.d) = model.norm.std0(x0);
  U.bottomRows(model.d) = model.norm.stdt(xt);
  return U;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0 || batch_size < 0) throw std::invalid_argument("negative epochs or batch size");
  if (learning_rate <= 0.0) throw std::invalid_argument("learning rate must be > 0");
  if (adam_beta1 <= 0.0 || adam_beta1 >= 1.0 || adam_beta2 <= 0.0 || adam_beta2 >= 1.0) {
    throw std::invalid_argument("Adam betas must lie in (0, 1)");
  }
}

LossBreakdown loss_eval(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt,
                        double lambda) {
  if (x0.cols() == 0) throw std::invalid_argument("empty batch");
  const Matrix U = stack_standardized(model, x0, xt);
  return to_breakdown(run_batch(model, U, lambda, nullptr, nullptr), lambda);
}

double loss_l1(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt) {
  return loss_eval(model, x0, xt, 0.0).l1;
}

double loss_l2(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt) {
  return loss_eval(model, x0, xt, 0.0).l2;
}

LossBreakdown loss_and_grad(const flow::PrnfModel& model, const Matrix& x0, const Matrix& xt,
                            double lambda, nn::Gradients& grad_h, nn::Gradients& grad_g) {
  if (x0.cols() == 0) throw std::invalid_argument("empty batch");
  const Matrix U = stack_standardized(model, x0, xt);
  grad_h = nn::zeros_like(model.h1);
  grad_g = nn::zeros_like(model.g1);
  return to_breakdown(run_batch(model, U, lambda, &grad_h, &grad_g), lambda);
}

AdamState AdamState::like(const nn::Mlp& net) {
  AdamState s;
  s.m = nn::zeros_like(net);
  s.v = nn::zeros_like(net);
  return s;
}

void adam_step(nn::Mlp& net, const nn::Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.adam_beta1, state.t);
  const double bc2 = 1.0 - std::pow(cfg.adam_beta2, state.t);
  const double b1 = cfg.adam_beta1, b2 = cfg.adam_beta2;
  for (int l = 0; l < net.layers(); ++l) {
    state.m.W[l] = b1 * state.m.W[l] + (1.0 - b1) * grads.W[l];
    state.v.W[l] = (b2 * state.v.W[l].array() + (1.0 - b2) * grads.W[l].array().square()).matrix();
    net.W[l].array() -= cfg.learning_rate * (state.m.W[l].array() / bc1) /
                        ((state.v.W[l].array() / bc2).sqrt() + cfg.adam_eps);
    state.m.b[l] = b1 * state.m.b[l] + (1.0 - b1) * grads.b[l];
    state.v.b[l] = (b2 * state.v.b[l].array() + (1.0 - b2) * grads.b[l].array().square()).matrix();
    net.b[l].array() -= cfg.learning_rate * (state.m.b[l].array() / bc1) /
                        ((state.v.b[l].array() / bc2).sqrt() + cfg.adam_eps);
  }
}

TrainReport train(flow::PrnfModel& model, const sde::PairDataset& ds, const LossWeights& weights,
                  const TrainConfig& cfg) {
  cfg.validate();
  ds.validate();
  if (ds.d != model.d) throw std::invalid_argument("dataset dimension does not match model");
  if (weights.lambda < 0.0) throw std::invalid_argument("lambda must be >= 0");

  TrainReport report;
  if (cfg.epochs == 0) return report;

  const auto t_start = std::chrono::steady_clock::now();
  const std::int64_t n = ds.rows();
  const std::int64_t bs = cfg.batch_size == 0 ? n : std::min<std::int64_t>(cfg.batch_size, n);

  const Matrix U_full = stack_standardized(model, ds.x0, ds.xt);
  std::vector<std::int64_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);

  nn::Mlp last_good_h = model.h1;
  nn::Mlp last_good_g = model.g1;
  AdamState state_h = AdamState::like(model.h1);
  AdamState state_g = AdamState::like(model.g1);
  nn::Gradients grad_h = nn::zeros_like(model.h1);
  nn::Gradients grad_g = nn::zeros_like(model.g1);

  Matrix U_batch(2 * model.d, bs);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    {
      RngStream shuffle_rng(cfg.seed, 0xE0000000ULL + static_cast<std::uint64_t>(epoch));
      for (std::int64_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::int64_t>(shuffle_rng.next_u64() %
                                                 static_cast<std::uint64_t>(i + 1));
        std::swap(perm[i], perm[j]);
      }
    }
    bool bad = false;
    std::string reason;
    for (std::int64_t b0 = 0; b0 < n && !bad; b0 += bs) {
      const std::int64_t nb = std::min(bs, n - b0);
      for (std::int64_t k = 0; k < nb; ++k) U_batch.col(k) = U_full.col(perm[b0 + k]);
      grad_h.set_zero();
      grad_g.set_zero();
      const BatchResult r =
          run_batch(model, U_batch.leftCols(nb), weights.lambda, &grad_h, &grad_g);
      const LossBreakdown lb = to_breakdown(r, weights.lambda);
      if (!std::isfinite(lb.total)) {
        bad = true;
        reason = "non-finite loss in epoch " + std::to_string(epoch);
        break;
      }
      if (lb.degenerate_rows * 100 > lb.rows) {
        bad = true;
        reason = "degenerate Jacobian on " + std::to_string(lb.degenerate_rows) + "/" +
                 std::to_string(lb.rows) + " rows of a batch in epoch " + std::to_string(epoch);
        break;
      }
      adam_step(model.h1, grad_h, state_h, cfg);
      adam_step(model.g1, grad_g, state_g, cfg);
    }

    if (!bad) {
      const LossBreakdown full = to_breakdown(
          run_batch(model, U_full, weights.lambda, nullptr, nullptr), weights.lambda);
      if (!std::isfinite(full.total)) {
        bad = true;
        reason = "non-finite full-dataset loss in epoch " + std::to_string(epoch);
      } else {
        report.L.push_back(full.total);
        report.L1.push_back(full.l1);
        report.L2.push_back(full.l2);
        report.wall.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count());
        report.epochs_run = epoch + 1;
        last_good_h = model.h1;
        last_good_g = model.g1;
        if (cfg.snapshot && cfg.snapshot_every > 0 && (epoch + 1) % cfg.snapshot_every == 0) {
          cfg.snapshot(epoch + 1, model, full.total, full.l1, full.l2);
        }
      }
    }
    if (bad) {
      model.h1 = last_good_h;
      model.g1 = last_good_g;
      report.aborted = true;
      report.abort_reason = reason;
      break;
    }
  }

  report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return report;
}

void save_report_csv(const TrainReport& report, const std::string& path,
                     const std::string& comment) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  if (!comment.empty()) std::fprintf(f, "# %s\n", comment.c_str());
  std::fprintf(f, "epoch,L,L1,L2,wallclock_s\n");
  for (std::size_t i = 0; i < report.L.size(); ++i) {
    const double wall = i < report.wall.size() ? report.wall[i] : 0.0;
    std::fprintf(f, "%zu,%.17g,%.17g,%.17g,%.6f\n", i + 1, report.L[i], report.L1[i],
                 report.L2[i], wall);
  }
  std::fclose(f);
}

}  // namespace prnf::train
