#include <doctest.h>

#include <cmath>

#include "prnf/train.hpp"
#include "test_helpers.hpp"

using namespace prnf;
using train::Matrix;
using train::Vector;
using testutil::random_matrix;

namespace {

flow::PrnfModel linear_pair(double a) {
  // zt = a * xt, x̂t = zt / a: an exact inverse pair
  flow::PrnfModel m;
  m.d = 1;
  m.norm = flow::Standardizer::identity(1);
  m.h1 = nn::init({2, 1}, 0);
  m.h1.W[0] << 0.0, a;
  m.g1 = nn::init({2, 1}, 0);
  m.g1.W[0] << 0.0, 1.0 / a;
  return m;
}

sde::PairDataset toy_dataset(int d, std::int64_t n, std::uint64_t seed) {
  sde::PairDataset ds;
  ds.d = d;
  ds.t_final = 1.0;
  RngStream rng(seed, 0);
  ds.x0 = random_matrix(d, static_cast<int>(n), rng);
  // xt = x0 + 0.3 * noise: a learnable conditional law
  ds.xt = ds.x0 + 0.3 * random_matrix(d, static_cast<int>(n), rng);
  return ds;
}

}  // namespace

TEST_CASE("loss_l1") {
  SUBCASE("identity block on a zero row equals the normal constant") {
    const auto model = linear_pair(1.0);
    const Matrix x0 = Matrix::Zero(1, 1), xt = Matrix::Zero(1, 1);
    CHECK(train::loss_l1(model, x0, xt) ==
          doctest::Approx(0.5 * std::log(2.0 * M_PI)).epsilon(1e-14));
  }
  SUBCASE("equals the mean of per-row log-density negations") {
    auto model = flow::make_model(2, {12}, 44, flow::Standardizer::identity(2));
    RngStream rng(4, 0);
    const Matrix x0 = random_matrix(2, 33, rng);
    const Matrix xt = random_matrix(2, 33, rng);
    double acc = 0.0;
    for (int i = 0; i < 33; ++i) acc -= flow::log_density(model, x0.col(i), xt.col(i));
    acc /= 33.0;
    CHECK(train::loss_l1(model, x0, xt) == doctest::Approx(acc).epsilon(1e-12));
  }
  SUBCASE("matches the closed-form Gaussian NLL for a linear flow") {
    const double a = 2.0;
    const auto model = linear_pair(a);
    RngStream rng(5, 0);
    const Matrix x0 = random_matrix(1, 50, rng);
    const Matrix xt = random_matrix(1, 50, rng);
    // zt = a xt is standard normal <=> xt ~ N(0, 1/a^2)
    double nll = 0.0;
    const double sigma = 1.0 / a;
    for (int i = 0; i < 50; ++i) {
      nll += 0.5 * std::log(2.0 * M_PI) + std::log(sigma) +
             0.5 * (xt(0, i) / sigma) * (xt(0, i) / sigma);
    }
    nll /= 50.0;
    CHECK(train::loss_l1(model, x0, xt) == doctest::Approx(nll).epsilon(1e-12));
  }
}

TEST_CASE("loss_l2") {
  SUBCASE("an exact linear inverse pair has zero loss") {
    const auto model = linear_pair(2.0);
    RngStream rng(6, 0);
    const Matrix x0 = random_matrix(1, 20, rng);
    const Matrix xt = random_matrix(1, 20, rng);
    CHECK(train::loss_l2(model, x0, xt) == doctest::Approx(0.0).epsilon(1e-14));
  }
  SUBCASE("zero inverse map on a unit row gives 1 + |0 - 1| = 2") {
    flow::PrnfModel m;
    m.d = 1;
    m.norm = flow::Standardizer::identity(1);
    m.h1 = nn::init({2, 1}, 0);
    m.h1.W[0] << 0.0, 1.0;  // zt = xt, det = 1
    m.g1 = nn::init({2, 1}, 0);
    m.g1.W[0].setZero();  // x̂t = 0, det = 0
    const Matrix x0 = Matrix::Zero(1, 1);
    const Matrix xt = Matrix::Ones(1, 1);
    CHECK(train::loss_l2(m, x0, xt) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("nonnegative for random models") {
    RngStream rng(7, 0);
    for (int rep = 0; rep < 5; ++rep) {
      auto model = flow::make_model(1, {6}, 100 + static_cast<std::uint64_t>(rep),
                                    flow::Standardizer::identity(1));
      const Matrix x0 = random_matrix(1, 16, rng);
      const Matrix xt = random_matrix(1, 16, rng);
      CHECK(train::loss_l2(model, x0, xt) >= 0.0);
    }
  }
}

TEST_CASE("adam_step") {
  train::TrainConfig cfg;
  cfg.learning_rate = 0.1;
  SUBCASE("zero gradient leaves parameters unchanged") {
    auto net = nn::init({1, 1}, 0);
    const double w0 = net.W[0](0, 0);
    auto state = train::AdamState::like(net);
    auto grads = nn::zeros_like(net);
    train::adam_step(net, grads, state, cfg);
    CHECK(net.W[0](0, 0) == w0);
    CHECK(net.b[0](0) == 0.0);
  }
  SUBCASE("one step on f(w) = w^2 decreases w from 1") {
    auto net = nn::init({1, 1}, 0);
    net.W[0](0, 0) = 1.0;
    auto state = train::AdamState::like(net);
    auto grads = nn::zeros_like(net);
    grads.W[0](0, 0) = 2.0;  // f'(1)
    train::adam_step(net, grads, state, cfg);
    CHECK(net.W[0](0, 0) < 1.0);
  }
  SUBCASE("three steps match a hand-evaluated Adam recurrence") {
    auto net = nn::init({1, 1}, 0);
    net.W[0](0, 0) = 1.0;
    auto state = train::AdamState::like(net);
    // independent recurrence (the oracle)
    double w = 1.0, m = 0.0, v = 0.0;
    const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    for (int t = 1; t <= 3; ++t) {
      const double g = 2.0 * w;  // f(w) = w^2
      auto grads = nn::zeros_like(net);
      grads.W[0](0, 0) = 2.0 * net.W[0](0, 0);
      train::adam_step(net, grads, state, cfg);

      m = b1 * m + (1 - b1) * g;
      v = b2 * v + (1 - b2) * g * g;
      const double mhat = m / (1 - std::pow(b1, t));
      const double vhat = v / (1 - std::pow(b2, t));
      w -= lr * mhat / (std::sqrt(vhat) + eps);
      CHECK(net.W[0](0, 0) == doctest::Approx(w).epsilon(1e-12));
    }
  }
}

TEST_CASE("train") {
  auto ds = toy_dataset(1, 64, 21);
  train::TrainConfig cfg;
  cfg.epochs = 0;
  cfg.batch_size = 16;
  cfg.seed = 3;

  SUBCASE("zero epochs return the model unchanged") {
    auto model = flow::make_model(1, {8}, 1, flow::Standardizer::fit(ds));
    const Matrix w_before = model.h1.W[0];
    const auto report = train::train(model, ds, {10.0}, cfg);
    CHECK(report.epochs_run == 0);
    CHECK(report.L.empty());
    CHECK(model.h1.W[0] == w_before);
  }
  SUBCASE("loss decreases on a toy problem") {
    auto model = flow::make_model(1, {8}, 1, flow::Standardizer::fit(ds));
    cfg.epochs = 200;
    const auto report = train::train(model, ds, {10.0}, cfg);
    REQUIRE(report.L.size() == 200);
    CHECK(report.L.back() < report.L.front());
    CHECK_FALSE(report.aborted);
  }
  SUBCASE("same seed and config reproduce the report exactly") {
    cfg.epochs = 40;
    auto m1 = flow::make_model(1, {8}, 1, flow::Standardizer::fit(ds));
    auto m2 = flow::make_model(1, {8}, 1, flow::Standardizer::fit(ds));
    const auto r1 = train::train(m1, ds, {5.0}, cfg);
    const auto r2 = train::train(m2, ds, {5.0}, cfg);
    CHECK(r1.L == r2.L);
    CHECK(r1.L1 == r2.L1);
    CHECK(r1.L2 == r2.L2);
    CHECK(m1.h1.W[0] == m2.h1.W[0]);
    CHECK(m1.g1.W[1] == m2.g1.W[1]);
  }
  SUBCASE("divergent training aborts with the last good snapshot") {
    auto model = flow::make_model(1, {8}, 1, flow::Standardizer::fit(ds));
    cfg.epochs = 50;
    cfg.learning_rate = 1e18;  // guaranteed blow-up
    const auto report = train::train(model, ds, {1.0}, cfg);
    CHECK(report.aborted);
    CHECK_FALSE(report.abort_reason.empty());
    CHECK(model.h1.W[0].allFinite());
  }
  SUBCASE("mismatched dimensions are rejected") {
    auto model = flow::make_model(2, {8}, 1, flow::Standardizer::identity(2));
    cfg.epochs = 1;
    CHECK_THROWS_AS(train::train(model, ds, {1.0}, cfg), std::invalid_argument);
  }
  SUBCASE("snapshot callback fires on schedule") {
    auto model = flow::make_model(1, {8}, 1, flow::Standardizer::fit(ds));
    cfg.epochs = 20;
    cfg.snapshot_every = 5;
    std::vector<int> seen;
    cfg.snapshot = [&](int epoch, const flow::PrnfModel&, double, double, double) {
      seen.push_back(epoch);
    };
    train::train(model, ds, {5.0}, cfg);
    CHECK(seen == std::vector<int>{5, 10, 15, 20});
  }
}

TEST_CASE("train config validation") {
  train::TrainConfig cfg;
  cfg.learning_rate = 0.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.learning_rate = 1e-3;
  cfg.adam_beta1 = 1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
