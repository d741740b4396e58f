#include <doctest.h>

#include <cmath>

#include "prnf/kde.hpp"
#include "prnf/quadrature.hpp"
#include "prnf/tune.hpp"
#include "test_helpers.hpp"

using namespace prnf;
using tune::Matrix;
using tune::Vector;
using testutil::random_matrix;

TEST_CASE("kde basics") {
  SUBCASE("two points at +-1 with unit bandwidth evaluated at 0") {
    Matrix pts(1, 2);
    pts << -1.0, 1.0;
    const auto kde = tune::kde_fit(pts, Vector::Ones(1));
    const double expect = std::exp(-0.5) / std::sqrt(2.0 * M_PI);  // phi(1)
    CHECK(kde.pdf(Vector::Zero(1)) == doctest::Approx(expect).epsilon(1e-12));
    CHECK(expect == doctest::Approx(0.24197072451914337).epsilon(1e-12));
  }
  SUBCASE("normalizes to one in 1d") {
    RngStream rng(1, 0);
    Matrix pts = random_matrix(1, 500, rng);
    const auto kde = tune::kde_fit(pts);
    const double mass = quad::composite_simpson(
        [&](double x) { return kde.pdf(Vector::Constant(1, x)); }, -10.0, 10.0, 2000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("normalizes to one in 2d") {
    RngStream rng(2, 0);
    Matrix pts = random_matrix(2, 300, rng);
    const auto kde = tune::kde_fit(pts);
    // iterated Simpson over a generous box
    auto inner = [&](double y) {
      return quad::composite_simpson(
          [&](double x) {
            Vector v(2);
            v << x, y;
            return kde.pdf(v);
          },
          -8.0, 8.0, 400);
    };
    const double mass = quad::composite_simpson(inner, -8.0, 8.0, 400);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-4));
  }
  SUBCASE("nonnegative and permutation invariant") {
    RngStream rng(3, 0);
    Matrix pts = random_matrix(1, 64, rng);
    const auto kde = tune::kde_fit(pts);
    Matrix shuffled = pts.rowwise().reverse();
    const auto kde2 = tune::kde_fit(shuffled);
    for (double x : {-2.0, -0.5, 0.0, 1.0, 2.5}) {
      const double v = kde.pdf(Vector::Constant(1, x));
      CHECK(v >= 0.0);
      CHECK(kde2.pdf(Vector::Constant(1, x)) == doctest::Approx(v).epsilon(1e-12));
    }
  }
  SUBCASE("zero-variance dimension falls back to the bandwidth floor") {
    Matrix pts(2, 10);
    pts.row(0).setConstant(3.0);
    pts.row(1) = Vector::LinSpaced(10, 0.0, 2.0).transpose();
    const auto kde = tune::kde_fit(pts);
    CHECK(kde.bandwidth(0) == doctest::Approx(1e-6 * 2.0));
    CHECK(std::isfinite(kde.log_pdf(pts.col(0))));
  }
  SUBCASE("degenerate requests are rejected") {
    Matrix one(1, 1);
    one << 0.0;
    CHECK_THROWS_AS(tune::kde_fit(one), std::invalid_argument);
    Matrix two(1, 2);
    two << 0.0, 1.0;
    CHECK_THROWS_AS(tune::kde_fit(two, Vector::Zero(1)), std::invalid_argument);
  }
  SUBCASE("log_pdf is finite far away and matches log(pdf) nearby") {
    Matrix pts(1, 4);
    pts << 0.0, 0.1, -0.1, 0.2;
    const auto kde = tune::kde_fit(pts);
    CHECK(std::isfinite(kde.log_pdf(Vector::Constant(1, 500.0))));
    CHECK(kde.log_pdf(Vector::Constant(1, 0.05)) ==
          doctest::Approx(std::log(kde.pdf(Vector::Constant(1, 0.05)))).epsilon(1e-12));
  }
}

namespace {

// g1 = single linear layer picking zt: the generator emits exactly its
// standard-normal latent draws
flow::PrnfModel identity_generator_1d() {
  flow::PrnfModel m;
  m.d = 1;
  m.norm = flow::Standardizer::identity(1);
  m.h1 = nn::init({2, 1}, 0);
  m.h1.W[0] << 0.0, 1.0;
  m.g1 = nn::init({2, 1}, 0);
  m.g1.W[0] << 0.0, 1.0;
  return m;
}

sde::PairDataset gaussian_dataset(std::int64_t n, std::uint64_t seed) {
  sde::PairDataset ds;
  ds.d = 1;
  ds.t_final = 1.0;
  ds.x0.resize(1, n);
  ds.xt.resize(1, n);
  for (std::int64_t i = 0; i < n; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    ds.x0(0, i) = rng.uniform(0.0, 1.0);
    ds.xt(0, i) = rng.normal();
  }
  return ds;
}

}  // namespace

TEST_CASE("cross_entropy") {
  sde::Box unit;
  unit.lo = Vector::Zero(1);
  unit.hi = Vector::Ones(1);
  const auto ds = gaussian_dataset(4000, 500);

  SUBCASE("identity generator approaches the Gaussian entropy (marginal mode)") {
    const auto model = identity_generator_1d();
    const auto r = tune::cross_entropy(model, ds, unit, 20000, 9, /*joint=*/false);
    const double gaussian_entropy = 0.5 * std::log(2.0 * M_PI * std::exp(1.0));  // 1.4189
    CHECK(r.H == doctest::Approx(gaussian_entropy).epsilon(0.05 / gaussian_entropy));
    CHECK(r.underflow_rows == 0);
  }
  SUBCASE("deterministic in the seed, to the last bit") {
    const auto model = identity_generator_1d();
    const auto a = tune::cross_entropy(model, ds, unit, 5000, 13, true);
    const auto b = tune::cross_entropy(model, ds, unit, 5000, 13, true);
    CHECK(a.H == b.H);
    const auto c = tune::cross_entropy(model, ds, unit, 5000, 14, true);
    CHECK(a.H != c.H);
  }
  SUBCASE("a broken constant generator scores worse") {
    const auto good = identity_generator_1d();
    flow::PrnfModel broken = identity_generator_1d();
    broken.g1.W[0].setZero();
    broken.g1.b[0] = Vector::Constant(1, 0.1);
    const auto hg = tune::cross_entropy(good, ds, unit, 20000, 9, false);
    const auto hb = tune::cross_entropy(broken, ds, unit, 20000, 9, false);
    CHECK(hb.H > hg.H);
  }
}

TEST_CASE("grid_search") {
  // tiny but real pipeline: learn xt = x0 + 0.2 noise on [0, 1]
  sde::SdeProblem prob;
  prob.name = "toy";
  prob.d = 1;
  prob.m = 1;
  prob.horizon = 1.0;
  prob.domain.lo = Vector::Zero(1);
  prob.domain.hi = Vector::Ones(1);
  prob.boundary = {sde::BoundaryPolicy::none};
  prob.drift = [](double, const Vector&, Vector& out) { out.setZero(); };
  prob.diffusion = [](double, const Vector&, Matrix& out) { out(0, 0) = 0.2; };

  const auto ds = sde::generate_pairs(prob, 400, {0.05, 77});
  tune::GridSearchConfig gcfg;
  gcfg.hidden = {8};
  gcfg.train.epochs = 60;
  gcfg.train.batch_size = 100;
  gcfg.train.seed = 5;
  gcfg.kde_samples = 4000;

  SUBCASE("a single repeated candidate selects itself") {
    const auto r = tune::grid_search(prob, ds, {3.0, 3.0}, gcfg);
    CHECK(r.selected_lambda == 3.0);
    CHECK(r.H.size() == 2);
    CHECK(r.H[static_cast<std::size_t>(r.selected_index)] <= r.H[0]);
    CHECK(r.H[static_cast<std::size_t>(r.selected_index)] <= r.H[1]);
  }
  SUBCASE("an absurd candidate aborts and is excluded") {
    const auto r = tune::grid_search(prob, ds, {1.0, 1e300}, gcfg);
    CHECK(r.failed[1]);
    CHECK_FALSE(r.failed[0]);
    CHECK(r.selected_lambda == 1.0);
  }
  SUBCASE("needs at least two candidates") {
    CHECK_THROWS_AS(tune::grid_search(prob, ds, {1.0}, gcfg), std::invalid_argument);
  }
}
