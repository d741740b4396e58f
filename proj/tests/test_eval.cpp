#include <doctest.h>

#include <cmath>

#include "prnf/eval.hpp"
#include "prnf/quadrature.hpp"
#include "test_helpers.hpp"

using namespace prnf;
using eval::InitialDistribution;
using eval::Matrix;
using eval::Vector;
using testutil::random_matrix;

namespace {

std::vector<double> draw_1d(const InitialDistribution& p0, std::int64_t n, std::uint64_t seed,
                            int dim = 0) {
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    RngStream rng(seed, static_cast<std::uint64_t>(i));
    out[static_cast<std::size_t>(i)] = p0.sample(rng)(dim);
  }
  return out;
}

double cdf_by_quadrature(const InitialDistribution& p0, double x) {
  const double lo = p0.support.lo(0);
  if (x <= lo) return 0.0;
  return quad::adaptive_simpson(
      [&](double u) { return p0.density(Vector::Constant(1, u)); }, lo,
      std::min(x, p0.support.hi(0)), 1e-10);
}

flow::PrnfModel constant_model(int d, const Vector& value) {
  auto m = flow::make_model(d, {4}, 0, flow::Standardizer::identity(d));
  for (auto& W : m.g1.W) W.setZero();
  m.g1.b[1] = value;
  return m;
}

// x̂t = x0: single-layer g1 picking the z0 slot
flow::PrnfModel passthrough_model(int d) {
  flow::PrnfModel m;
  m.d = d;
  m.norm = flow::Standardizer::identity(d);
  m.h1 = nn::init({2 * d, d}, 0);
  m.g1 = nn::init({2 * d, d}, 0);
  m.g1.W[0].setZero();
  m.g1.W[0].leftCols(d) = Matrix::Identity(d, d);
  return m;
}

}  // namespace

TEST_CASE("initial distribution samplers pass KS tests at alpha = 0.01") {
  const std::int64_t n = 100000;
  const double crit = testutil::kKs99 / std::sqrt(static_cast<double>(n));

  SUBCASE("bar") {
    const auto p0 = InitialDistribution::bar(1.5, 3.5);
    const double d = testutil::ks_statistic(
        draw_1d(p0, n, 1), [](double x) { return std::clamp((x - 1.5) / 2.0, 0.0, 1.0); });
    CHECK(d < crit);
  }
  SUBCASE("sin2") {
    const auto p0 = InitialDistribution::sin2(5.0);
    const double d = testutil::ks_statistic(draw_1d(p0, n, 2), [](double x) {
      if (x <= 0.0) return 0.0;
      if (x >= 5.0) return 1.0;
      return x / 5.0 - std::sin(2.0 * M_PI * x / 5.0) / (2.0 * M_PI);
    });
    CHECK(d < crit);
  }
  SUBCASE("ricker") {
    const auto p0 = InitialDistribution::ricker(2.5, 0.8);
    const double d = testutil::ks_statistic(
        draw_1d(p0, n, 3), [&](double x) { return cdf_by_quadrature(p0, x); });
    CHECK(d < crit);
  }
  SUBCASE("maxwellian momentum marginal") {
    const auto p0 = InitialDistribution::maxwellian(5.0, 3.0, 0.5, 5.0);
    const double norm = quad::adaptive_simpson(
        [&](double p) { return p * p * std::exp(-p * p * 3.0 / 5.0); }, 0.5, 5.0, 1e-12);
    const double d = testutil::ks_statistic(draw_1d(p0, n, 4, 0), [&](double x) {
      if (x <= 0.5) return 0.0;
      if (x >= 5.0) return 1.0;
      return quad::adaptive_simpson(
                 [&](double p) { return p * p * std::exp(-p * p * 3.0 / 5.0); }, 0.5, x, 1e-12) /
             norm;
    });
    CHECK(d < crit);
    // xi marginal is uniform on (-1, 1)
    const double dxi = testutil::ks_statistic(
        draw_1d(p0, n, 5, 1), [](double x) { return std::clamp((x + 1.0) / 2.0, 0.0, 1.0); });
    CHECK(dxi < crit);
  }
  SUBCASE("delta pins every draw") {
    const auto p0 = InitialDistribution::delta(Vector::Constant(1, 2.5));
    for (double v : draw_1d(p0, 100, 6)) CHECK(v == 2.5);
  }
}

TEST_CASE("gaussian cloud sampler") {
  sde::Box box;
  box.lo = Vector::Zero(3);
  box.hi = Vector::Constant(3, 2.0 * M_PI);
  Vector center(3), widths(3);
  center << M_PI / 2.0, M_PI, M_PI;
  widths << M_PI / 3.0, M_PI / 5.0, M_PI / 4.0;
  const auto p0 = InitialDistribution::gaussian_cloud(center, widths, box);

  SUBCASE("density integrates to one over the box") {
    // separable integrand: iterate 1d quadratures of the joint density
    auto slice = [&](int axis, double x) {
      Vector v = center;
      v(axis) = x;
      return p0.density(v);
    };
    double total = 1.0;
    for (int axis = 0; axis < 3; ++axis) {
      total *= quad::adaptive_simpson([&](double x) { return slice(axis, x); }, 0.0, 2.0 * M_PI,
                                      1e-11);
    }
    // each 1d slice carries the other two axes' center factors
    total /= p0.density(center) * p0.density(center);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-8));
    CHECK(p0.density(box.hi + Vector::Ones(3)) == 0.0);
  }
  SUBCASE("per-axis KS against the truncated-normal CDF") {
    const std::int64_t n = 20000;
    const double crit = testutil::kKs99 / std::sqrt(static_cast<double>(n));
    for (int axis = 0; axis < 3; ++axis) {
      auto pdf = [&](double x) {
        const double u = (x - center(axis)) / widths(axis);
        return std::exp(-u * u);
      };
      const double mass = quad::adaptive_simpson(pdf, 0.0, 2.0 * M_PI, 1e-11);
      const double d = testutil::ks_statistic(
          draw_1d(p0, n, 7 + static_cast<std::uint64_t>(axis), axis), [&](double x) {
            if (x <= 0.0) return 0.0;
            if (x >= 2.0 * M_PI) return 1.0;
            return quad::adaptive_simpson(pdf, 0.0, x, 1e-10) / mass;
          });
      CHECK(d < crit);
    }
  }
  SUBCASE("all samples stay in the box") {
    for (std::int64_t i = 0; i < 1000; ++i) {
      RngStream rng(8, static_cast<std::uint64_t>(i));
      CHECK(box.contains(p0.sample(rng)));
    }
  }
}

TEST_CASE("qoi_estimate") {
  SUBCASE("constant integrand gives value 1 with zero standard error") {
    const auto model = constant_model(1, Vector::Constant(1, 0.3));
    const auto p0 = InitialDistribution::bar(0.0, 1.0);
    eval::QoiSpec spec;
    spec.integrand = [](const Vector&) { return 1.0; };
    spec.m_init = 200;
    spec.n_cond = 4;
    const auto est = eval::qoi_estimate(model, p0, spec, 1);
    CHECK(est.value == 1.0);
    CHECK(est.std_error == 0.0);
  }
  SUBCASE("indicator under delta initial law with pass-through dynamics is 0 or 1") {
    const auto model = passthrough_model(1);
    eval::QoiSpec lower_half;
    lower_half.integrand = [](const Vector& x) { return x(0) < 2.5 ? 1.0 : 0.0; };
    lower_half.m_init = 50;
    lower_half.n_cond = 2;
    const auto low = eval::qoi_estimate(
        model, InitialDistribution::delta(Vector::Constant(1, 1.0)), lower_half, 2);
    CHECK(low.value == 1.0);
    const auto high = eval::qoi_estimate(
        model, InitialDistribution::delta(Vector::Constant(1, 4.0)), lower_half, 2);
    CHECK(high.value == 0.0);
  }
  SUBCASE("estimates are linear in the integrand on a fixed sample set") {
    auto model = flow::make_model(1, {6}, 9, flow::Standardizer::identity(1));
    const auto p0 = InitialDistribution::bar(0.0, 1.0);
    eval::QoiSpec f, g, combo;
    f.integrand = [](const Vector& x) { return x(0); };
    g.integrand = [](const Vector& x) { return std::sin(x(0)); };
    combo.integrand = [](const Vector& x) { return 2.0 * x(0) - 3.0 * std::sin(x(0)); };
    f.m_init = g.m_init = combo.m_init = 300;
    const auto ef = eval::qoi_estimate(model, p0, f, 5);
    const auto eg = eval::qoi_estimate(model, p0, g, 5);
    const auto ec = eval::qoi_estimate(model, p0, combo, 5);
    CHECK(ec.value == doctest::Approx(2.0 * ef.value - 3.0 * eg.value).epsilon(1e-12));
  }
  SUBCASE("invalid spec is rejected") {
    const auto model = constant_model(1, Vector::Zero(1));
    eval::QoiSpec spec;
    spec.integrand = [](const Vector&) { return 1.0; };
    spec.m_init = 0;
    CHECK_THROWS_AS(
        eval::qoi_estimate(model, InitialDistribution::bar(0.0, 1.0), spec, 0),
        std::invalid_argument);
  }
}

TEST_CASE("mc_reference") {
  SUBCASE("constant integrand is exactly 1") {
    const auto prob = sde::problem_catalog("sqrt1d");
    eval::QoiSpec spec;
    spec.integrand = [](const Vector&) { return 1.0; };
    spec.m_init = 100;
    const auto est = eval::mc_reference(prob, InitialDistribution::bar(1.0, 2.0), spec, {1e-2, 3});
    CHECK(est.value == 1.0);
  }
  SUBCASE("sqrt1d mean from a delta start matches the analytic value within 3 SE") {
    const auto prob = sde::problem_catalog("sqrt1d");
    eval::QoiSpec spec;
    spec.integrand = [](const Vector& x) { return x(0); };
    spec.m_init = 20000;
    const auto est = eval::mc_reference(prob, InitialDistribution::delta(Vector::Constant(1, 2.0)),
                                        spec, {5e-4, 11});
    const double exact = (std::sqrt(2.0) + 0.1) * (std::sqrt(2.0) + 0.1) + 0.1;
    CHECK(std::abs(est.value - exact) < 3.0 * est.std_error);
  }
  SUBCASE("zero horizon leaves the initial statistics unchanged") {
    auto prob = sde::problem_catalog("runaway2d");
    prob.horizon = 0.0;  // no integration steps
    const auto p0 = InitialDistribution::maxwellian(5.0, 3.0, 0.5, 5.0);
    eval::QoiSpec spec;
    spec.integrand = [](const Vector& x) { return x(0); };
    spec.m_init = 500;
    const auto est = eval::mc_reference(prob, p0, spec, {1e-3, 17});
    double direct = 0.0;
    for (std::int64_t i = 0; i < 500; ++i) {
      RngStream rng(17, static_cast<std::uint64_t>(i));
      direct += p0.sample(rng)(0);
    }
    CHECK(est.value == doctest::Approx(direct / 500.0).epsilon(1e-15));
  }
}

TEST_CASE("kl divergence") {
  SUBCASE("KDE of the exact density itself is close to zero") {
    std::vector<double> samples(100000);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      RngStream rng(41, i);
      samples[i] = rng.normal();
    }
    const auto grid = eval::linspace(-6.0, 6.0, 600);
    const double kl = eval::kl_divergence_1d(
        [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }, samples, grid);
    CHECK(kl >= 0.0);
    CHECK(kl < 0.01);
  }
  SUBCASE("KDE against itself is zero") {
    std::vector<double> samples(5000);
    for (std::size_t i = 0; i < samples.size(); ++i) {
      RngStream rng(43, i);
      samples[i] = rng.normal();
    }
    Matrix pts(1, static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) pts(0, static_cast<Eigen::Index>(i)) = samples[i];
    const auto kde = tune::kde_fit(pts);
    const auto grid = eval::linspace(-6.0, 6.0, 400);
    const double kl = eval::kl_divergence_1d(
        [&](double x) { return kde.pdf(Vector::Constant(1, x)); }, samples, grid);
    CHECK(kl == doctest::Approx(0.0).epsilon(1e-10));
  }
  SUBCASE("N(0,1) against sampled N(0.5,1) reproduces the closed-form 0.125") {
    // the KDE smoothing bias scales like h^2 = M^{-2/5}: 2e6 samples keep it
    // inside the 1e-3 budget
    const std::int64_t n = 2000000;
    std::vector<double> samples(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      RngStream rng(45, static_cast<std::uint64_t>(i));
      samples[static_cast<std::size_t>(i)] = 0.5 + rng.normal();
    }
    const auto grid = eval::linspace(-8.0, 8.5, 500);
    const double kl = eval::kl_divergence_1d(
        [](double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI); }, samples, grid);
    CHECK(std::abs(kl - 0.125) < 1e-3);
  }
  SUBCASE("marginal_kl on identical sample sets vanishes, empty dims give empty output") {
    RngStream rng(47, 0);
    const Matrix samples = random_matrix(3, 4000, rng);
    const Vector kls = eval::marginal_kl(samples, samples, {0, 1, 2});
    for (int i = 0; i < 3; ++i) {
      CHECK(kls(i) >= 0.0);
      CHECK(kls(i) < 0.01);
    }
    CHECK(eval::marginal_kl(samples, samples, {}).size() == 0);
  }
  SUBCASE("same law, independent draws stay below 0.01") {
    Matrix a(1, 50000), b(1, 50000);
    for (Eigen::Index i = 0; i < 50000; ++i) {
      RngStream r1(51, static_cast<std::uint64_t>(i)), r2(52, static_cast<std::uint64_t>(i));
      a(0, i) = r1.normal();
      b(0, i) = r2.normal();
    }
    const Vector kls = eval::marginal_kl(a, b, {0});
    CHECK(kls(0) < 0.01);
  }
}

TEST_CASE("sqrt1d terminal density") {
  SUBCASE("delta initial law reduces to the analytic kernel") {
    const auto p0 = InitialDistribution::delta(Vector::Constant(1, 2.0));
    CHECK(eval::sqrt1d_terminal_density(1.7, p0, 0.1) ==
          doctest::Approx(sde::analytic_pdf_1d(1.7, 2.0, 0.1)).epsilon(1e-14));
  }
  SUBCASE("bar convolution integrates to one") {
    const auto p0 = InitialDistribution::bar(1.5, 3.5);
    const double mass = quad::composite_simpson(
        [&](double x) { return x <= 0.0 ? 0.0 : eval::sqrt1d_terminal_density(x, p0, 0.1); },
        0.0, 25.0, 3000);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("runaway fraction and target density edge cases") {
  SUBCASE("thresholds at the domain ends") {
    const auto model = constant_model(2, (Vector(2) << 2.0, 0.0).finished());
    CHECK(eval::runaway_fraction(model, 5.0, 5.0, 500, 1) == 0.0);   // p* = p_max
    CHECK(eval::runaway_fraction(model, 5.0, 0.5, 500, 1) == 1.0);   // p* = p_min
    CHECK_THROWS_AS(eval::runaway_fraction(model, 5.0, 9.0, 10, 1), std::invalid_argument);
  }
  SUBCASE("all-space and empty target regions") {
    const auto model = constant_model(3, (Vector(3) << 1.0, 1.0, 1.0).finished());
    const double all = eval::target_density(model, M_PI, M_PI, {-1e9, 1e9}, {-1e9, 1e9}, 200, 2);
    CHECK(all == 1.0);
    const double none = eval::target_density(model, M_PI, M_PI, {-5.0, -5.0}, {-5.0, -5.0}, 200, 2);
    CHECK(none == 0.0);
  }
}
