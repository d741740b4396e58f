#include "prnf/distributions.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "prnf/quadrature.hpp"

namespace prnf::eval {

TabulatedInverseCdf::TabulatedInverseCdf(const std::function<double(double)>& density, double lo,
                                         double hi, int cells) {
  if (!(lo < hi) || cells < 8) throw std::invalid_argument("bad inverse-CDF table request");
  const double h = (hi - lo) / cells;
  std::vector<double> xs(cells + 1), cum(cells + 1, 0.0);
  for (int i = 0; i <= cells; ++i) xs[i] = lo + i * h;
  for (int i = 0; i < cells; ++i) {
    const double m = quad::composite_simpson(density, xs[i], xs[i + 1], 8);
    cum[i + 1] = cum[i] + std::max(0.0, m);
  }
  total_ = cum[cells];
  if (!(total_ > 0.0) || !std::isfinite(total_)) {
    throw std::invalid_argument("density has no mass on the requested interval");
  }
  // keep strictly increasing CDF nodes only (zero-mass cells collapse)
  x_.push_back(xs[0]);
  c_.push_back(0.0);
  for (int i = 1; i <= cells; ++i) {
    const double c = cum[i] / total_;
    if (c > c_.back() + 1e-15) {
      x_.push_back(xs[i]);
      c_.push_back(c);
    }
  }
  c_.back() = 1.0;
  const std::size_t n = x_.size();
  if (n < 2) throw std::invalid_argument("degenerate CDF table");

  // Fritsch-Carlson monotone slopes for x(c)
  std::vector<double> sec(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) sec[i] = (x_[i + 1] - x_[i]) / (c_[i + 1] - c_[i]);
  slope_.assign(n, 0.0);
  slope_[0] = sec[0];
  slope_[n - 1] = sec[n - 2];
  for (std::size_t i = 1; i + 1 < n; ++i) {
    slope_[i] = (sec[i - 1] * sec[i] <= 0.0) ? 0.0 : 0.5 * (sec[i - 1] + sec[i]);
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (sec[i] == 0.0) {
      slope_[i] = slope_[i + 1] = 0.0;
      continue;
    }
    const double a = slope_[i] / sec[i], b = slope_[i + 1] / sec[i];
    const double s = a * a + b * b;
    if (s > 9.0) {
      const double t = 3.0 / std::sqrt(s);
      slope_[i] = t * a * sec[i];
      slope_[i + 1] = t * b * sec[i];
    }
  }
}

double TabulatedInverseCdf::sample(double u) const {
  u = std::min(1.0, std::max(0.0, u));
  const auto it = std::upper_bound(c_.begin(), c_.end(), u);
  std::size_t j = (it == c_.begin()) ? 0 : static_cast<std::size_t>(it - c_.begin()) - 1;
  if (j + 1 >= c_.size()) j = c_.size() - 2;
  const double dc = c_[j + 1] - c_[j];
  const double t = (u - c_[j]) / dc;
  const double h00 = (1 + 2 * t) * (1 - t) * (1 - t), h10 = t * (1 - t) * (1 - t);
  const double h01 = t * t * (3 - 2 * t), h11 = t * t * (t - 1);
  return h00 * x_[j] + h10 * dc * slope_[j] + h01 * x_[j + 1] + h11 * dc * slope_[j + 1];
}

namespace {

// construction-time check required of every density-carrying 1d/2d variant
void check_normalized_1d(const std::function<double(double)>& f, double lo, double hi,
                         const std::string& tag) {
  const double mass = quad::adaptive_simpson(f, lo, hi, 1e-10);
  if (std::abs(mass - 1.0) > 1e-6) {
    throw std::logic_error("density of '" + tag + "' integrates to " + std::to_string(mass));
  }
}

sde::Box box1(double lo, double hi) {
  sde::Box b;
  b.lo = Vector::Constant(1, lo);
  b.hi = Vector::Constant(1, hi);
  return b;
}

}  // namespace

InitialDistribution InitialDistribution::delta(const Vector& x) {
  InitialDistribution p;
  p.tag = "delta";
  p.d = static_cast<int>(x.size());
  p.support.lo = x;
  p.support.hi = x;
  p.draw = [x](RngStream&) { return x; };
  return p;
}

InitialDistribution InitialDistribution::bar(double a, double b) {
  if (!(a < b)) throw std::invalid_argument("bar needs a < b");
  InitialDistribution p;
  p.tag = "bar";
  p.d = 1;
  p.support = box1(a, b);
  const double inv = 1.0 / (b - a);
  p.density = [a, b, inv](const Vector& x) {
    return (x(0) >= a && x(0) <= b) ? inv : 0.0;
  };
  p.draw = [a, b](RngStream& rng) { return Vector::Constant(1, rng.uniform(a, b)); };
  return p;
}

InitialDistribution InitialDistribution::sin2(double L) {
  if (L <= 0.0) throw std::invalid_argument("sin2 needs L > 0");
  InitialDistribution p;
  p.tag = "sin2";
  p.d = 1;
  p.support = box1(0.0, L);
  const double norm = 2.0 / L;  // integral of sin^2(pi x/L) over [0,L] is L/2
  auto pdf1 = [L, norm](double x) {
    if (x < 0.0 || x > L) return 0.0;
    const double s = std::sin(M_PI * x / L);
    return norm * s * s;
  };
  check_normalized_1d(pdf1, 0.0, L, "sin2");
  auto table = std::make_shared<TabulatedInverseCdf>(pdf1, 0.0, L);
  p.density = [pdf1](const Vector& x) { return pdf1(x(0)); };
  p.draw = [table](RngStream& rng) { return Vector::Constant(1, table->sample(rng.uniform01())); };
  return p;
}

InitialDistribution InitialDistribution::ricker(double center, double width) {
  if (width <= 0.0) throw std::invalid_argument("ricker needs width > 0");
  InitialDistribution p;
  p.tag = "ricker";
  p.d = 1;
  const double lo = center - width, hi = center + width;  // positive part of 1-u^2
  p.support = box1(lo, hi);
  auto shape = [center, width](double x) {
    const double u = (x - center) / width;
    const double v = (1.0 - u * u) * std::exp(-0.5 * u * u);
    return std::max(0.0, v);
  };
  const double mass = quad::adaptive_simpson(shape, lo, hi, 1e-12);
  auto pdf1 = [shape, mass, lo, hi](double x) {
    if (x < lo || x > hi) return 0.0;
    return shape(x) / mass;
  };
  check_normalized_1d(pdf1, lo, hi, "ricker");
  auto table = std::make_shared<TabulatedInverseCdf>(pdf1, lo, hi);
  p.density = [pdf1](const Vector& x) { return pdf1(x(0)); };
  p.draw = [table](RngStream& rng) { return Vector::Constant(1, table->sample(rng.uniform01())); };
  return p;
}

InitialDistribution InitialDistribution::uniform(const sde::Box& box) {
  InitialDistribution p;
  p.tag = "uniform";
  p.d = box.dim();
  p.support = box;
  double vol = 1.0;
  for (int i = 0; i < box.dim(); ++i) vol *= box.width(i);
  const double inv = 1.0 / vol;
  p.density = [box, inv](const Vector& x) { return box.contains(x) ? inv : 0.0; };
  p.draw = [box](RngStream& rng) {
    Vector x(box.dim());
    for (int i = 0; i < box.dim(); ++i) x(i) = rng.uniform(box.lo(i), box.hi(i));
    return x;
  };
  return p;
}

InitialDistribution InitialDistribution::maxwellian(double T0_hat, double T_tilde, double p_min,
                                                    double p_max) {
  if (T0_hat <= 0.0 || T_tilde <= 0.0) throw std::invalid_argument("temperatures must be > 0");
  InitialDistribution p;
  p.tag = "maxwellian";
  p.d = 2;  // (p, xi)
  p.support.lo = Vector(2);
  p.support.hi = Vector(2);
  p.support.lo << p_min, -1.0;
  p.support.hi << p_max, 1.0;
  const double p0 = std::sqrt(T0_hat / T_tilde);
  auto shape = [p0](double q) { return q * q * std::exp(-(q / p0) * (q / p0)); };
  const double mass = quad::adaptive_simpson(shape, p_min, p_max, 1e-13);
  auto pdf_p = [shape, mass, p_min, p_max](double q) {
    if (q < p_min || q > p_max) return 0.0;
    return shape(q) / mass;
  };
  check_normalized_1d(pdf_p, p_min, p_max, "maxwellian");
  auto table = std::make_shared<TabulatedInverseCdf>(pdf_p, p_min, p_max);
  p.density = [pdf_p](const Vector& x) {
    const double xi = x(1);
    if (xi < -1.0 || xi > 1.0) return 0.0;
    return pdf_p(x(0)) * 0.5;
  };
  p.draw = [table](RngStream& rng) {
    Vector x(2);
    x(0) = table->sample(rng.uniform01());
    x(1) = rng.uniform(-1.0, 1.0);
    return x;
  };
  return p;
}

InitialDistribution InitialDistribution::gaussian_cloud(const Vector& center, const Vector& widths,
                                                        const sde::Box& box) {
  const int d = box.dim();
  if (center.size() != d || widths.size() != d) {
    throw std::invalid_argument("gaussian_cloud dimension mismatch");
  }
  InitialDistribution p;
  p.tag = "gaussian_cloud";
  p.d = d;
  p.support = box;
  // separable: per-axis truncated exp(-((x-c)/w)^2), each normalized exactly
  std::vector<std::shared_ptr<TabulatedInverseCdf>> tables;
  std::vector<double> axis_mass(d);
  for (int i = 0; i < d; ++i) {
    const double c = center(i), w = widths(i);
    auto axis = [c, w](double x) { return std::exp(-((x - c) / w) * ((x - c) / w)); };
    tables.push_back(std::make_shared<TabulatedInverseCdf>(axis, box.lo(i), box.hi(i)));
    axis_mass[i] = tables.back()->total_mass();
  }
  p.density = [center, widths, box, axis_mass](const Vector& x) {
    if (!box.contains(x)) return 0.0;
    double v = 1.0;
    for (int i = 0; i < box.dim(); ++i) {
      const double u = (x(i) - center(i)) / widths(i);
      v *= std::exp(-u * u) / axis_mass[i];
    }
    return v;
  };
  p.draw = [tables, d](RngStream& rng) {
    Vector x(d);
    for (int i = 0; i < d; ++i) x(i) = tables[static_cast<std::size_t>(i)]->sample(rng.uniform01());
    return x;
  };
  return p;
}

}  // namespace prnf::eval
