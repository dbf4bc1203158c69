#include <doctest.h>

#include <cmath>
#include <vector>

#include "vibronlab/constants.hpp"
#include "vibronlab/fit.hpp"

using namespace vibronlab;
using constants::two_pi;

namespace {

std::vector<double> grid(double t1, int n) {
  std::vector<double> t(n);
  for (int i = 0; i < n; ++i) t[i] = t1 * i / (n - 1);
  return t;
}

std::vector<double> damped_cos(const std::vector<double>& t, double a, double b) {
  std::vector<double> y(t.size());
  for (size_t i = 0; i < t.size(); ++i) y[i] = std::cos(a * t[i]) * std::exp(-b * t[i]);
  return y;
}

} // namespace

TEST_SUITE("fit") {

TEST_CASE("clean damped cosine is recovered to machine-level accuracy") {
  const double a = two_pi * 37.0, b = 120.0;
  const auto t = grid(0.05, 401);
  const auto res = fit::fit_cos_exp(t, damped_cos(t, a, b));
  REQUIRE(res.converged);
  CHECK(res.freq == doctest::Approx(a).epsilon(1e-9));
  CHECK(res.decay == doctest::Approx(b).epsilon(1e-7));
  CHECK(res.sse < 1e-18);
}

TEST_CASE("no starting point is needed across decades of frequency") {
  for (const double a : {two_pi * 4.0, two_pi * 80.0, two_pi * 400.0}) {
    const double b = 0.15 * a;
    const auto t = grid(8.0 / a * two_pi, 600);
    const auto res = fit::fit_cos_exp(t, damped_cos(t, a, b));
    REQUIRE(res.converged);
    CHECK(res.freq == doctest::Approx(a).epsilon(1e-6));
    CHECK(res.decay == doctest::Approx(b).epsilon(1e-4));
  }
}

TEST_CASE("deterministic perturbation shifts the fit only slightly") {
  const double a = two_pi * 25.0, b = 60.0;
  const auto t = grid(0.08, 501);
  auto y = damped_cos(t, a, b);
  for (size_t i = 0; i < y.size(); ++i) y[i] += 1e-4 * std::sin(173.0 * t[i]);
  const auto res = fit::fit_cos_exp(t, y);
  REQUIRE(res.converged);
  CHECK(res.freq == doctest::Approx(a).epsilon(1e-3));
  CHECK(res.decay == doctest::Approx(b).epsilon(1e-2));
  CHECK(res.freq_err > 0.0);
  CHECK(res.decay_err > 0.0);
}

TEST_CASE("pure cosine yields a near-zero decay") {
  const double a = two_pi * 12.0;
  const auto t = grid(0.5, 701);
  const auto res = fit::fit_cos_exp(t, damped_cos(t, a, 0.0));
  REQUIRE(res.converged);
  CHECK(res.freq == doctest::Approx(a).epsilon(1e-8));
  CHECK(std::abs(res.decay) < 1e-6 * a);
}

TEST_CASE("degenerate inputs are rejected") {
  CHECK_THROWS(fit::fit_cos_exp({}, {}));
  CHECK_THROWS(fit::fit_cos_exp({0.0, 1.0}, {1.0}));
  CHECK_THROWS(fit::fit_cos_exp({1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}));
}

} // TEST_SUITE
