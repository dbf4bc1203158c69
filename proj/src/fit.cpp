#include "vibronlab/fit.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vibronlab::fit {

namespace {

double clipped_exp(double x) {
  return std::exp(std::clamp(x, -700.0, 700.0));
}

double sse_at(const std::vector<double>& t, const std::vector<double>& y,
              double a, double b) {
  double s = 0.0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double r = y[k] - std::cos(a * t[k]) * clipped_exp(-b * t[k]);
    s += r * r;
  }
  return s;
}

} // namespace

CosExpFit fit_cos_exp(const std::vector<double>& t, const std::vector<double>& y) {
  const std::size_t n = t.size();
  if (n != y.size() || n < 3)
    throw std::invalid_argument("fit_cos_exp: need matching t/y with >= 3 points");
  const double span = t.back() - t.front();
  if (span <= 0.0)
    throw std::invalid_argument("fit_cos_exp: t must span a positive interval");

  // Grid seed.  Frequency resolution ~1/span distinguishes neighboring SSE
  // basins; the ceiling is the sampling Nyquist rate.
  double dt_min = span;
  for (std::size_t k = 1; k < n; ++k) dt_min = std::min(dt_min, t[k] - t[k - 1]);
  const double a_max = (dt_min > 0.0) ? M_PI / dt_min : 2.0 * M_PI * n / span;
  const int n_a = std::min<int>(4 * static_cast<int>(n), 20000);
  const double b_grid[] = {0.0, 0.5 / span, 2.0 / span, 8.0 / span};

  double best_a = 0.0, best_b = 0.0, best_sse = -1.0;
  for (int ia = 0; ia <= n_a; ++ia) {
    const double a = a_max * ia / n_a;
    for (double b : b_grid) {
      const double s = sse_at(t, y, a, b);
      if (best_sse < 0.0 || s < best_sse) {
        best_sse = s;
        best_a = a;
        best_b = b;
      }
    }
  }

  // Damped Gauss-Newton refinement.
  double a = best_a, b = best_b, sse = best_sse;
  Eigen::MatrixXd jac(n, 2);
  Eigen::VectorXd resid(n);
  bool converged = false;
  for (int it = 0; it < 200; ++it) {
    for (std::size_t k = 0; k < n; ++k) {
      const double e = clipped_exp(-b * t[k]);
      const double c = std::cos(a * t[k]);
      resid[k] = y[k] - c * e;
      jac(k, 0) = -t[k] * std::sin(a * t[k]) * e; // d(model)/da
      jac(k, 1) = -t[k] * c * e;                  // d(model)/db
    }
    const Eigen::Vector2d step =
        (jac.transpose() * jac)
            .ldlt()
            .solve(jac.transpose() * resid);
    if (!step.allFinite()) break;

    double alpha = 1.0;
    double trial_sse = sse;
    double ta = a, tb = b;
    while (alpha > 1e-6) {
      ta = a + alpha * step[0];
      tb = b + alpha * step[1];
      trial_sse = sse_at(t, y, ta, tb);
      if (trial_sse < sse) break;
      alpha *= 0.5;
    }
    if (trial_sse >= sse) {
      converged = true; // no descent direction left
      break;
    }
    const double drop = sse - trial_sse;
    a = ta;
    b = tb;
    sse = trial_sse;
    if (drop < 1e-14 * std::max(sse, 1e-300)) {
      converged = true;
      break;
    }
  }

  CosExpFit out;
  out.freq = std::abs(a); // cos is even in a
  out.decay = b;
  out.sse = sse;
  out.converged = converged;

  // Linearized covariance (J^T J)^-1 * sse / (n - 2).
  if (n > 2) {
    for (std::size_t k = 0; k < n; ++k) {
      const double e = clipped_exp(-b * t[k]);
      jac(k, 0) = -t[k] * std::sin(a * t[k]) * e;
      jac(k, 1) = -t[k] * std::cos(a * t[k]) * e;
    }
    const Eigen::Matrix2d gram = jac.transpose() * jac;
    const Eigen::Matrix2d cov =
        gram.completeOrthogonalDecomposition().pseudoInverse() * sse /
        static_cast<double>(n - 2);
    out.freq_err = std::sqrt(std::max(0.0, cov(0, 0)));
    out.decay_err = std::sqrt(std::max(0.0, cov(1, 1)));
  }
  return out;
}

} // namespace vibronlab::fit
