#pragma once

#include <vector>

namespace vibronlab::fit {

struct CosExpFit {
  double freq{0.0};      // rad/s, a in cos(a t) exp(-b t)
  double decay{0.0};     // 1/s, b
  double freq_err{0.0};  // 1-sigma from the linearized covariance
  double decay_err{0.0}; //
  double sse{0.0};       // sum of squared residuals at the optimum
  bool converged{false}; //
};

// Least-squares fit of y ~= cos(a t) exp(-b t).  A coarse grid over
// frequency and decay seeds a damped Gauss-Newton refinement, so the fit
// does not depend on a user-provided starting point.
CosExpFit fit_cos_exp(const std::vector<double>& t, const std::vector<double>& y);

} // namespace vibronlab::fit
