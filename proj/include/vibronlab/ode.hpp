#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace vibronlab::ode {

using State = Eigen::VectorXcd;
using Rhs = std::function<void(double, const State&, State&)>;

struct StepControl {
  double rtol{1e-9};          //
  double atol{1e-12};         //
  double initial_dt{0.0};     // s, 0 picks a heuristic
  double max_dt{0.0};         // s, 0 means unbounded
  // Applied to the accepted state after every step (e.g. re-Hermitization).
  std::function<void(State&)> post_step{};
};

namespace detail {

// Dormand-Prince 5(4) tableau.  FSAL: stage 7 of an accepted step is
// stage 1 of the next.
inline constexpr double c2 = 1.0 / 5.0, c3 = 3.0 / 10.0, c4 = 4.0 / 5.0,
                        c5 = 8.0 / 9.0;
inline constexpr double a21 = 1.0 / 5.0;
inline constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
inline constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
inline constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0,
                        a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
inline constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0,
                        a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                        a65 = -5103.0 / 18656.0;
inline constexpr double b1 = 35.0 / 384.0, b3 = 500.0 / 1113.0,
                        b4 = 125.0 / 192.0, b5 = -2187.0 / 6784.0,
                        b6 = 11.0 / 84.0;
inline constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0,
                        e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                        e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;

inline double error_norm(const State& err, const State& y0, const State& y1,
                         double rtol, double atol) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < err.size(); ++i) {
    const double scale =
        atol + rtol * std::max(std::abs(y0[i]), std::abs(y1[i]));
    const double r = std::abs(err[i]) / scale;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(err.size()));
}

} // namespace detail

// Integrates dy/dt = f(t, y) from t0 to t1 in place.  Adaptive DP5(4),
// steps never cross t1.  Throws on step-size underflow.
inline void integrate(const Rhs& f, State& y, double t0, double t1,
                      const StepControl& ctrl = {}) {
  using namespace detail;
  if (t1 <= t0) return;
  const Eigen::Index n = y.size();
  State k1(n), k2(n), k3(n), k4(n), k5(n), k6(n), k7(n), ytmp(n), ynew(n),
      err(n);

  f(t0, y, k1);
  double t = t0;
  double dt = ctrl.initial_dt;
  if (dt <= 0.0) dt = (t1 - t0) * 1e-4;
  if (ctrl.max_dt > 0.0) dt = std::min(dt, ctrl.max_dt);
  const double dt_floor = (t1 - t0) * 1e-14;

  while (t < t1) {
    dt = std::min(dt, t1 - t);
    ytmp = y + dt * (a21 * k1);
    f(t + c2 * dt, ytmp, k2);
    ytmp = y + dt * (a31 * k1 + a32 * k2);
    f(t + c3 * dt, ytmp, k3);
    ytmp = y + dt * (a41 * k1 + a42 * k2 + a43 * k3);
    f(t + c4 * dt, ytmp, k4);
    ytmp = y + dt * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4);
    f(t + c5 * dt, ytmp, k5);
    ytmp = y + dt * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5);
    f(t + dt, ytmp, k6);
    ynew = y + dt * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
    f(t + dt, ynew, k7);
    err = dt * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    const double en = error_norm(err, y, ynew, ctrl.rtol, ctrl.atol);
    if (en <= 1.0) {
      t += dt;
      y.swap(ynew);
      k1.swap(k7); // FSAL
      if (ctrl.post_step) {
        ctrl.post_step(y);
        f(t, y, k1); // post_step may have moved the state off the FSAL slope
      }
    }
    double factor = (en > 0.0) ? 0.9 * std::pow(en, -0.2) : 5.0;
    factor = std::clamp(factor, 0.2, 5.0);
    dt *= factor;
    if (ctrl.max_dt > 0.0) dt = std::min(dt, ctrl.max_dt);
    if (dt < dt_floor)
      throw std::runtime_error("ode: step size underflow at t = " +
                               std::to_string(t));
  }
}

// Same integrator, but lands exactly on each requested sample time and
// reports the state there.  Sample times must be non-decreasing and >= t0.
inline void integrate_sampled(
    const Rhs& f, State& y, double t0, const std::vector<double>& times,
    const std::function<void(double, const State&)>& on_sample,
    const StepControl& ctrl = {}) {
  double t = t0;
  StepControl local = ctrl;
  for (double ts : times) {
    if (ts < t)
      throw std::invalid_argument("ode: sample times must be non-decreasing");
    if (ts > t) {
      integrate(f, y, t, ts, local);
      t = ts;
    }
    on_sample(ts, y);
  }
}

} // namespace vibronlab::ode
