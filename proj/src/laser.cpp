#include "vibronlab/laser.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "vibronlab/constants.hpp"

namespace vibronlab::laser {

ReservoirParams doppler_coefficients(const CoolingSpec& spec) {
  if (spec.linewidth <= 0.0)
    throw std::invalid_argument("doppler_coefficients: linewidth must be positive");
  if (spec.rabi < 0.0)
    throw std::invalid_argument("doppler_coefficients: rabi must be nonnegative");
  if (spec.lamb_dicke <= 0.0 || spec.lamb_dicke >= 1.0)
    throw std::invalid_argument("doppler_coefficients: lamb_dicke must be in (0, 1)");

  const double amp = 0.5 * spec.rabi * spec.lamb_dicke;
  const std::complex<double> num(amp * amp, 0.0);
  ReservoirParams out;
  out.lambda_plus =
      num / std::complex<double>(0.5 * spec.linewidth, -spec.detuning + spec.mode_freq);
  out.lambda_minus =
      num / std::complex<double>(0.5 * spec.linewidth, -spec.detuning - spec.mode_freq);
  const std::complex<double> net = std::conj(out.lambda_minus) - out.lambda_plus;
  out.gamma = net.real();
  out.delta = -net.imag();
  out.heating = !(out.gamma > 0.0);
  out.nbar = out.heating ? std::numeric_limits<double>::quiet_NaN()
                         : out.lambda_plus.real() / out.gamma;
  return out;
}

DriveSpec drive_from_lasers(double rabi_up, double rabi_down, double lamb_dicke,
                            double freq, double phase, int site) {
  if (lamb_dicke <= 0.0 || lamb_dicke >= 1.0)
    throw std::invalid_argument("drive_from_lasers: lamb_dicke must be in (0, 1)");
  const double dw_up = -std::abs(rabi_up) * lamb_dicke * lamb_dicke;
  const double dw_down = -std::abs(rabi_down) * lamb_dicke * lamb_dicke;
  DriveSpec out;
  out.dw_plus = 0.5 * (dw_up + dw_down);
  out.dw_minus = 0.5 * (dw_up - dw_down);
  out.freq = freq;
  out.phase = phase;
  out.site = site;
  return out;
}

double bessel_j(int order, double x) {
  if (std::abs(order) > 20)
    throw std::invalid_argument("bessel_j: |order| must be <= 20");
  if (std::abs(x) > 50.0)
    throw std::invalid_argument("bessel_j: |x| must be <= 50");

  int n = order;
  double sign = 1.0;
  if (x < 0.0) {  // J_n(-x) = (-1)^n J_n(x)
    x = -x;
    if (n % 2 != 0) sign = -sign;
  }
  if (n < 0) {  // J_{-n}(x) = (-1)^n J_n(x)
    n = -n;
    if (n % 2 != 0) sign = -sign;
  }
  if (x == 0.0) return (n == 0) ? sign : 0.0;

  // Miller's downward recurrence with normalization J_0 + 2 sum J_{2k} = 1.
  int start = std::max(n, static_cast<int>(std::ceil(x))) + 48;
  if (start % 2 != 0) ++start;
  double upper = 0.0;    // J_{k+1}, unnormalized
  double cur = 1e-30;    // J_k
  double norm = 0.0;
  double jn = (n == start) ? cur : 0.0;
  for (int k = start; k >= 1; --k) {
    const double lower = (2.0 * k / x) * cur - upper;
    upper = cur;
    cur = lower;
    const int idx = k - 1;
    if (idx == n) jn = cur;
    if (idx == 0)
      norm += cur;
    else if (idx % 2 == 0)
      norm += 2.0 * cur;
    if (std::abs(cur) > 1e250) {
      cur /= 1e250;
      upper /= 1e250;
      norm /= 1e250;
      jn /= 1e250;
    }
  }
  return sign * jn / norm;
}

double pat_tunneling_factor(double zeta, double r, int spin) {
  if (zeta < 0.0)
    throw std::invalid_argument("pat_tunneling_factor: zeta must be nonnegative");
  return bessel_j(1, zeta * (1.0 + r * static_cast<double>(spin)));
}

double spin_current_coupling(double zeta2) {
  if (zeta2 < 0.0)
    throw std::invalid_argument("spin_current_coupling: zeta2 must be nonnegative");
  const double pi = constants::pi;
  return 2.0 * zeta2 * (bessel_j(0, pi) + bessel_j(2, pi)) / bessel_j(1, pi);
}

double lamb_dicke_parameter(double wavelength, double mass, double mode_freq) {
  if (wavelength <= 0.0 || mass <= 0.0 || mode_freq <= 0.0)
    throw std::invalid_argument("lamb_dicke_parameter: arguments must be positive");
  return (constants::two_pi / wavelength) *
         std::sqrt(constants::hbar / (2.0 * mass * mode_freq));
}

} // namespace vibronlab::laser
