#include <doctest.h>

#include <cmath>

#include "vibronlab/constants.hpp"
#include "vibronlab/laser.hpp"

using namespace vibronlab;
using namespace vibronlab::constants;

namespace {

laser::CoolingSpec red_spec(double detuning_over_linewidth,
                            double rabi_over_linewidth) {
  laser::CoolingSpec s;
  s.linewidth = linewidth_mg;
  s.detuning = detuning_over_linewidth * s.linewidth;
  s.rabi = rabi_over_linewidth * s.linewidth;
  s.lamb_dicke = laser::lamb_dicke_parameter(wavelength_mg, mass_mg24, two_pi * 5e6);
  s.mode_freq = two_pi * 5e6;
  return s;
}

} // namespace

TEST_SUITE("laser") {

TEST_CASE("red detuning cools, blue detuning heats") {
  const auto cold = laser::doppler_coefficients(red_spec(-0.6, 1.0));
  CHECK(cold.gamma > 0.0);
  CHECK_FALSE(cold.heating);
  CHECK(cold.nbar > 0.0);
  // reactive shift is negative for red detuning
  CHECK(cold.delta < 0.0);

  auto blue = red_spec(+0.6, 1.0);
  const auto hot = laser::doppler_coefficients(blue);
  CHECK(hot.heating);
  CHECK(hot.gamma <= 0.0);
}

TEST_CASE("coefficients follow the stated closed forms") {
  const auto spec = red_spec(-0.6, 1.0);
  const auto r = laser::doppler_coefficients(spec);
  const double amp = 0.25 * spec.rabi * spec.rabi * spec.lamb_dicke * spec.lamb_dicke;
  const std::complex<double> lp =
      amp / std::complex<double>(0.5 * spec.linewidth, -spec.detuning + spec.mode_freq);
  const std::complex<double> lm =
      amp / std::complex<double>(0.5 * spec.linewidth, -spec.detuning - spec.mode_freq);
  CHECK(std::abs(r.lambda_plus - lp) / std::abs(lp) < 1e-14);
  CHECK(std::abs(r.lambda_minus - lm) / std::abs(lm) < 1e-14);
  CHECK(r.gamma == doctest::Approx((std::conj(lm) - lp).real()).epsilon(1e-14));
  CHECK(r.delta == doctest::Approx(-(std::conj(lm) - lp).imag()).epsilon(1e-14));
  CHECK(r.nbar == doctest::Approx(lp.real() / r.gamma).epsilon(1e-14));
}

TEST_CASE("rates scale with laser power, occupation does not") {
  const auto weak = laser::doppler_coefficients(red_spec(-0.6, 0.5));
  const auto strong = laser::doppler_coefficients(red_spec(-0.6, 1.0));
  CHECK(strong.gamma / weak.gamma == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(strong.nbar == doctest::Approx(weak.nbar).epsilon(1e-12));
}

TEST_CASE("lamb dicke parameter matches the definition") {
  const double eta =
      laser::lamb_dicke_parameter(wavelength_mg, mass_mg24, two_pi * 5e6);
  const double expected = two_pi / wavelength_mg *
                          std::sqrt(hbar / (2.0 * mass_mg24 * two_pi * 5e6));
  CHECK(eta == doctest::Approx(expected).epsilon(1e-14));
  CHECK(eta < 0.3); // resolved regime for these defaults
}

TEST_CASE("bessel values and recurrence") {
  CHECK(laser::bessel_j(0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(laser::bessel_j(1, 0.0) == 0.0);
  // classic tabulated points
  CHECK(laser::bessel_j(0, 1.0) == doctest::Approx(0.7651976865579666).epsilon(1e-13));
  CHECK(laser::bessel_j(1, 1.0) == doctest::Approx(0.4400505857449335).epsilon(1e-13));
  CHECK(laser::bessel_j(2, 1.0) == doctest::Approx(0.1149034849319005).epsilon(1e-13));
  CHECK(laser::bessel_j(1, pi) == doctest::Approx(0.2846153431797528).epsilon(1e-12));
  // recurrence J_{n-1} + J_{n+1} = (2n/x) J_n across orders
  for (int n = 1; n <= 8; ++n)
    for (double x : {0.3, 1.7, 3.14159, 9.5}) {
      const double lhs = laser::bessel_j(n - 1, x) + laser::bessel_j(n + 1, x);
      CHECK(lhs == doctest::Approx(2.0 * n / x * laser::bessel_j(n, x))
                       .epsilon(1e-11));
    }
  // parity
  CHECK(laser::bessel_j(2, -1.3) == doctest::Approx(laser::bessel_j(2, 1.3)).epsilon(1e-13));
  CHECK(laser::bessel_j(3, -1.3) == doctest::Approx(-laser::bessel_j(3, 1.3)).epsilon(1e-13));
  CHECK_THROWS(laser::bessel_j(21, 1.0));
  CHECK_THROWS(laser::bessel_j(1, 51.0));
}

TEST_CASE("spin-conditioned sideband weight gates transfer") {
  const double zeta = 0.92059;
  // anti-aligned spin removes the modulation entirely
  CHECK(laser::pat_tunneling_factor(zeta, 1.0, -1) == 0.0);
  CHECK(laser::pat_tunneling_factor(zeta, 1.0, +1) ==
        doctest::Approx(0.581865224279).epsilon(1e-9));
  CHECK(laser::pat_tunneling_factor(zeta, 0.0, +1) ==
        doctest::Approx(laser::bessel_j(1, zeta)).epsilon(1e-13));
}

TEST_CASE("spin-current coupling equals 4 zeta / pi") {
  for (double z : {0.01, 0.05, 0.2})
    CHECK(laser::spin_current_coupling(z) ==
          doctest::Approx(4.0 * z / pi).epsilon(1e-12));
  // underlying identity J_0(pi) + J_2(pi) = (2/pi) J_1(pi)
  const double lhs = laser::bessel_j(0, pi) + laser::bessel_j(2, pi);
  CHECK(lhs == doctest::Approx(2.0 / pi * laser::bessel_j(1, pi)).epsilon(1e-12));
}

TEST_CASE("spin-dependent drive splits into symmetric and difference parts") {
  const double eta = 0.1;
  const auto d = laser::drive_from_lasers(2e6, 1e6, eta, two_pi * 1e5, 0.25, 2);
  // each branch shifts by -|rabi_s| eta^2
  const double up = -2e6 * eta * eta, down = -1e6 * eta * eta;
  CHECK(d.dw_plus == doctest::Approx(0.5 * (up + down)).epsilon(1e-12));
  CHECK(d.dw_minus == doctest::Approx(0.5 * (up - down)).epsilon(1e-12));
  CHECK(d.freq == doctest::Approx(two_pi * 1e5));
  CHECK(d.phase == doctest::Approx(0.25));
  CHECK(d.site == 2);
}

} // TEST_SUITE
