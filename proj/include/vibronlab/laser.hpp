#pragma once

#include <complex>

namespace vibronlab::laser {

struct CoolingSpec {
  double rabi{0.0};       // rad/s, standing-wave Rabi frequency
  double detuning{0.0};   // rad/s, laser minus atomic frequency
  double linewidth{0.0};  // rad/s
  double lamb_dicke{0.0}; //
  double mode_freq{0.0};  // rad/s, mode the reservoir attaches to
};

struct ReservoirParams {
  std::complex<double> lambda_plus{};  // rad/s, heating coefficient
  std::complex<double> lambda_minus{}; // rad/s, cooling coefficient
  double gamma{0.0};   // rad/s, net cooling rate Re{conj(lambda_minus) - lambda_plus}
  double delta{0.0};   // rad/s, dissipative frequency shift
  double nbar{0.0};    // reservoir occupation, NaN when heating
  bool heating{false}; // gamma <= 0; unusable as a cold reservoir
};

struct DriveSpec {
  double dw_plus{0.0};  // rad/s, spin-symmetric onsite modulation depth
  double dw_minus{0.0}; // rad/s, spin-dependent part
  double freq{0.0};     // rad/s
  double phase{0.0};    // rad
  int site{0};          //
};

// Heating/cooling coefficients of a single laser-cooled ion:
// lambda_pm = (rabi eta / 2)^2 / (linewidth/2 + i(-detuning +- mode_freq)).
ReservoirParams doppler_coefficients(const CoolingSpec& spec);

// Onsite modulation constants of a spin-dependent traveling-wave drive:
// each spin branch shifts by -|rabi_s| eta^2.
DriveSpec drive_from_lasers(double rabi_up, double rabi_down, double lamb_dicke,
                            double freq, double phase, int site = 0);

// First-kind Bessel function, |order| <= 20, |x| <= 50, abs error < 1e-12.
double bessel_j(int order, double x);

// Sideband weight of a spin-conditioned periodic drive: J_1(zeta (1 + r s)).
double pat_tunneling_factor(double zeta, double r, int spin);

// Dimensionless spin-current coupling 2 zeta2 (J_0(pi) + J_2(pi)) / J_1(pi),
// equal to 4 zeta2 / pi by the Bessel recurrence.
double spin_current_coupling(double zeta2);

// eta = (2 pi / wavelength) sqrt(hbar / (2 m mode_freq)).
double lamb_dicke_parameter(double wavelength, double mass, double mode_freq);

} // namespace vibronlab::laser
