#pragma once

#include <complex>
#include <optional>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "vibronlab/chain.hpp"
#include "vibronlab/constants.hpp"
#include "vibronlab/fit.hpp"

// Exact master-equation engine on truncated Fock x spin spaces: Lindblad
// evolution, steady states, zero-frequency noise via the regression theorem,
// Ramsey probes, and the driven three-site switch and current-probe dynamics.
namespace vibronlab::fock {

using SparseOp = Eigen::SparseMatrix<std::complex<double>>;

// One Hamiltonian term, optionally modulated as op * cos(freq t - phase).
struct HamiltonianTerm {
  SparseOp op;             // rad/s
  bool modulated{false};   //
  double freq{0.0};        // rad/s
  double phase{0.0};       // rad
};

// Two-operator dissipator: lambda (O1 rho O2 - O2 O1 rho) plus the conjugate
// term lambda* (O2^dag rho O1^dag - rho O1^dag O2^dag).
struct DissipatorTerm {
  std::complex<double> lambda; // rad/s
  SparseOp o1;                 //
  SparseOp o2;                 //
};

// Registered tunneling bond coeff a_i^dag a_j + h.c. between two modes.
struct BondTerm {
  std::complex<double> coeff; // rad/s
  int mode_i{0};              // creation side
  int mode_j{0};              // annihilation side
};

// Mode and spin registry plus operator factory.  Basis ordering is fixed:
// modes first, then spins, each in declaration order, first factor slowest.
// Spin basis is {down, up} with sz = diag(-1, +1).
class FockSystem {
public:
  static constexpr int max_dim = 4096; // guard rail on the Hilbert dimension

  int add_mode(int levels);
  int add_spin();

  int dim() const { return dim_; }
  int n_modes() const { return static_cast<int>(mode_levels_.size()); }
  int n_spins() const { return n_spins_; }
  int mode_levels(int mode) const;

  SparseOp id() const;
  SparseOp a(int mode) const;
  SparseOp ad(int mode) const;
  SparseOp n(int mode) const;
  SparseOp sz(int spin) const;
  SparseOp sp(int spin) const;
  SparseOp sm(int spin) const;
  SparseOp sx(int spin) const;

  void add_h(const SparseOp& term);
  void add_h_cos(const SparseOp& term, double freq, double phase = 0.0);
  void add_dissipator(std::complex<double> lambda, const SparseOp& o1,
                      const SparseOp& o2);
  // Standard jump channel rate (c rho c^dag - 1/2 {c^dag c, rho}).
  void add_jump(double rate, const SparseOp& c);
  // Thermal reservoir on one mode; occupation relaxes to nbar at rate 2 gamma.
  void add_thermal_contact(int mode, double gamma, double nbar);
  void add_bond(std::complex<double> coeff, int mode_i, int mode_j);

  const std::vector<HamiltonianTerm>& hamiltonian_terms() const { return hterms_; }
  const std::vector<DissipatorTerm>& dissipator_terms() const { return dterms_; }
  const std::vector<BondTerm>& bonds() const { return bonds_; }

  bool has_modulation() const;
  SparseOp hamiltonian(double t) const;
  // Total excitation number (mode occupations plus up-spins) per basis state.
  Eigen::VectorXi grading() const;
  // Largest full-rate magnitude over the registered dissipators, rad/s.
  double rate_scale() const;

private:
  SparseOp embed(int slot, const SparseOp& prim) const;
  void check_operator(const SparseOp& op) const;

  std::vector<int> mode_levels_;
  int n_spins_{0};
  int dim_{1};
  std::vector<HamiltonianTerm> hterms_;
  std::vector<DissipatorTerm> dterms_;
  std::vector<BondTerm> bonds_;
};

// Smallest truncation whose thermal tail weight stays below `tail`.
int thermal_nmax(double nbar, double tail = 1e-6);

std::complex<double> expectation(const SparseOp& op, const Eigen::MatrixXcd& rho);

struct DensityMatrix {
  Eigen::MatrixXcd rho; // Hermitian, PSD, unit trace
  double time{0.0};     // s
};

struct Trajectory {
  std::vector<double> times;            // s
  std::vector<Eigen::MatrixXcd> states; //
  double max_trace_drift{0.0};          // largest |tr - 1| before renormalization
};

Trajectory lindblad_evolve(const FockSystem& sys, const DensityMatrix& rho0,
                           const std::vector<double>& sample_times,
                           double rtol = 1e-9);

// Unique stationary density matrix.  Direct sparse solve (restricted to the
// excitation-conserving sector when the generator is graded) up to dim 1024,
// long-time integration beyond; stationarity residual below 1e-10 relative to
// the generator norm.
DensityMatrix steady_state_dm(const FockSystem& sys);

struct SpectralResult {
  double mean{0.0};            // <O>_ss
  double noise0{0.0};          // Re S_OO(0), one-sided, units of O^2 s
  std::optional<double> fano;  // S(0) / (2 <I>), currents only
};

struct RegressionOptions {
  bool use_time_path{false}; // force the two-time-integration path
  double t_max{0.0};         // s, 0 = automatic cap
  double rtol{1e-9};         //
};

// Mean and zero-frequency noise of an observable in the steady state.
SpectralResult regression_spectrum(const FockSystem& sys,
                                   const SparseOp& observable,
                                   const RegressionOptions& opts = {});

struct RamseyOptions {
  double rtol{1e-9};                            //
  double rate_scale{0.0};                       // rad/s, 0 = no weak-probe warning
  std::optional<Eigen::MatrixXcd> initial_rho;  // default: steady state
};

struct RamseyResult {
  std::vector<double> times;    // s
  std::vector<double> signal;   // <sigma^x> of the probe spin
  fit::CosExpFit fit;           //
  double mean{0.0};             // fitted frequency / coupling
  double noise0{0.0};           // fitted decay / coupling^2
  bool weak_probe_warning{false};
  bool fit_failed{false};
};

// Ramsey interferometry of a probe spin coupled as (coupling/2) sigma^z O.
// The probe starts in |+>; the sigma^z blocks decouple, so the coherence
// block is propagated directly without enlarging the Hilbert space.
RamseyResult ramsey_probe(const FockSystem& sys, double coupling,
                          const SparseOp& observable,
                          const std::vector<double>& t_grid,
                          const RamseyOptions& opts = {});

// Diagonal dot modulation amplitude * cos(freq t - phase), optionally scaled
// by the instantaneous spin sign.
struct DotDrive {
  double amplitude{0.0};   // rad/s
  double freq{0.0};        // rad/s
  double phase{0.0};       // rad
  bool spin_scaled{false}; //
};

// Driven chain restricted to the single-excitation sector; pi pulses flip the
// spin sign instantaneously.
struct SingleExcitationRun {
  Eigen::MatrixXcd h_static;        // rad/s
  int dot_site{1};                  //
  std::vector<DotDrive> drives;     //
  int spin{+1};                     // initial spin sign
  std::vector<double> pulse_times;  // s, strictly inside the time window
};

struct PopulationTrace {
  std::vector<double> times;                // s
  Eigen::MatrixXd populations;              // samples x sites
  std::vector<Eigen::VectorXcd> amplitudes; //
};

PopulationTrace evolve_single_excitation(const SingleExcitationRun& run,
                                         int start_site,
                                         const std::vector<double>& times,
                                         double rtol = 1e-9);

// Spin-gated single-vibron switch: resolved-sideband drive on the dot with
// lead offsets aligned at minus/plus the drive frequency.
struct SwitchDrive {
  Eigen::MatrixXd tunneling;       // rad/s, includes the direct lead-lead term
  Eigen::VectorXd onsite;          // rad/s, compensation and sideband shifts applied
  double nu{0.0};                  // rad/s drive frequency
  double zeta{0.0};                // modulation index
  double r{1.0};                   // spin-dependence contrast
  int spin{+1};                    // initial spin sign
  std::vector<double> pulse_times; // s
};

// Aligns the lead offsets with a dot drive at nu = drive_over_tunneling*J/2:
// the static spin shift on the dot is compensated and the leads sit at -nu
// and +nu, so the two first sidebands carry opposite signs.
SwitchDrive make_switch_drive(const chain::TightBinding& tb, double zeta,
                              double r, double drive_over_tunneling = 1e3);

struct SwitchResult {
  std::vector<double> times;      // s
  Eigen::MatrixXd pop_exact;      // samples x 3
  Eigen::MatrixXd pop_effective;  // samples x 3
  double max_population_gap{0.0}; //
  double tunneling_effective{0.0}; // rad/s at the initial spin sign
};

SwitchResult switch_scenario(const SwitchDrive& drive,
                             const std::vector<double>& times,
                             double rtol = 1e-9);

// Bichromatic dot drive parameters; the first tone fixes the imaginary
// tunneling and the second, weak tone couples the spin to the current.
struct BichromaticParams {
  double zeta1{constants::pi};        //
  double phi1{0.5 * constants::pi};   // rad
  double dw1_minus{0.0};              // rad/s
  double zeta2{0.05};                 //
  double phi2{0.0};                   // rad
  double dw2_plus{0.0};               // rad/s
};

struct CurrentProbe {
  Eigen::MatrixXcd h_eff;       // rad/s, purely imaginary tunneling
  Eigen::MatrixXcd current_in;  // rad/s, flux into the dot from the left
  Eigen::MatrixXcd current_out; // rad/s, flux from the dot to the right
  double lambda_tilde{0.0};     // spin-current coupling per unit current
  double j_pat{0.0};            // rad/s, effective tunneling magnitude
};

// Validates the bichromatic constraints and emits the effective terms for a
// Ramsey measurement of the symmetrized current.
CurrentProbe current_probe_setup(const Eigen::MatrixXd& tunneling,
                                 const BichromaticParams& params);

// Fano factor of the symmetrized current through `dot_mode`, with the in and
// out flux operators inferred from the registered bonds.
SpectralResult fano_factor(const FockSystem& sys, int dot_mode);

} // namespace vibronlab::fock
