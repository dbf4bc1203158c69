#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <map>
#include <vector>

#include "vibronlab/chain.hpp"
#include "vibronlab/laser.hpp"

namespace vibronlab::gaussian {

enum class GeneratorKind { edge, bulk };

// Closed ODE for the correlators C_ij = <a_i^dag a_j>:
//   dC/dt = i[jmat, C] - (wmat C + C conj(wmat)) - dmat o C + kmat
// (o is the elementwise product).  jmat is the transpose of the Hamiltonian
// coupling matrix plus the onsite diagonal; transposing makes no difference
// for real symmetric tunnelings.
struct GaussianGenerator {
  Eigen::MatrixXcd jmat; // rad/s, Hermitian
  Eigen::MatrixXcd wmat; // rad/s, damping
  Eigen::MatrixXcd kmat; // rad/s, pumping, Hermitian PSD
  Eigen::MatrixXd dmat;  // rad/s, dephasing, symmetric with zero diagonal
  GeneratorKind kind{GeneratorKind::edge};
  std::vector<int> site_of;          // generator row -> chain site index
  bool weak_coupling_warning{false}; // bulk only: 2 gamma < 10 max|J|

  int dim() const { return static_cast<int>(jmat.rows()); }
};

struct CorrelatorState {
  Eigen::MatrixXcd cmat; // C_ij = <a_i^dag a_j>, Hermitian PSD
  double time{0.0};      // s
};

struct NoiseModel {
  double gamma_d{0.0}; // rad/s, dephasing rate
  double xi_c{0.0};    // m, noise correlation length
  double tau_c{0.0};   // s, noise correlation time (metadata; only the
                       // zero-frequency strength enters the dynamics)
};

enum class DisorderMode { exhaustive, monte_carlo };

struct DisorderModel {
  double dw_minus{0.0};              // rad/s, full binary splitting
  std::vector<int> affected_sites;   //
  DisorderMode mode{DisorderMode::exhaustive};
  int n_samples{1};                  // monte_carlo only
  std::uint64_t seed{0};             //
};

struct DisorderStats {
  Eigen::VectorXd mean; // steady occupations averaged over draws
  Eigen::VectorXd dev;  // standard deviation over draws (population for
                        // exhaustive, n-1 normalized for monte_carlo)
  int n_samples{0};
};

struct SiteCurrents {
  Eigen::VectorXd in;  // vibrons/s entering from lower-index sites
  Eigen::VectorXd out; // vibrons/s leaving toward higher-index sites
};

struct TheoryPrediction {
  double n_ss{0.0};        // steady bulk occupation
  double current{0.0};     // vibrons/s through the wire
  double gamma_left{0.0};  // 1/s, injection rate of the left reservoir
  double gamma_right{0.0}; // 1/s
  double noise0{0.0};      // s, zero-frequency occupation noise (n^2+n)/(gL+gR)
};

// Exact reservoir model: damping and pumping only on the cooled sites.
GaussianGenerator build_edge_generator(
    const chain::TightBinding& tb,
    const std::map<int, laser::ReservoirParams>& reservoirs);

// Adiabatic elimination of the strongly cooled edge sites: the remaining
// sites acquire renormalized tunnelings/frequencies and dense damping and
// pumping matrices.  Reservoirs must sit at the chain edges.
GaussianGenerator build_bulk_generator(
    const chain::TightBinding& tb,
    const std::map<int, laser::ReservoirParams>& reservoirs);

// dmat_ij = 2 gamma_d (1 - exp(-|z_i - z_j| / xi_c)), zero diagonal.
Eigen::MatrixXd dephasing_matrix(const chain::ChainGeometry& geometry,
                                 const NoiseModel& noise);

// Integrates the correlator ODE, reporting the state at each sample time.
// Hermiticity is restored after every accepted step.
std::vector<CorrelatorState> evolve(const GaussianGenerator& gen,
                                    const CorrelatorState& c0,
                                    const std::vector<double>& sample_times,
                                    double rtol = 1e-9);

// Fixed point of the correlator ODE by a dense vectorized linear solve.
// The homogeneous part is verified Hurwitz first; sites with no damping
// path are reported by name.
CorrelatorState steady_state(const GaussianGenerator& gen);

// Bond-resolved vibron flow per site, split into the flux arriving from
// lower-index sites and the flux leaving toward higher-index sites.
SiteCurrents site_currents(const GaussianGenerator& gen,
                           const CorrelatorState& c);

// Closed-form wire predictions from the reservoir injection rates:
//   n_ss = (gL nL + gR nR)/(gL + gR),  I = gL gR (nL - nR)/(gL + gR).
// The rates are the lead-adjacent diagonals of the elimination matrices;
// probe_site >= 0 evaluates both at that site instead.
TheoryPrediction theory_predictions(
    const chain::TightBinding& tb,
    const std::map<int, laser::ReservoirParams>& reservoirs,
    int probe_site = -1);

// Steady occupations averaged over binary onsite disorder.  The builder
// receives the per-site shift vector and returns the generator to solve.
// Monte-carlo draws are fixed per sample index, and the reduction is
// pairwise, so results do not depend on the thread count.
DisorderStats disorder_average(
    const std::function<GaussianGenerator(const Eigen::VectorXd&)>& gen_builder,
    int n_sites, const DisorderModel& model, int n_threads = 1);

} // namespace vibronlab::gaussian
