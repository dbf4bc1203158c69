#pragma once

#include <Eigen/Dense>
#include <vector>

#include "vibronlab/constants.hpp"

namespace vibronlab::chain {

enum class IonRole { sigma, tau, kappa };

struct IonSpecies {
  IonRole label{IonRole::sigma};  // sigma: wire, tau: cooled edge, kappa: probe/dot
  double mass{0.0};               // kg
  double transverse_freq{0.0};    // rad/s
  double linewidth{0.0};          // rad/s, cooling transition (tau only)
};

enum class TrapKind { paul_trap, uniform_lattice };

struct TrapConfig {
  TrapKind kind{TrapKind::paul_trap}; //
  double axial_freq{0.0};             // rad/s, paul_trap only
  double spacing{0.0};                // m, uniform_lattice only
  int n_sites{0};                     //
};

struct ChainGeometry {
  std::vector<double> positions;   // m, strictly increasing
  std::vector<int> species_of;     // site -> entry in species
  std::vector<IonSpecies> species; //

  int n_sites() const { return static_cast<int>(positions.size()); }
  const IonSpecies& at(int site) const { return species[species_of[site]]; }
};

struct TightBinding {
  Eigen::VectorXd onsite;    // rad/s, bare transverse frequency plus Coulomb renormalization
  Eigen::MatrixXd tunneling; // rad/s, symmetric, zero diagonal, all entries positive
  Eigen::VectorXd offsets;   // rad/s, accumulated static per-site shifts
  bool rwa_warning{false};   // set when some |J| is not small vs the carrier frequencies

  int n_sites() const { return static_cast<int>(onsite.size()); }
  // Effective site frequencies entering the dynamics.
  Eigen::VectorXd effective_onsite() const { return onsite + offsets; }
};

// Equilibrium positions along the trap axis.  paul_trap solves the axial
// force balance (each ion feels its own m omega_z^2) by damped Newton
// iteration; uniform_lattice places sites on a regular grid centered at 0.
ChainGeometry equilibrium_positions(const TrapConfig& trap,
                                    const std::vector<IonSpecies>& species,
                                    const std::vector<int>& species_of,
                                    double tol = 1e-13);

// Hopping matrix J_ij = e0^2 / (2 sqrt(m_i w_i m_j w_j) |z_i - z_j|^3) and
// renormalized on-site frequencies w_i - sum_j J_ij.
TightBinding tunneling_matrix(const ChainGeometry& geometry);

// Adds static per-site frequency shifts; tunneling untouched.
TightBinding apply_offsets(const TightBinding& tb, const Eigen::VectorXd& offsets);

} // namespace vibronlab::chain
