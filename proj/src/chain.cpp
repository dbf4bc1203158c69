#include "vibronlab/chain.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace vibronlab::chain {

namespace {

// Dimensionless axial balance in units of the lightest ion: u = z / l with
// l = (e0^2 / (m0 wz^2))^(1/3).  Site i satisfies
//   kappa_i u_i = sum_{j != i} sign(u_i - u_j) / (u_i - u_j)^2.
Eigen::VectorXd force_residual(const Eigen::VectorXd& u,
                               const Eigen::VectorXd& kappa) {
  const int n = static_cast<int>(u.size());
  Eigen::VectorXd r = kappa.cwiseProduct(u);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = u[i] - u[j];
      r[i] -= (d > 0.0 ? 1.0 : -1.0) / (d * d);
    }
  return r;
}

Eigen::MatrixXd force_jacobian(const Eigen::VectorXd& u,
                               const Eigen::VectorXd& kappa) {
  const int n = static_cast<int>(u.size());
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    jac(i, i) = kappa[i];
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double d = std::abs(u[i] - u[j]);
      const double dd = 2.0 / (d * d * d);
      jac(i, i) += dd;
      jac(i, j) -= dd;
    }
  }
  return jac;
}

bool strictly_increasing(const Eigen::VectorXd& u) {
  for (int i = 0; i + 1 < u.size(); ++i)
    if (u[i + 1] <= u[i]) return false;
  return true;
}

} // namespace

ChainGeometry equilibrium_positions(const TrapConfig& trap,
                                    const std::vector<IonSpecies>& species,
                                    const std::vector<int>& species_of,
                                    double tol) {
  const int n = trap.n_sites;
  if (n < 2)
    throw std::invalid_argument("equilibrium_positions: need at least 2 sites");
  if (static_cast<int>(species_of.size()) != n)
    throw std::invalid_argument("equilibrium_positions: species_of length mismatch");
  for (int idx : species_of)
    if (idx < 0 || idx >= static_cast<int>(species.size()))
      throw std::invalid_argument("equilibrium_positions: species index out of range");

  ChainGeometry geo;
  geo.species = species;
  geo.species_of = species_of;
  geo.positions.resize(n);

  if (trap.kind == TrapKind::uniform_lattice) {
    if (trap.spacing <= 0.0)
      throw std::invalid_argument("equilibrium_positions: spacing must be positive");
    for (int i = 0; i < n; ++i)
      geo.positions[i] = (i - 0.5 * (n - 1)) * trap.spacing;
    return geo;
  }

  if (trap.axial_freq <= 0.0)
    throw std::invalid_argument("equilibrium_positions: paul_trap requires axial_freq > 0");

  Eigen::VectorXd masses(n);
  for (int i = 0; i < n; ++i) masses[i] = species[species_of[i]].mass;
  const double m0 = masses.minCoeff();
  const double wz = trap.axial_freq;
  const double scale = std::cbrt(constants::coulomb_coupling / (m0 * wz * wz));
  const Eigen::VectorXd kappa = masses / m0;

  Eigen::VectorXd u(n);
  const double spread = 2.0 / std::max(1.0, std::sqrt(static_cast<double>(n)));
  for (int i = 0; i < n; ++i) u[i] = (i - 0.5 * (n - 1)) * spread;

  constexpr int max_iter = 200;
  bool converged = false;
  double rnorm = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    const Eigen::VectorXd r = force_residual(u, kappa);
    rnorm = r.norm();
    if (rnorm < tol) {
      converged = true;
      break;
    }
    const Eigen::VectorXd du =
        force_jacobian(u, kappa).partialPivLu().solve(-r);
    // Damped update: keep the ordering and do not let the residual grow.
    double lam = 1.0;
    Eigen::VectorXd trial = u + du;
    while (lam > 1e-6 &&
           (!strictly_increasing(trial) ||
            force_residual(trial, kappa).norm() >= rnorm)) {
      lam *= 0.5;
      trial = u + lam * du;
    }
    u = trial;
  }
  if (!converged)
    throw std::runtime_error(
        "equilibrium_positions: no convergence after 200 iterations, residual " +
        std::to_string(rnorm));

  for (int i = 0; i < n; ++i) geo.positions[i] = u[i] * scale;
  return geo;
}

TightBinding tunneling_matrix(const ChainGeometry& geometry) {
  const int n = geometry.n_sites();
  TightBinding tb;
  tb.onsite = Eigen::VectorXd::Zero(n);
  tb.tunneling = Eigen::MatrixXd::Zero(n, n);
  tb.offsets = Eigen::VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    const IonSpecies& si = geometry.at(i);
    if (si.mass <= 0.0 || si.transverse_freq <= 0.0)
      throw std::invalid_argument("tunneling_matrix: species needs positive mass and frequency");
    for (int j = i + 1; j < n; ++j) {
      const IonSpecies& sj = geometry.at(j);
      const double d = std::abs(geometry.positions[i] - geometry.positions[j]);
      if (d == 0.0)
        throw std::invalid_argument("tunneling_matrix: coincident ion positions");
      const double jij =
          constants::coulomb_coupling /
          (2.0 *
           std::sqrt(si.mass * si.transverse_freq * sj.mass * sj.transverse_freq) *
           d * d * d);
      tb.tunneling(i, j) = jij;
      tb.tunneling(j, i) = jij;
      if (jij / (si.transverse_freq + sj.transverse_freq) > 0.05)
        tb.rwa_warning = true;
    }
  }
  for (int i = 0; i < n; ++i)
    tb.onsite[i] = geometry.at(i).transverse_freq - tb.tunneling.row(i).sum();
  return tb;
}

TightBinding apply_offsets(const TightBinding& tb, const Eigen::VectorXd& offsets) {
  if (offsets.size() != tb.onsite.size())
    throw std::invalid_argument("apply_offsets: offsets length mismatch");
  TightBinding out = tb;
  out.offsets += offsets;
  return out;
}

} // namespace vibronlab::chain
