#include <doctest.h>

#include <cmath>
#include <map>

#include "vibronlab/constants.hpp"
#include "vibronlab/experiments.hpp"
#include "vibronlab/gaussian.hpp"

using namespace vibronlab;
using namespace vibronlab::constants;
namespace gs = vibronlab::gaussian;

namespace {

// tau-sigma-tau transport cell with both edge ions Doppler cooled.
experiments::BuiltChain tqd_chain() {
  return experiments::build_chain(experiments::default_params("tqd"));
}

double steady_residual(const gs::GaussianGenerator& g, const Eigen::MatrixXcd& c) {
  Eigen::MatrixXcd r = std::complex<double>(0, 1) * (g.jmat * c - c * g.jmat) -
                       (g.wmat * c + c * g.wmat.conjugate()) + g.kmat;
  if (g.dmat.size() > 0 && g.dmat.cwiseAbs().maxCoeff() > 0.0)
    r -= g.dmat.cwiseProduct(c.real()).cast<std::complex<double>>() +
         std::complex<double>(0, 1) * g.dmat.cwiseProduct(c.imag());
  return r.norm();
}

} // namespace

TEST_SUITE("gaussian") {

TEST_CASE("transport cell reproduces the documented reservoir rates") {
  const auto bc = tqd_chain();
  const auto th = gs::theory_predictions(bc.tb, bc.reservoirs);
  CHECK(th.gamma_left == doctest::Approx(2398.7135737459).epsilon(1e-9));
  CHECK(th.gamma_right == doctest::Approx(2873.3485008089).epsilon(1e-9));
  CHECK(th.n_ss == doctest::Approx(1.6415043197711938).epsilon(1e-12));
  CHECK(th.current == doctest::Approx(31.945447116830).epsilon(1e-9));
  CHECK(th.noise0 == doctest::Approx(8.224563160070e-4).epsilon(1e-9));
}

TEST_CASE("bulk elimination hits the closed form exactly") {
  const auto bc = tqd_chain();
  const auto bulk = gs::build_bulk_generator(bc.tb, bc.reservoirs);
  REQUIRE(bulk.dim() == 1);
  const auto ss = gs::steady_state(bulk);
  const auto th = gs::theory_predictions(bc.tb, bc.reservoirs);
  CHECK(ss.cmat(0, 0).real() == doctest::Approx(th.n_ss).epsilon(1e-12));
  CHECK(steady_residual(bulk, ss.cmat) < 1e-10 * bulk.kmat.norm());
}

TEST_CASE("edge model agrees with the eliminated bulk model") {
  const auto bc = tqd_chain();
  const auto edge = gs::build_edge_generator(bc.tb, bc.reservoirs);
  REQUIRE(edge.dim() == 3);
  const auto ss = gs::steady_state(edge);
  CHECK(ss.cmat(0, 0).real() == doctest::Approx(1.65479).epsilon(1e-4));
  CHECK(ss.cmat(1, 1).real() == doctest::Approx(1.64151).epsilon(1e-4));
  CHECK(ss.cmat(2, 2).real() == doctest::Approx(1.63041).epsilon(1e-4));
  // center occupation matches the eliminated model to a few ppm
  CHECK(ss.cmat(1, 1).real() ==
        doctest::Approx(1.6415043197711938).epsilon(1e-5));

  const auto flow = gs::site_currents(edge, ss);
  CHECK(flow.out(0) == doctest::Approx(35.63805445368).epsilon(1e-8));
  CHECK(flow.in(2) == doctest::Approx(flow.out(0)).epsilon(1e-10));
  // interior continuity: what enters a bulk site also leaves it
  CHECK(flow.in(1) == doctest::Approx(flow.out(1)).epsilon(1e-6));

  CHECK(steady_residual(edge, ss.cmat) < 1e-10 * edge.kmat.norm());
}

TEST_CASE("steady states are Hermitian and positive semidefinite") {
  const auto bc = tqd_chain();
  const auto edge = gs::build_edge_generator(bc.tb, bc.reservoirs);
  const auto ss = gs::steady_state(edge);
  CHECK((ss.cmat - ss.cmat.adjoint()).norm() < 1e-12 * ss.cmat.norm());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(ss.cmat);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("relaxation from vacuum reaches the fixed point") {
  const auto bc = tqd_chain();
  const auto edge = gs::build_edge_generator(bc.tb, bc.reservoirs);
  const auto ss = gs::steady_state(edge);
  gs::CorrelatorState c0;
  c0.cmat = Eigen::MatrixXcd::Zero(3, 3);
  // several times the slowest relaxation scale 1/gamma_wire
  const auto traj = gs::evolve(edge, c0, {0.0, 2e-3, 8e-3});
  REQUIRE(traj.size() == 3);
  CHECK(traj[0].cmat.norm() == 0.0);
  CHECK((traj[2].cmat - ss.cmat).norm() / ss.cmat.norm() < 1e-5);
  // intermediate state stays physical
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(traj[1].cmat);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("undamped chains are rejected by the steady solver") {
  const auto bc = tqd_chain();
  std::map<int, laser::ReservoirParams> none;
  const auto gen = gs::build_edge_generator(bc.tb, none);
  CHECK_THROWS_WITH_AS(
      (void)gs::steady_state(gen),
      doctest::Contains("damping"), std::runtime_error);
}

TEST_CASE("dephasing matrix follows the correlated-noise form") {
  const auto bc = tqd_chain();
  gs::NoiseModel noise;
  noise.gamma_d = 1234.5;
  noise.xi_c = 5e-6;
  const auto d = gs::dephasing_matrix(bc.geometry, noise);
  REQUIRE(d.rows() == 3);
  CHECK(d.diagonal().cwiseAbs().maxCoeff() == 0.0);
  CHECK((d - d.transpose()).norm() == 0.0);
  const double sep = bc.geometry.positions[1] - bc.geometry.positions[0];
  CHECK(d(0, 1) == doctest::Approx(2.0 * noise.gamma_d *
                                   (1.0 - std::exp(-sep / noise.xi_c)))
                       .epsilon(1e-12));
  // fully correlated noise leaves relative phases untouched
  noise.xi_c = 1e3;
  CHECK(gs::dephasing_matrix(bc.geometry, noise).cwiseAbs().maxCoeff() <
        1e-6 * noise.gamma_d);
}

TEST_CASE("dephasing suppresses coherences but keeps the flow conserved") {
  const auto bc = tqd_chain();
  auto gen = gs::build_edge_generator(bc.tb, bc.reservoirs);
  const auto clean = gs::steady_state(gen);
  gs::NoiseModel noise{5e4, 1e-6, 0.0};
  gen.dmat = gs::dephasing_matrix(bc.geometry, noise);
  const auto noisy = gs::steady_state(gen);
  CHECK(std::abs(noisy.cmat(0, 2)) < std::abs(clean.cmat(0, 2)));
  const auto flow = gs::site_currents(gen, noisy);
  CHECK(flow.out(0) > 0.0);
  // the dephasing channel moves no vibrons: injection still equals extraction
  CHECK(flow.in(2) == doctest::Approx(flow.out(0)).epsilon(1e-8));
  CHECK(steady_residual(gen, noisy.cmat) < 1e-10 * gen.kmat.norm());
}

TEST_CASE("two-site exhaustive disorder equals the explicit four-branch mean") {
  const auto bc = tqd_chain();
  // disorder both bulk-adjacent sites of a two-site lattice cell
  chain::TrapConfig trap{chain::TrapKind::uniform_lattice, 0.0, 10e-6, 2};
  const auto g = chain::equilibrium_positions(
      trap, {bc.geometry.species[0], bc.geometry.species[1]}, {0, 1});
  const auto tb = chain::tunneling_matrix(g);
  std::map<int, laser::ReservoirParams> res;
  res[0] = bc.reservoirs.at(0);
  res[1] = bc.reservoirs.at(2);

  const double half = 0.5 * 3e4;
  const auto builder = [&](const Eigen::VectorXd& eps) {
    return gs::build_edge_generator(chain::apply_offsets(tb, eps), res);
  };
  gs::DisorderModel model;
  model.dw_minus = 2.0 * half;
  model.affected_sites = {0, 1};
  model.mode = gs::DisorderMode::exhaustive;
  const auto stats = gs::disorder_average(builder, 2, model);
  REQUIRE(stats.n_samples == 4);

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(2);
  for (const double s0 : {-half, half})
    for (const double s1 : {-half, half}) {
      Eigen::VectorXd eps(2);
      eps << s0, s1;
      mean += gs::steady_state(builder(eps)).cmat.diagonal().real();
    }
  mean /= 4.0;
  CHECK((stats.mean - mean).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("monte carlo draws are seed-stable and thread-invariant") {
  const auto bc = tqd_chain();
  chain::TrapConfig trap{chain::TrapKind::uniform_lattice, 0.0, 10e-6, 4};
  std::vector<int> map(4, 1);
  map[0] = map[3] = 0;
  const auto g = chain::equilibrium_positions(
      trap, {bc.geometry.species[0], bc.geometry.species[1]}, map);
  const auto tb = chain::tunneling_matrix(g);
  std::map<int, laser::ReservoirParams> res;
  res[0] = bc.reservoirs.at(0);
  res[3] = bc.reservoirs.at(2);
  const auto builder = [&](const Eigen::VectorXd& eps) {
    return gs::build_edge_generator(chain::apply_offsets(tb, eps), res);
  };
  gs::DisorderModel model;
  model.dw_minus = 1e4;
  model.affected_sites = {1, 2};
  model.mode = gs::DisorderMode::monte_carlo;
  model.n_samples = 24;
  model.seed = 777;
  const auto a = gs::disorder_average(builder, 4, model, 1);
  const auto b = gs::disorder_average(builder, 4, model, 3);
  CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.dev - b.dev).cwiseAbs().maxCoeff() == 0.0);

  gs::DisorderModel other = model;
  other.seed = 778;
  const auto c = gs::disorder_average(builder, 4, other, 1);
  CHECK((a.mean - c.mean).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("weak lead cooling trips the bulk-elimination warning") {
  auto params = experiments::default_params("dtqd_sweep");
  params["lasers"]["left"]["rabi_over_linewidth"] = 0.1;
  params["lasers"]["right"]["rabi_over_linewidth"] = 0.1;
  const auto bc = experiments::build_chain(params);
  const auto bulk = gs::build_bulk_generator(bc.tb, bc.reservoirs);
  CHECK(bulk.weak_coupling_warning);

  // at full drive power the same chain clears the advisory threshold
  const auto strong = experiments::build_chain(experiments::default_params("dtqd_sweep"));
  CHECK_FALSE(gs::build_bulk_generator(strong.tb, strong.reservoirs)
                  .weak_coupling_warning);
}

} // TEST_SUITE
