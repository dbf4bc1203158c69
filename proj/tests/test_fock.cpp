#include <doctest.h>

#include <cmath>
#include <complex>

#include "vibronlab/constants.hpp"
#include "vibronlab/experiments.hpp"
#include "vibronlab/fock.hpp"
#include "vibronlab/gaussian.hpp"

using namespace vibronlab;
using namespace vibronlab::constants;
using std::complex;

namespace {
constexpr complex<double> I1{0.0, 1.0};
}

TEST_SUITE("fock") {

TEST_CASE("operator registry and basis bookkeeping") {
  fock::FockSystem sys;
  const int m = sys.add_mode(4);
  const int s = sys.add_spin();
  CHECK(sys.dim() == 8);
  CHECK(sys.mode_levels(m) == 4);
  // commutator [a, a^dag] = 1 on the kept block, broken only at the cutoff
  const Eigen::MatrixXcd comm =
      Eigen::MatrixXcd(sys.a(m) * sys.ad(m) - sys.ad(m) * sys.a(m));
  for (int k = 0; k < 3; ++k)
    for (int sp = 0; sp < 2; ++sp)
      CHECK(comm(2 * k + sp, 2 * k + sp).real() == doctest::Approx(1.0));
  CHECK((Eigen::MatrixXcd(sys.sz(s) * sys.sz(s)) -
         Eigen::MatrixXcd(sys.id()))
            .norm() < 1e-14);
  CHECK((Eigen::MatrixXcd(sys.sp(s) * sys.sm(s) + sys.sm(s) * sys.sp(s)) -
         Eigen::MatrixXcd(sys.id()))
            .norm() < 1e-14);
  CHECK_THROWS(sys.add_mode(0));
  CHECK_THROWS((void)fock::FockSystem{}.a(0));
}

TEST_CASE("dimension guard stops oversized registries") {
  fock::FockSystem sys;
  sys.add_mode(64);
  sys.add_mode(64);
  CHECK_THROWS(sys.add_mode(2)); // 8192 > 4096
}

TEST_CASE("thermal truncation picker tracks the tail weight") {
  for (const double nbar : {0.3, 1.0, 1.65}) {
    const int m = fock::thermal_nmax(nbar, 1e-6);
    const double q = nbar / (1.0 + nbar);
    // tail weight of the geometric distribution above m
    CHECK(std::pow(q, m + 1) < 1e-6);
    CHECK(std::pow(q, m) >= 1e-6 * q); // one level fewer would not suffice
  }
  CHECK(fock::thermal_nmax(1.65) > fock::thermal_nmax(0.3));
}

TEST_CASE("evolution preserves trace, hermiticity, and positivity") {
  fock::FockSystem sys;
  const int a = sys.add_mode(5), b = sys.add_mode(5);
  sys.add_bond(two_pi * 800.0, a, b);
  sys.add_thermal_contact(a, two_pi * 120.0, 0.6);
  fock::DensityMatrix rho0;
  rho0.rho = Eigen::MatrixXcd::Zero(25, 25);
  // superposed one-vibron state on the first mode
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(25);
  psi(0) = std::sqrt(0.5);
  psi(5) = complex<double>(0.5, 0.5);
  rho0.rho = psi * psi.adjoint();
  const auto traj = fock::lindblad_evolve(sys, rho0, {0.0, 5e-4, 2e-3});
  REQUIRE(traj.states.size() == 3);
  CHECK(traj.max_trace_drift < 1e-8);
  for (const auto& rho : traj.states) {
    CHECK(std::abs(rho.trace().real() - 1.0) < 1e-9);
    CHECK((rho - rho.adjoint()).norm() < 1e-10);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(rho);
    CHECK(es.eigenvalues().minCoeff() > -1e-8);
  }
}

TEST_CASE("closed evolution conserves purity") {
  fock::FockSystem sys;
  const int a = sys.add_mode(6), b = sys.add_mode(6);
  sys.add_bond(two_pi * 500.0, a, b);
  fock::DensityMatrix rho0;
  Eigen::VectorXcd psi = Eigen::VectorXcd::Zero(36);
  psi(6) = 1.0; // one vibron on the first mode
  rho0.rho = psi * psi.adjoint();
  const auto traj = fock::lindblad_evolve(sys, rho0, {0.0, 1e-3});
  const auto& rho = traj.states.back();
  CHECK(std::abs((rho * rho).trace().real() - 1.0) < 1e-7);
}

TEST_CASE("steady state of a thermal contact is the geometric state") {
  fock::FockSystem sys;
  const int m = sys.add_mode(20);
  const double nbar = 0.7;
  sys.add_thermal_contact(m, 500.0, nbar);
  const auto ss = fock::steady_state_dm(sys);
  const double q = nbar / (1.0 + nbar);
  // the cutoff perturbs populations by the truncated tail weight q^20 ~ 2e-8
  for (int k = 0; k < 20; ++k)
    CHECK(std::abs(ss.rho(k, k).real() - (1.0 - q) * std::pow(q, k)) < 1e-7);
  const double n_mean = fock::expectation(sys.n(m), ss.rho).real();
  CHECK(n_mean == doctest::Approx(nbar).epsilon(1e-5));
}

TEST_CASE("occupation noise matches the analytic spectrum on both paths") {
  fock::FockSystem sys;
  const int m = sys.add_mode(30);
  const double gamma = 250.0, nbar = 1.2;
  sys.add_thermal_contact(m, gamma, nbar);
  // variance nbar^2 + nbar relaxing at 2 gamma
  const double s0 = (nbar * nbar + nbar) / (2.0 * gamma);

  // truncation at 30 levels leaves a parts-per-million bias
  const auto direct = fock::regression_spectrum(sys, sys.n(m));
  CHECK(direct.mean == doctest::Approx(nbar).epsilon(1e-5));
  CHECK(direct.noise0 == doctest::Approx(s0).epsilon(1e-4));

  fock::RegressionOptions opts;
  opts.use_time_path = true;
  const auto timed = fock::regression_spectrum(sys, sys.n(m), opts);
  CHECK(std::abs(timed.noise0 - direct.noise0) <
        5e-3 * std::abs(direct.noise0));
}

TEST_CASE("the identity observable carries no noise") {
  fock::FockSystem sys;
  sys.add_mode(8);
  sys.add_thermal_contact(0, 300.0, 0.4);
  const auto res = fock::regression_spectrum(sys, sys.id());
  CHECK(res.mean == doctest::Approx(1.0).epsilon(1e-10));
  CHECK(std::abs(res.noise0) < 1e-10);
}

TEST_CASE("fock and correlator engines agree on a shared quadratic system") {
  const double j = two_pi * 500.0;
  const double gl = two_pi * 150.0, gr = two_pi * 100.0;
  const double nl = 0.8, nr = 0.1;

  fock::FockSystem sys;
  const int a = sys.add_mode(12), b = sys.add_mode(12);
  sys.add_bond(j, a, b);
  sys.add_thermal_contact(a, gl, nl);
  sys.add_thermal_contact(b, gr, nr);
  fock::DensityMatrix rho0;
  rho0.rho = Eigen::MatrixXcd::Zero(sys.dim(), sys.dim());
  rho0.rho(0, 0) = 1.0;
  const std::vector<double> times{0.0, 2e-4, 5e-4, 1e-3, 3e-3};
  const auto traj = fock::lindblad_evolve(sys, rho0, times);

  gaussian::GaussianGenerator gen;
  gen.jmat = Eigen::MatrixXcd::Zero(2, 2);
  gen.jmat(0, 1) = gen.jmat(1, 0) = j;
  gen.wmat = Eigen::MatrixXcd::Zero(2, 2);
  gen.wmat(0, 0) = gl;
  gen.wmat(1, 1) = gr;
  gen.kmat = Eigen::MatrixXcd::Zero(2, 2);
  gen.kmat(0, 0) = 2.0 * gl * nl;
  gen.kmat(1, 1) = 2.0 * gr * nr;
  gen.dmat = Eigen::MatrixXd::Zero(2, 2);
  gaussian::CorrelatorState c0;
  c0.cmat = Eigen::MatrixXcd::Zero(2, 2);
  const auto ctraj = gaussian::evolve(gen, c0, times);

  for (size_t i = 1; i < times.size(); ++i) {
    const double n0 = fock::expectation(sys.n(a), traj.states[i]).real();
    const double n1 = fock::expectation(sys.n(b), traj.states[i]).real();
    CHECK(n0 == doctest::Approx(ctraj[i].cmat(0, 0).real()).epsilon(0.02));
    CHECK(n1 == doctest::Approx(ctraj[i].cmat(1, 1).real()).epsilon(0.02).scale(0.01));
    const complex<double> coh =
        fock::expectation(Eigen::SparseMatrix<complex<double>>(
                              sys.ad(a) * sys.a(b)),
                          traj.states[i]);
    CHECK(std::abs(coh - ctraj[i].cmat(0, 1)) <
          0.02 * std::abs(ctraj[i].cmat(0, 1)) + 1e-4);
  }
}

TEST_CASE("bare tunneling pair performs full rabi cycles") {
  const double j = 4000.0;
  fock::SingleExcitationRun run;
  run.h_static = Eigen::MatrixXcd::Zero(2, 2);
  run.h_static(0, 1) = run.h_static(1, 0) = j;
  run.dot_site = 0;
  std::vector<double> times;
  for (int i = 0; i <= 100; ++i) times.push_back(1e-3 * i / 100.0);
  const auto trace = fock::evolve_single_excitation(run, 0, times);
  for (size_t i = 0; i < times.size(); ++i) {
    const double p1 = std::sin(j * times[i]) * std::sin(j * times[i]);
    CHECK(std::abs(trace.populations(i, 1) - p1) < 1e-7);
  }
}

TEST_CASE("switch drive gates transfer on the spin sign") {
  chain::TightBinding tb;
  tb.onsite = Eigen::VectorXd::Constant(3, two_pi * 5e6);
  tb.tunneling = Eigen::MatrixXd::Zero(3, 3);
  tb.tunneling(0, 1) = tb.tunneling(1, 0) = 5000.0;
  tb.tunneling(1, 2) = tb.tunneling(2, 1) = 5000.0;
  tb.tunneling(0, 2) = tb.tunneling(2, 0) = 300.0;
  tb.offsets = Eigen::VectorXd::Zero(3);

  auto drive = fock::make_switch_drive(tb, 0.92059, 1.0);
  std::vector<double> times;
  for (int i = 0; i <= 200; ++i) times.push_back(1.2e-3 * i / 200.0);

  drive.spin = +1;
  const auto on = fock::switch_scenario(drive, times);
  drive.spin = -1;
  const auto off = fock::switch_scenario(drive, times);

  const double p_on = on.pop_exact.col(2).maxCoeff();
  const double p_off = off.pop_exact.col(2).maxCoeff();
  CHECK(p_on > 0.99);
  CHECK(p_on / p_off > 1e3);
  CHECK(on.max_population_gap < 0.05);
  CHECK(on.tunneling_effective ==
        doctest::Approx(5000.0 * laser::bessel_j(1, 2.0 * 0.92059))
            .epsilon(1e-12));

  // zero modulation index leaves the vibron stuck on the detuned lattice
  auto inert = fock::make_switch_drive(tb, 0.0, 1.0);
  inert.spin = +1;
  const auto stuck = fock::switch_scenario(inert, times);
  CHECK(stuck.pop_exact.col(2).maxCoeff() < 1e-3);
}

TEST_CASE("bichromatic probe constraints are enforced") {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(3, 3);
  j(0, 1) = j(1, 0) = j(1, 2) = j(2, 1) = 8000.0;

  fock::BichromaticParams ok;
  const auto probe = fock::current_probe_setup(j, ok);
  CHECK(probe.j_pat == doctest::Approx(8000.0 * laser::bessel_j(1, pi)).epsilon(1e-12));
  CHECK(probe.lambda_tilde == doctest::Approx(4.0 * ok.zeta2 / pi).epsilon(1e-12));
  // current operators are Hermitian and traceless
  CHECK((probe.current_in - probe.current_in.adjoint()).norm() < 1e-12);
  CHECK(std::abs(probe.current_in.trace()) < 1e-12);

  fock::BichromaticParams bad = ok;
  bad.zeta1 = 3.0;
  CHECK_THROWS_WITH_AS((void)fock::current_probe_setup(j, bad),
                       doctest::Contains("constraint violated"),
                       std::invalid_argument);
  bad = ok;
  bad.phi1 = 0.0;
  CHECK_THROWS_AS((void)fock::current_probe_setup(j, bad), std::invalid_argument);
  bad = ok;
  bad.zeta2 = 0.5;
  CHECK_THROWS_AS((void)fock::current_probe_setup(j, bad), std::invalid_argument);
}

TEST_CASE("three-mode dot fano factor is stable against the quadratic model") {
  const double j = two_pi * 1e3, gl = two_pi * 2e3, gr = two_pi * 2e3;
  fock::FockSystem sys;
  const int hot = sys.add_mode(8), dot = sys.add_mode(6), cold = sys.add_mode(4);
  sys.add_bond(-I1 * j, hot, dot);
  sys.add_bond(-I1 * j, cold, dot);
  sys.add_thermal_contact(hot, gl, 0.5);
  sys.add_thermal_contact(cold, gr, 0.05);
  const auto res = fock::fano_factor(sys, dot);
  REQUIRE(res.fano.has_value());
  CHECK(*res.fano == doctest::Approx(0.4083930648).epsilon(1e-8));

  const auto wick = experiments::wick_fano_reference(j, gl, gr, 0.5, 0.05);
  CHECK(wick.fano == doctest::Approx(0.4165833333).epsilon(1e-8));
  // small truncation keeps the exact solver within a couple of percent
  CHECK(std::abs(*res.fano / wick.fano - 1.0) < 0.025);
}

TEST_CASE("ramsey probe recovers mean occupation and noise for weak coupling") {
  fock::FockSystem sys;
  const int m = sys.add_mode(24);
  const double gamma = 600.0, nbar = 1.0;
  sys.add_thermal_contact(m, gamma, nbar);
  const double lam = two_pi * 8.0;
  std::vector<double> grid;
  for (int i = 0; i <= 400; ++i) grid.push_back(0.15 * i / 400.0);
  fock::RamseyOptions opts;
  opts.rate_scale = 2.0 * gamma;
  const auto res = fock::ramsey_probe(sys, lam, sys.n(m), grid, opts);
  REQUIRE_FALSE(res.fit_failed);
  CHECK_FALSE(res.weak_probe_warning);
  CHECK(res.mean == doctest::Approx(nbar).epsilon(0.05));
  const double s0 = (nbar * nbar + nbar) / (2.0 * gamma);
  CHECK(res.noise0 == doctest::Approx(s0).epsilon(0.12));

  // pushing the coupling past a tenth of the relaxation rate warns
  std::vector<double> coarse;
  for (int i = 0; i <= 40; ++i) coarse.push_back(0.02 * i / 40.0);
  const auto loud = fock::ramsey_probe(sys, 0.3 * gamma, sys.n(m), coarse, opts);
  CHECK(loud.weak_probe_warning);
}

} // TEST_SUITE
