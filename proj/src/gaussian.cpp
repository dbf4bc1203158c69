#include "vibronlab/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "vibronlab/ode.hpp"
#include "vibronlab/rng.hpp"

namespace vibronlab::gaussian {

using std::complex;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;

namespace {

constexpr complex<double> I1{0.0, 1.0};

void check_reservoirs(const chain::TightBinding& tb,
                      const std::map<int, laser::ReservoirParams>& reservoirs) {
  const int n = tb.n_sites();
  for (const auto& [site, res] : reservoirs) {
    if (site < 0 || site >= n)
      throw std::invalid_argument("reservoir site " + std::to_string(site) +
                                  " outside the chain");
    if (res.heating || !(res.gamma > 0.0))
      throw std::invalid_argument("reservoir at site " + std::to_string(site) +
                                  " is heating (gamma <= 0)");
  }
}

// Elimination matrices of the strongly cooled edges: one bulk x bulk block
// per reservoir, row-frequency dependent.
struct BulkPieces {
  std::vector<int> bulk_sites;
  std::vector<int> reservoir_sites;              // same order as upsilon
  std::vector<MatrixXcd> upsilon;                // rad/s
  std::vector<laser::ReservoirParams> params;    //
  bool weak_coupling_warning{false};
};

BulkPieces bulk_pieces(const chain::TightBinding& tb,
                       const std::map<int, laser::ReservoirParams>& reservoirs) {
  check_reservoirs(tb, reservoirs);
  const int n = tb.n_sites();
  if (reservoirs.empty())
    throw std::invalid_argument("bulk elimination needs at least one reservoir");
  for (const auto& [site, res] : reservoirs)
    if (site != 0 && site != n - 1)
      throw std::invalid_argument(
          "bulk elimination assumes reservoirs at the chain edges; site " +
          std::to_string(site) + " is interior");

  BulkPieces out;
  for (int i = 0; i < n; ++i)
    if (!reservoirs.count(i)) out.bulk_sites.push_back(i);
  if (out.bulk_sites.empty())
    throw std::invalid_argument("bulk elimination removed every site");

  const VectorXd onsite = tb.effective_onsite();
  const double jmax = tb.tunneling.cwiseAbs().maxCoeff();
  const int nb = static_cast<int>(out.bulk_sites.size());
  for (const auto& [ell, res] : reservoirs) {
    if (2.0 * res.gamma < 10.0 * jmax) out.weak_coupling_warning = true;
    MatrixXcd ups(nb, nb);
    for (int a = 0; a < nb; ++a) {
      const int i = out.bulk_sites[a];
      const complex<double> den(res.gamma,
                                -((onsite[i] - res.delta) - onsite[ell]));
      for (int b = 0; b < nb; ++b) {
        const int j = out.bulk_sites[b];
        ups(a, b) = tb.tunneling(i, ell) * tb.tunneling(ell, j) / den;
      }
    }
    out.reservoir_sites.push_back(ell);
    out.upsilon.push_back(std::move(ups));
    out.params.push_back(res);
  }
  return out;
}

bool nearly_hermitian(const MatrixXcd& m) {
  return (m - m.adjoint()).norm() <= 1e-10 * (1.0 + m.norm());
}

bool nearly_symmetric(const MatrixXcd& m) {
  return (m - m.transpose()).norm() <= 1e-10 * (1.0 + m.norm());
}

// Sites with no damping path make the fixed point non-unique; find them by
// flooding the tunneling graph from the damped sites.
std::vector<int> unreached_sites(const GaussianGenerator& gen) {
  const int n = gen.dim();
  std::vector<char> reached(n, 0);
  std::vector<int> queue;
  for (int i = 0; i < n; ++i)
    if (gen.wmat.row(i).cwiseAbs().sum() > 0.0 ||
        gen.wmat.col(i).cwiseAbs().sum() > 0.0) {
      reached[i] = 1;
      queue.push_back(i);
    }
  while (!queue.empty()) {
    const int i = queue.back();
    queue.pop_back();
    for (int j = 0; j < n; ++j) {
      if (reached[j] || i == j) continue;
      if (std::abs(gen.jmat(i, j)) + std::abs(gen.jmat(j, i)) > 0.0) {
        reached[j] = 1;
        queue.push_back(j);
      }
    }
  }
  std::vector<int> missing;
  for (int i = 0; i < n; ++i)
    if (!reached[i])
      missing.push_back(i < static_cast<int>(gen.site_of.size())
                            ? gen.site_of[i]
                            : i);
  return missing;
}

void check_hurwitz(const GaussianGenerator& gen) {
  const int n = gen.dim();
  const bool no_dephasing = gen.dmat.cwiseAbs().maxCoeff() == 0.0;
  double max_re;
  if (no_dephasing && nearly_symmetric(gen.wmat) && nearly_hermitian(gen.jmat)) {
    // Two-sided structure dC/dt = A C + C A^H + K: the vectorized spectrum
    // is {lambda_i + conj(lambda_j)}, so the n x n block decides.
    const MatrixXcd a = I1 * gen.jmat - gen.wmat;
    max_re = Eigen::ComplexEigenSolver<MatrixXcd>(a, false)
                 .eigenvalues()
                 .real()
                 .maxCoeff();
    max_re *= 2.0;
  } else {
    MatrixXcd lop = MatrixXcd::Zero(n * n, n * n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) {
        const int row = c * n + r;
        for (int k = 0; k < n; ++k) {
          lop(row, c * n + k) += I1 * gen.jmat(r, k) - gen.wmat(r, k);
          lop(row, k * n + r) += -I1 * gen.jmat(k, c) - std::conj(gen.wmat(k, c));
        }
        lop(row, row) -= gen.dmat(r, c);
      }
    max_re = Eigen::ComplexEigenSolver<MatrixXcd>(lop, false)
                 .eigenvalues()
                 .real()
                 .maxCoeff();
  }
  if (!(max_re < -1e-12))
    throw std::runtime_error(
        "steady_state: generator is not Hurwitz (max Re eigenvalue " +
        std::to_string(max_re) + " rad/s)");
}

void correlator_rhs(const GaussianGenerator& gen, const MatrixXcd& c,
                    MatrixXcd& dc) {
  dc.noalias() = I1 * (gen.jmat * c);
  dc.noalias() -= I1 * (c * gen.jmat);
  dc.noalias() -= gen.wmat * c;
  dc.noalias() -= c * gen.wmat.conjugate();
  dc.array() -= gen.dmat.array() * c.array();
  dc += gen.kmat;
}

} // namespace

GaussianGenerator build_edge_generator(
    const chain::TightBinding& tb,
    const std::map<int, laser::ReservoirParams>& reservoirs) {
  check_reservoirs(tb, reservoirs);
  const int n = tb.n_sites();
  GaussianGenerator gen;
  gen.kind = GeneratorKind::edge;
  gen.jmat = tb.tunneling.transpose().cast<complex<double>>();
  gen.jmat += tb.effective_onsite().cast<complex<double>>().asDiagonal();
  gen.wmat = MatrixXcd::Zero(n, n);
  gen.kmat = MatrixXcd::Zero(n, n);
  gen.dmat = MatrixXd::Zero(n, n);
  for (const auto& [site, res] : reservoirs) {
    gen.wmat(site, site) = std::conj(res.lambda_minus) - res.lambda_plus;
    gen.kmat(site, site) = 2.0 * res.lambda_plus.real();
  }
  gen.site_of.resize(n);
  for (int i = 0; i < n; ++i) gen.site_of[i] = i;
  return gen;
}

GaussianGenerator build_bulk_generator(
    const chain::TightBinding& tb,
    const std::map<int, laser::ReservoirParams>& reservoirs) {
  const BulkPieces bp = bulk_pieces(tb, reservoirs);
  const int nb = static_cast<int>(bp.bulk_sites.size());
  const VectorXd onsite = tb.effective_onsite();

  MatrixXd jt(nb, nb);
  for (int a = 0; a < nb; ++a)
    for (int b = 0; b < nb; ++b)
      jt(a, b) = tb.tunneling(bp.bulk_sites[a], bp.bulk_sites[b]);
  MatrixXd lam_plus = MatrixXd::Zero(nb, nb);
  MatrixXd lam_minus = MatrixXd::Zero(nb, nb);
  for (std::size_t r = 0; r < bp.upsilon.size(); ++r) {
    jt += bp.upsilon[r].imag();
    lam_plus += bp.upsilon[r].real() * bp.params[r].nbar;
    lam_minus += bp.upsilon[r].real() * (bp.params[r].nbar + 1.0);
  }
  VectorXd wt(nb);
  for (int a = 0; a < nb; ++a) wt[a] = onsite[bp.bulk_sites[a]] + jt(a, a);
  jt.diagonal().setZero();

  GaussianGenerator gen;
  gen.kind = GeneratorKind::bulk;
  gen.jmat = jt.transpose().cast<complex<double>>();
  gen.jmat += wt.cast<complex<double>>().asDiagonal();
  gen.wmat = (lam_minus - lam_plus).cast<complex<double>>();
  gen.kmat = (2.0 * lam_plus).cast<complex<double>>();
  gen.dmat = MatrixXd::Zero(nb, nb);
  gen.site_of = bp.bulk_sites;
  gen.weak_coupling_warning = bp.weak_coupling_warning;
  return gen;
}

Eigen::MatrixXd dephasing_matrix(const chain::ChainGeometry& geometry,
                                 const NoiseModel& noise) {
  if (noise.gamma_d < 0.0)
    throw std::invalid_argument("dephasing_matrix: gamma_d must be nonnegative");
  if (noise.xi_c <= 0.0)
    throw std::invalid_argument("dephasing_matrix: xi_c must be positive");
  const int n = geometry.n_sites();
  MatrixXd d = MatrixXd::Zero(n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dist = std::abs(geometry.positions[i] - geometry.positions[j]);
      d(i, j) = 2.0 * noise.gamma_d * (1.0 - std::exp(-dist / noise.xi_c));
    }
  return d;
}

std::vector<CorrelatorState> evolve(const GaussianGenerator& gen,
                                    const CorrelatorState& c0,
                                    const std::vector<double>& sample_times,
                                    double rtol) {
  const int n = gen.dim();
  if (c0.cmat.rows() != n || c0.cmat.cols() != n)
    throw std::invalid_argument("evolve: state dimension mismatch");

  VectorXcd y(n * n);
  Eigen::Map<MatrixXcd>(y.data(), n, n) = c0.cmat;
  MatrixXcd dc(n, n);

  ode::Rhs rhs = [&](double, const VectorXcd& x, VectorXcd& dx) {
    Eigen::Map<const MatrixXcd> c(x.data(), n, n);
    correlator_rhs(gen, c, dc);
    Eigen::Map<MatrixXcd>(dx.data(), n, n) = dc;
  };

  ode::StepControl ctrl;
  ctrl.rtol = rtol;
  ctrl.post_step = [n](VectorXcd& x) {
    Eigen::Map<MatrixXcd> c(x.data(), n, n);
    c = 0.5 * (c + c.adjoint()).eval();
  };

  std::vector<CorrelatorState> traj;
  traj.reserve(sample_times.size());
  ode::integrate_sampled(
      rhs, y, c0.time, sample_times,
      [&](double t, const VectorXcd& x) {
        CorrelatorState s;
        s.cmat = Eigen::Map<const MatrixXcd>(x.data(), n, n);
        s.time = t;
        traj.push_back(std::move(s));
      },
      ctrl);
  return traj;
}

CorrelatorState steady_state(const GaussianGenerator& gen) {
  const int n = gen.dim();
  {
    const std::vector<int> missing = unreached_sites(gen);
    if (!missing.empty()) {
      std::ostringstream msg;
      msg << "steady_state: no damping path to site(s)";
      for (int s : missing) msg << ' ' << s;
      throw std::runtime_error(msg.str());
    }
  }
  check_hurwitz(gen);

  if (n > 60) {
    // Long-time integration fallback; the Hurwitz check above guarantees decay.
    CorrelatorState state;
    state.cmat = MatrixXcd::Zero(n, n);
    state.time = 0.0;
    double rate = 0.0;
    for (int i = 0; i < n; ++i)
      rate = std::max(rate, std::abs(gen.wmat(i, i).real()));
    const double chunk = 5.0 / rate;
    const double target = 1e-10 * gen.kmat.norm();
    MatrixXcd dc(n, n);
    for (int round = 0; round < 200; ++round) {
      state = evolve(gen, state, {state.time + chunk}, 1e-9).back();
      correlator_rhs(gen, state.cmat, dc);
      if (dc.norm() < target) return state;
    }
    throw std::runtime_error("steady_state: integration fallback did not settle");
  }

  // Column-major vectorization of the fixed-point equation.
  MatrixXcd lop = MatrixXcd::Zero(n * n, n * n);
  VectorXcd rhs(n * n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const int row = c * n + r;
      for (int k = 0; k < n; ++k) {
        lop(row, c * n + k) += I1 * gen.jmat(r, k) - gen.wmat(r, k);
        lop(row, k * n + r) += -I1 * gen.jmat(k, c) - std::conj(gen.wmat(k, c));
      }
      lop(row, row) -= gen.dmat(r, c);
      rhs[row] = -gen.kmat(r, c);
    }
  const VectorXcd x = lop.partialPivLu().solve(rhs);
  const double resid = (lop * x - rhs).norm();
  const double knorm = gen.kmat.norm();
  if (resid > 1e-10 * (knorm > 0.0 ? knorm : 1.0))
    throw std::runtime_error("steady_state: linear solve residual " +
                             std::to_string(resid) + " exceeds tolerance");

  CorrelatorState state;
  state.cmat = Eigen::Map<const MatrixXcd>(x.data(), n, n);
  state.cmat = 0.5 * (state.cmat + state.cmat.adjoint()).eval();
  state.time = 0.0;
  return state;
}

SiteCurrents site_currents(const GaussianGenerator& gen,
                           const CorrelatorState& c) {
  const int n = gen.dim();
  SiteCurrents cur;
  cur.in = VectorXd::Zero(n);
  cur.out = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < i; ++j)
      cur.in[i] += 2.0 * std::imag(gen.jmat(j, i) * c.cmat(i, j));
    for (int j = i + 1; j < n; ++j)
      cur.out[i] += 2.0 * std::imag(gen.jmat(i, j) * c.cmat(j, i));
  }
  return cur;
}

TheoryPrediction theory_predictions(
    const chain::TightBinding& tb,
    const std::map<int, laser::ReservoirParams>& reservoirs,
    int probe_site) {
  if (reservoirs.size() != 2)
    throw std::invalid_argument("theory_predictions: need exactly two reservoirs");
  const BulkPieces bp = bulk_pieces(tb, reservoirs);
  const int nb = static_cast<int>(bp.bulk_sites.size());

  // Injection rates at the lead-adjacent bulk sites (dominant elements).
  int left = 0, right = static_cast<int>(bp.upsilon.size()) - 1;
  if (bp.reservoir_sites[left] > bp.reservoir_sites[right]) std::swap(left, right);
  int row_left = 0, row_right = nb - 1;
  if (probe_site >= 0) {
    const auto it = std::find(bp.bulk_sites.begin(), bp.bulk_sites.end(), probe_site);
    if (it == bp.bulk_sites.end())
      throw std::invalid_argument("theory_predictions: probe_site is not a bulk site");
    row_left = row_right = static_cast<int>(it - bp.bulk_sites.begin());
  }

  TheoryPrediction out;
  out.gamma_left = 2.0 * bp.upsilon[left].real()(row_left, row_left);
  out.gamma_right = 2.0 * bp.upsilon[right].real()(row_right, row_right);
  const double nl = bp.params[left].nbar;
  const double nr = bp.params[right].nbar;
  const double gsum = out.gamma_left + out.gamma_right;
  out.n_ss = (out.gamma_left * nl + out.gamma_right * nr) / gsum;
  out.current = out.gamma_left * out.gamma_right * (nl - nr) / gsum;
  out.noise0 = (out.n_ss * out.n_ss + out.n_ss) / gsum;
  return out;
}

namespace {

// Deterministic pairwise reduction over the sample axis.
VectorXd pairwise_sum(const std::vector<VectorXd>& rows, std::size_t lo,
                      std::size_t hi) {
  if (hi - lo <= 8) {
    VectorXd acc = rows[lo];
    for (std::size_t k = lo + 1; k < hi; ++k) acc += rows[k];
    return acc;
  }
  const std::size_t mid = lo + (hi - lo) / 2;
  return pairwise_sum(rows, lo, mid) + pairwise_sum(rows, mid, hi);
}

} // namespace

DisorderStats disorder_average(
    const std::function<GaussianGenerator(const Eigen::VectorXd&)>& gen_builder,
    int n_sites, const DisorderModel& model, int n_threads) {
  const int k = static_cast<int>(model.affected_sites.size());
  for (int s : model.affected_sites)
    if (s < 0 || s >= n_sites)
      throw std::invalid_argument("disorder_average: affected site outside chain");

  std::size_t n_conf;
  if (model.mode == DisorderMode::exhaustive) {
    if (k > 16)
      throw std::invalid_argument(
          "disorder_average: exhaustive mode supports at most 16 sites; "
          "use monte_carlo");
    n_conf = std::size_t{1} << k;
  } else {
    if (model.n_samples < 1)
      throw std::invalid_argument("disorder_average: n_samples must be >= 1");
    n_conf = static_cast<std::size_t>(model.n_samples);
  }

  const double half = 0.5 * model.dw_minus;
  auto draw = [&](std::size_t conf) {
    VectorXd eps = VectorXd::Zero(n_sites);
    if (model.mode == DisorderMode::exhaustive) {
      for (int j = 0; j < k; ++j)
        eps[model.affected_sites[j]] = (conf >> j) & 1 ? half : -half;
    } else {
      rng::SplitMix64 g = rng::SplitMix64::stream(model.seed, conf);
      for (int j = 0; j < k; ++j)
        eps[model.affected_sites[j]] = g.next_double() < 0.5 ? -half : half;
    }
    return eps;
  };

  std::vector<VectorXd> occ(n_conf);
  auto worker = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t c = lo; c < hi; ++c) {
      const CorrelatorState ss = steady_state(gen_builder(draw(c)));
      occ[c] = ss.cmat.diagonal().real();
    }
  };
  const int workers =
      std::max(1, std::min<int>(n_threads, static_cast<int>(n_conf)));
  if (workers == 1) {
    worker(0, n_conf);
  } else {
    std::vector<std::thread> pool;
    const std::size_t step = (n_conf + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t lo = w * step;
      const std::size_t hi = std::min(n_conf, lo + step);
      if (lo < hi) pool.emplace_back(worker, lo, hi);
    }
    for (auto& th : pool) th.join();
  }

  DisorderStats stats;
  stats.n_samples = static_cast<int>(n_conf);
  stats.mean = pairwise_sum(occ, 0, n_conf) / static_cast<double>(n_conf);
  std::vector<VectorXd> sq(n_conf);
  for (std::size_t c = 0; c < n_conf; ++c)
    sq[c] = (occ[c] - stats.mean).cwiseAbs2();
  const double denom = (model.mode == DisorderMode::exhaustive)
                           ? static_cast<double>(n_conf)
                           : static_cast<double>(std::max<std::size_t>(1, n_conf - 1));
  stats.dev = (pairwise_sum(sq, 0, n_conf) / denom).cwiseSqrt();
  return stats;
}

} // namespace vibronlab::gaussian
