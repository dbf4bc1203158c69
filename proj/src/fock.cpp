#include "vibronlab/fock.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <Eigen/SparseLU>
#include <list>
#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>

#include "vibronlab/laser.hpp"
#include "vibronlab/ode.hpp"

namespace vibronlab::fock {

using std::complex;
using Eigen::MatrixXcd;
using Eigen::MatrixXd;
using Eigen::VectorXcd;
using Eigen::VectorXd;
using Eigen::VectorXi;

namespace {

constexpr complex<double> I1{0.0, 1.0};

SparseOp sparse_identity(long d) {
  SparseOp id(d, d);
  id.setIdentity();
  return id;
}

SparseOp kron(const SparseOp& a, const SparseOp& b) {
  SparseOp out(a.rows() * b.rows(), a.cols() * b.cols());
  out = Eigen::kroneckerProduct(a, b);
  return out;
}

void check_hermitian_term(const SparseOp& term, const char* what) {
  const MatrixXcd dense = term;
  if ((dense - dense.adjoint()).norm() > 1e-9 * (1.0 + dense.norm()))
    throw std::invalid_argument(std::string(what) +
                                ": term must be Hermitian (include the h.c.)");
}

} // namespace

int FockSystem::add_mode(int levels) {
  if (levels < 2)
    throw std::invalid_argument("add_mode: need at least two levels");
  if (static_cast<long>(dim_) * levels > max_dim)
    throw std::invalid_argument(
        "add_mode: Hilbert dimension " + std::to_string(static_cast<long>(dim_) * levels) +
        " exceeds the guard rail " + std::to_string(max_dim));
  if (!hterms_.empty() || !dterms_.empty())
    throw std::logic_error("add_mode: declare all factors before adding terms");
  mode_levels_.push_back(levels);
  dim_ *= levels;
  return n_modes() - 1;
}

int FockSystem::add_spin() {
  if (static_cast<long>(dim_) * 2 > max_dim)
    throw std::invalid_argument(
        "add_spin: Hilbert dimension " + std::to_string(static_cast<long>(dim_) * 2) +
        " exceeds the guard rail " + std::to_string(max_dim));
  if (!hterms_.empty() || !dterms_.empty())
    throw std::logic_error("add_spin: declare all factors before adding terms");
  ++n_spins_;
  dim_ *= 2;
  return n_spins_ - 1;
}

int FockSystem::mode_levels(int mode) const {
  if (mode < 0 || mode >= n_modes())
    throw std::invalid_argument("mode index outside the registry");
  return mode_levels_[mode];
}

SparseOp FockSystem::embed(int slot, const SparseOp& prim) const {
  std::vector<int> dims(mode_levels_);
  dims.insert(dims.end(), n_spins_, 2);
  long before = 1, after = 1;
  for (int f = 0; f < slot; ++f) before *= dims[f];
  for (int f = slot + 1; f < static_cast<int>(dims.size()); ++f) after *= dims[f];
  return kron(kron(sparse_identity(before), prim), sparse_identity(after));
}

SparseOp FockSystem::id() const { return sparse_identity(dim_); }

SparseOp FockSystem::a(int mode) const {
  const int m = mode_levels(mode);
  SparseOp prim(m, m);
  for (int k = 1; k < m; ++k) prim.insert(k - 1, k) = std::sqrt(double(k));
  prim.makeCompressed();
  return embed(mode, prim);
}

SparseOp FockSystem::ad(int mode) const { return SparseOp(a(mode).adjoint()); }

SparseOp FockSystem::n(int mode) const {
  const int m = mode_levels(mode);
  SparseOp prim(m, m);
  for (int k = 1; k < m; ++k) prim.insert(k, k) = double(k);
  prim.makeCompressed();
  return embed(mode, prim);
}

SparseOp FockSystem::sz(int spin) const {
  if (spin < 0 || spin >= n_spins_)
    throw std::invalid_argument("spin index outside the registry");
  SparseOp prim(2, 2);
  prim.insert(0, 0) = -1.0;
  prim.insert(1, 1) = 1.0;
  prim.makeCompressed();
  return embed(n_modes() + spin, prim);
}

SparseOp FockSystem::sp(int spin) const {
  if (spin < 0 || spin >= n_spins_)
    throw std::invalid_argument("spin index outside the registry");
  SparseOp prim(2, 2);
  prim.insert(1, 0) = 1.0;
  prim.makeCompressed();
  return embed(n_modes() + spin, prim);
}

SparseOp FockSystem::sm(int spin) const { return SparseOp(sp(spin).adjoint()); }

SparseOp FockSystem::sx(int spin) const { return SparseOp(sp(spin) + sm(spin)); }

void FockSystem::check_operator(const SparseOp& op) const {
  if (op.rows() != dim_ || op.cols() != dim_)
    throw std::invalid_argument("operator dimension " + std::to_string(op.rows()) +
                                " does not match the system dimension " +
                                std::to_string(dim_));
}

void FockSystem::add_h(const SparseOp& term) {
  check_operator(term);
  check_hermitian_term(term, "add_h");
  hterms_.push_back({term, false, 0.0, 0.0});
}

void FockSystem::add_h_cos(const SparseOp& term, double freq, double phase) {
  check_operator(term);
  check_hermitian_term(term, "add_h_cos");
  if (!(freq > 0.0))
    throw std::invalid_argument("add_h_cos: modulation frequency must be positive");
  hterms_.push_back({term, true, freq, phase});
}

void FockSystem::add_dissipator(complex<double> lambda, const SparseOp& o1,
                                const SparseOp& o2) {
  check_operator(o1);
  check_operator(o2);
  dterms_.push_back({lambda, o1, o2});
}

void FockSystem::add_jump(double rate, const SparseOp& c) {
  if (rate < 0.0) throw std::invalid_argument("add_jump: rate must be nonnegative");
  if (rate == 0.0) return;
  add_dissipator(0.5 * rate, c, SparseOp(c.adjoint()));
}

void FockSystem::add_thermal_contact(int mode, double gamma, double nbar) {
  if (!(gamma > 0.0))
    throw std::invalid_argument("add_thermal_contact: gamma must be positive");
  if (nbar < 0.0)
    throw std::invalid_argument("add_thermal_contact: nbar must be nonnegative");
  add_jump(2.0 * gamma * (nbar + 1.0), a(mode));
  if (nbar > 0.0) add_jump(2.0 * gamma * nbar, ad(mode));
}

void FockSystem::add_bond(complex<double> coeff, int mode_i, int mode_j) {
  if (mode_i == mode_j)
    throw std::invalid_argument("add_bond: endpoints must differ");
  SparseOp x = coeff * SparseOp(ad(mode_i) * a(mode_j));
  add_h(SparseOp(x + SparseOp(x.adjoint())));
  bonds_.push_back({coeff, mode_i, mode_j});
}

bool FockSystem::has_modulation() const {
  return std::any_of(hterms_.begin(), hterms_.end(),
                     [](const HamiltonianTerm& t) { return t.modulated; });
}

SparseOp FockSystem::hamiltonian(double t) const {
  SparseOp h(dim_, dim_);
  for (const auto& term : hterms_) {
    if (term.modulated)
      h += SparseOp(std::cos(term.freq * t - term.phase) * term.op);
    else
      h += term.op;
  }
  return h;
}

VectorXi FockSystem::grading() const {
  std::vector<int> dims(mode_levels_);
  dims.insert(dims.end(), n_spins_, 2);
  VectorXi g = VectorXi::Zero(dim_);
  for (int i = 0; i < dim_; ++i) {
    int rem = i, total = 0;
    for (int f = static_cast<int>(dims.size()) - 1; f >= 0; --f) {
      total += rem % dims[f];
      rem /= dims[f];
    }
    g[i] = total;
  }
  return g;
}

double FockSystem::rate_scale() const {
  double rate = 0.0;
  for (const auto& d : dterms_) rate = std::max(rate, 2.0 * std::abs(d.lambda));
  return rate;
}

int thermal_nmax(double nbar, double tail) {
  if (nbar < 0.0) throw std::invalid_argument("thermal_nmax: nbar must be nonnegative");
  if (!(tail > 0.0) || tail >= 1.0)
    throw std::invalid_argument("thermal_nmax: tail must lie in (0, 1)");
  if (nbar == 0.0) return 1;
  const double x = nbar / (nbar + 1.0);
  double w = x;
  int m = 0;
  while (w >= tail && m < FockSystem::max_dim) {
    w *= x;
    ++m;
  }
  return std::max(1, m);
}

std::complex<double> expectation(const SparseOp& op, const MatrixXcd& rho) {
  if (op.rows() != rho.rows() || op.cols() != rho.cols())
    throw std::invalid_argument("expectation: dimension mismatch");
  complex<double> acc = 0.0;
  for (int k = 0; k < op.outerSize(); ++k)
    for (SparseOp::InnerIterator it(op, k); it; ++it)
      acc += it.value() * rho(it.col(), it.row());
  return acc;
}

namespace {

// Precomputed factors for applying the generator to an arbitrary (not
// necessarily Hermitian) matrix, as needed by the regression theorem.
struct LiouvOps {
  bool has_h{false};
  SparseOp h;
  struct Mod {
    SparseOp op;
    double freq, phase;
  };
  std::vector<Mod> mods;
  struct Diss {
    complex<double> lam;
    SparseOp o1, o2, p, o1d, o2d, pd;
  };
  std::vector<Diss> diss;
};

LiouvOps build_ops(const FockSystem& sys) {
  LiouvOps ops;
  SparseOp hs(sys.dim(), sys.dim());
  for (const auto& term : sys.hamiltonian_terms()) {
    if (term.modulated)
      ops.mods.push_back({term.op, term.freq, term.phase});
    else {
      hs += term.op;
      ops.has_h = true;
    }
  }
  ops.h = hs;
  for (const auto& d : sys.dissipator_terms()) {
    LiouvOps::Diss ds;
    ds.lam = d.lambda;
    ds.o1 = d.o1;
    ds.o2 = d.o2;
    ds.p = SparseOp(d.o2 * d.o1);
    ds.o1d = SparseOp(d.o1.adjoint());
    ds.o2d = SparseOp(d.o2.adjoint());
    ds.pd = SparseOp(ds.p.adjoint());
    ops.diss.push_back(std::move(ds));
  }
  return ops;
}

void apply_liouvillian(const LiouvOps& ops, double t, const MatrixXcd& b,
                       MatrixXcd& db, MatrixXcd& tmp) {
  db.setZero(b.rows(), b.cols());
  if (ops.has_h) {
    tmp.noalias() = ops.h * b;
    db -= I1 * tmp;
    tmp.noalias() = b * ops.h;
    db += I1 * tmp;
  }
  for (const auto& m : ops.mods) {
    const double f = std::cos(m.freq * t - m.phase);
    tmp.noalias() = m.op * b;
    db -= (I1 * f) * tmp;
    tmp.noalias() = b * m.op;
    db += (I1 * f) * tmp;
  }
  for (const auto& ds : ops.diss) {
    tmp.noalias() = b * ds.o2;
    db += ds.lam * (ds.o1 * tmp);
    tmp.noalias() = ds.p * b;
    db -= ds.lam * tmp;
    tmp.noalias() = b * ds.o1d;
    db += std::conj(ds.lam) * (ds.o2d * tmp);
    tmp.noalias() = b * ds.pd;
    db -= std::conj(ds.lam) * tmp;
  }
}

// Column-major vectorization of the full generator, normalized so its largest
// coefficient is 1; `scale` restores rad/s.
SparseOp liouvillian_matrix(const FockSystem& sys, double& scale) {
  const int d = sys.dim();
  const long dd = static_cast<long>(d) * d;
  const SparseOp idn = sparse_identity(d);
  SparseOp lop(dd, dd);
  const SparseOp h = sys.hamiltonian(0.0);
  if (h.nonZeros() > 0) {
    lop += SparseOp((-I1) * kron(idn, h));
    lop += SparseOp(I1 * kron(SparseOp(h.transpose()), idn));
  }
  for (const auto& ds : sys.dissipator_terms()) {
    const SparseOp p = SparseOp(ds.o2 * ds.o1);
    lop += SparseOp(ds.lambda * kron(SparseOp(ds.o2.transpose()), ds.o1));
    lop -= SparseOp(ds.lambda * kron(idn, p));
    lop += SparseOp(std::conj(ds.lambda) *
                    kron(SparseOp(ds.o1.conjugate()), SparseOp(ds.o2.adjoint())));
    lop -= SparseOp(std::conj(ds.lambda) * kron(SparseOp(p.conjugate()), idn));
  }
  lop.makeCompressed();
  scale = 0.0;
  for (int k = 0; k < lop.outerSize(); ++k)
    for (SparseOp::InnerIterator it(lop, k); it; ++it)
      scale = std::max(scale, std::abs(it.value()));
  if (scale > 0.0) lop *= complex<double>(1.0 / scale, 0.0);
  return lop;
}

struct DirectSolveContext {
  int d{0};
  double scale{1.0};     // rad/s
  SparseOp lnorm;        //
  std::vector<int> keep; // vec indices entering the solve
  std::vector<int> pos;  // full index -> compact position, -1 outside
};

bool grading_preserved(const SparseOp& lop, const VectorXi& g, int d) {
  for (int k = 0; k < lop.outerSize(); ++k)
    for (SparseOp::InnerIterator it(lop, k); it; ++it) {
      const long r = it.row(), c = it.col();
      if (g[r % d] - g[r / d] != g[c % d] - g[c / d]) return false;
    }
  return true;
}

bool build_direct_context(const FockSystem& sys, bool force_full,
                          DirectSolveContext& ctx) {
  const int d = sys.dim();
  if (d > 1024) return false;
  ctx.d = d;
  ctx.lnorm = liouvillian_matrix(sys, ctx.scale);
  if (ctx.scale == 0.0) return false;
  const long dd = static_cast<long>(d) * d;
  const VectorXi g = sys.grading();
  const bool graded = !force_full && grading_preserved(ctx.lnorm, g, d);
  ctx.keep.clear();
  ctx.pos.assign(dd, -1);
  if (graded) {
    for (long v = 0; v < dd; ++v)
      if (g[v % d] == g[v / d]) ctx.keep.push_back(static_cast<int>(v));
  } else {
    if (dd > 50000) return false;
    ctx.keep.resize(dd);
    for (long v = 0; v < dd; ++v) ctx.keep[v] = static_cast<int>(v);
  }
  for (std::size_t i = 0; i < ctx.keep.size(); ++i) ctx.pos[ctx.keep[i]] = static_cast<int>(i);
  return true;
}

// Sparse LU of the generator bordered by a normalization column and the trace
// row, which pins the otherwise singular fixed-point system.
class BorderedLU {
public:
  BorderedLU(const DirectSolveContext& ctx, const VectorXd& wdiag) : ctx_(ctx) {
    const int s = static_cast<int>(ctx.keep.size());
    std::vector<Eigen::Triplet<complex<double>>> trips;
    trips.reserve(ctx.lnorm.nonZeros() + 2 * ctx.d);
    for (int k = 0; k < ctx.lnorm.outerSize(); ++k)
      for (SparseOp::InnerIterator it(ctx.lnorm, k); it; ++it) {
        const int pr = ctx.pos[it.row()], pc = ctx.pos[it.col()];
        if (pr >= 0 && pc >= 0) trips.emplace_back(pr, pc, it.value());
      }
    for (int r = 0; r < ctx.d; ++r) {
      const long v = static_cast<long>(r) * (ctx.d + 1);
      trips.emplace_back(ctx.pos[v], s, complex<double>(wdiag[r], 0.0));
      trips.emplace_back(s, ctx.pos[v], complex<double>(1.0, 0.0));
    }
    bordered_.resize(s + 1, s + 1);
    bordered_.setFromTriplets(trips.begin(), trips.end());
    bordered_.makeCompressed();
    lu_.compute(bordered_);
    ok_ = lu_.info() == Eigen::Success;
  }

  bool ok() const { return ok_; }

  VectorXcd solve_full(const VectorXcd& rhs_full, double rhs_last) const {
    const int s = static_cast<int>(ctx_.keep.size());
    VectorXcd rhs(s + 1);
    for (int i = 0; i < s; ++i) rhs[i] = rhs_full[ctx_.keep[i]];
    rhs[s] = rhs_last;
    VectorXcd y = lu_.solve(rhs);
    const VectorXcd resid = rhs - bordered_ * y;
    y += lu_.solve(resid);
    VectorXcd full = VectorXcd::Zero(static_cast<long>(ctx_.d) * ctx_.d);
    for (int i = 0; i < s; ++i) full[ctx_.keep[i]] = y[i];
    return full;
  }

private:
  const DirectSolveContext& ctx_;
  SparseOp bordered_;
  Eigen::SparseLU<SparseOp> lu_;
  bool ok_{false};
};

void validate_density(const MatrixXcd& rho, int d) {
  if (rho.rows() != d || rho.cols() != d)
    throw std::invalid_argument("density matrix dimension mismatch");
  if (std::abs(rho.trace() - complex<double>(1.0)) > 1e-9)
    throw std::invalid_argument("density matrix trace differs from 1");
  if ((rho - rho.adjoint()).norm() > 1e-10 * (1.0 + rho.norm()))
    throw std::invalid_argument("density matrix is not Hermitian");
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(rho, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-8)
    throw std::invalid_argument("density matrix has a negative eigenvalue");
}

DensityMatrix postprocess_steady(const DirectSolveContext& ctx,
                                 const VectorXcd& x) {
  MatrixXcd mu = Eigen::Map<const MatrixXcd>(x.data(), ctx.d, ctx.d);
  mu = 0.5 * (mu + mu.adjoint()).eval();
  const complex<double> tr = mu.trace();
  if (std::abs(tr) < 1e-9)
    throw std::runtime_error("steady_state_dm: traceless null vector; "
                             "steady space is degenerate");
  mu /= tr;
  VectorXcd v(static_cast<long>(ctx.d) * ctx.d);
  Eigen::Map<MatrixXcd>(v.data(), ctx.d, ctx.d) = mu;
  const double resid = (ctx.lnorm * v).norm();
  if (resid > 1e-10 * std::max(1.0, v.norm()))
    throw std::runtime_error(
        "steady_state_dm: stationarity residual " + std::to_string(resid) +
        " on the normalized generator exceeds 1e-10");
  return {mu, 0.0};
}

DensityMatrix steady_by_integration(const FockSystem& sys) {
  const int d = sys.dim();
  const double rate = sys.rate_scale();
  const LiouvOps ops = build_ops(sys);
  MatrixXcd db(d, d), tmp(d, d);
  VectorXcd y(static_cast<long>(d) * d);
  Eigen::Map<MatrixXcd>(y.data(), d, d) =
      MatrixXcd::Identity(d, d) / static_cast<double>(d);

  ode::Rhs rhs = [&](double t, const VectorXcd& x, VectorXcd& dx) {
    Eigen::Map<const MatrixXcd> b(x.data(), d, d);
    apply_liouvillian(ops, t, b, db, tmp);
    Eigen::Map<MatrixXcd>(dx.data(), d, d) = db;
  };
  ode::StepControl ctrl;
  ctrl.post_step = [d](VectorXcd& x) {
    Eigen::Map<MatrixXcd> b(x.data(), d, d);
    b = 0.5 * (b + b.adjoint()).eval();
    const double tr = b.trace().real();
    if (tr > 0.0) b /= tr;
  };

  double t = 0.0;
  const double chunk = 3.0 / rate;
  for (int round = 0; round < 500; ++round) {
    ode::integrate(rhs, y, t, t + chunk, ctrl);
    t += chunk;
    Eigen::Map<const MatrixXcd> b(y.data(), d, d);
    MatrixXcd cur = b;
    apply_liouvillian(ops, t, cur, db, tmp);
    if (db.norm() <= 1e-10 * rate * std::max(1.0, cur.norm()))
      return {0.5 * (cur + cur.adjoint()), t};
  }
  throw std::runtime_error("steady_state_dm: long-time integration did not settle");
}

// Systems with a static Hamiltonian and pure ladder jumps factor into exactly
// solvable pieces: a mode's thermal channel preserves the coherence offset
// m - n and exponentiates inside those small blocks, and the Hamiltonian
// exponential is block-diagonal over the connected components of its sparsity
// graph.  A Strang composition of the exact factors is then free of the step
// limit the upper ladder rates impose on an explicit integrator.

struct LadderChannel {
  int levels{0}, before{1}, after{1};
  double down{0.0}, up{0.0}; // rad/s
};

struct SplitPrepared {
  double dt{0.0};
  std::vector<std::vector<MatrixXcd>> chan; // [channel][offset], at dt/2
  std::vector<MatrixXcd> uni;               // [component], at dt
};

struct SplitPlan {
  bool eligible{false};
  int dim{0};
  std::vector<LadderChannel> chans;
  std::vector<std::vector<int>> comps;
  std::vector<VectorXd> evals;
  std::vector<MatrixXcd> evecs;
  std::list<SplitPrepared> cache;
};

// Truncated one-mode thermal generator restricted to the offset-q block;
// the top-level heating cutoff matches the truncated ladder operators.
MatrixXd ladder_block(const LadderChannel& ch, int q) {
  const int s = ch.levels - q;
  MatrixXd t = MatrixXd::Zero(s, s);
  for (int j = 0; j < s; ++j) {
    const int n = j, m = j + q;
    const double qn = (n <= ch.levels - 2) ? n + 1.0 : 0.0;
    const double qm = (m <= ch.levels - 2) ? m + 1.0 : 0.0;
    t(j, j) = -0.5 * ch.down * (n + m) - 0.5 * ch.up * (qn + qm);
    if (j + 1 < s)
      t(j, j + 1) = ch.down * std::sqrt(double(n + 1) * double(m + 1));
    if (j >= 1) t(j, j - 1) = ch.up * std::sqrt(double(n) * double(m));
  }
  return t;
}

SplitPlan make_split_plan(const FockSystem& sys) {
  SplitPlan plan;
  plan.dim = sys.dim();
  for (const auto& term : sys.hamiltonian_terms())
    if (term.modulated) return plan;
  const int nm = sys.n_modes();
  plan.chans.resize(nm);
  long lead = 1;
  for (int mu = 0; mu < nm; ++mu) {
    auto& ch = plan.chans[mu];
    ch.levels = sys.mode_levels(mu);
    ch.before = static_cast<int>(lead);
    lead *= ch.levels;
    ch.after = static_cast<int>(plan.dim / lead);
  }
  if (!sys.dissipator_terms().empty()) {
    std::vector<SparseOp> lower(nm), upper(nm);
    for (int mu = 0; mu < nm; ++mu) {
      lower[mu] = sys.a(mu);
      upper[mu] = sys.ad(mu);
    }
    for (const auto& d : sys.dissipator_terms()) {
      if (d.lambda.imag() != 0.0 || !(d.lambda.real() > 0.0)) return plan;
      if (SparseOp(d.o2 - SparseOp(d.o1.adjoint())).norm() != 0.0) return plan;
      const double rate = 2.0 * d.lambda.real();
      bool matched = false;
      for (int mu = 0; mu < nm && !matched; ++mu) {
        if (SparseOp(d.o1 - lower[mu]).norm() == 0.0) {
          plan.chans[mu].down += rate;
          matched = true;
        } else if (SparseOp(d.o1 - upper[mu]).norm() == 0.0) {
          plan.chans[mu].up += rate;
          matched = true;
        }
      }
      if (!matched) return plan;
    }
  }
  plan.chans.erase(std::remove_if(plan.chans.begin(), plan.chans.end(),
                                  [](const LadderChannel& c) {
                                    return c.down == 0.0 && c.up == 0.0;
                                  }),
                   plan.chans.end());
  const SparseOp h = sys.hamiltonian(0.0);
  if (h.nonZeros() > 0) {
    std::vector<int> parent(plan.dim);
    for (int i = 0; i < plan.dim; ++i) parent[i] = i;
    const auto find = [&parent](int x) {
      while (parent[x] != x) x = parent[x] = parent[parent[x]];
      return x;
    };
    for (int outer = 0; outer < h.outerSize(); ++outer)
      for (SparseOp::InnerIterator it(h, outer); it; ++it) {
        const int ra = find(static_cast<int>(it.row())), rb = find(outer);
        if (ra != rb) parent[ra] = rb;
      }
    std::vector<int> slot(plan.dim, -1), pos(plan.dim, 0);
    for (int i = 0; i < plan.dim; ++i) {
      const int r = find(i);
      if (slot[r] < 0) {
        slot[r] = static_cast<int>(plan.comps.size());
        plan.comps.emplace_back();
      }
      pos[i] = static_cast<int>(plan.comps[slot[r]].size());
      plan.comps[slot[r]].push_back(i);
    }
    size_t largest = 0;
    for (const auto& c : plan.comps) largest = std::max(largest, c.size());
    if (largest > 64) return plan; // dense coupling: use the generic path
    std::vector<MatrixXcd> blocks;
    blocks.reserve(plan.comps.size());
    for (const auto& c : plan.comps)
      blocks.push_back(MatrixXcd::Zero(c.size(), c.size()));
    for (int outer = 0; outer < h.outerSize(); ++outer)
      for (SparseOp::InnerIterator it(h, outer); it; ++it) {
        const int r = static_cast<int>(it.row());
        blocks[slot[find(r)]](pos[r], pos[outer]) = it.value();
      }
    for (const auto& blk : blocks) {
      Eigen::SelfAdjointEigenSolver<MatrixXcd> es(blk);
      plan.evals.push_back(es.eigenvalues());
      plan.evecs.push_back(es.eigenvectors());
    }
  }
  plan.eligible = true;
  return plan;
}

const SplitPrepared& split_prepared(SplitPlan& plan, double dt) {
  for (const auto& p : plan.cache)
    if (p.dt == dt) return p;
  if (plan.cache.size() >= 6) plan.cache.clear();
  SplitPrepared prep;
  prep.dt = dt;
  prep.chan.resize(plan.chans.size());
  for (size_t c = 0; c < plan.chans.size(); ++c) {
    const int levels = plan.chans[c].levels;
    prep.chan[c].resize(levels);
    for (int q = 0; q < levels; ++q) {
      const MatrixXd ex = (0.5 * dt * ladder_block(plan.chans[c], q)).exp();
      prep.chan[c][q] = ex.cast<complex<double>>();
    }
  }
  prep.uni.resize(plan.comps.size());
  for (size_t c = 0; c < plan.comps.size(); ++c) {
    const VectorXcd phase =
        (plan.evals[c].array().cast<complex<double>>() *
         complex<double>(0.0, -dt))
            .exp()
            .matrix();
    prep.uni[c] = plan.evecs[c] * phase.asDiagonal() * plan.evecs[c].adjoint();
  }
  plan.cache.push_back(std::move(prep));
  return plan.cache.back();
}

// rho <- exp(D dt/2) rho over every coherence-offset block of one mode
void apply_ladder(const LadderChannel& ch, const std::vector<MatrixXcd>& eq,
                  MatrixXcd& rho) {
  const int levels = ch.levels, nb = ch.before, na = ch.after;
  const int cols_ba = nb * na;
  MatrixXcd v, w;
  for (int q = -(levels - 1); q <= levels - 1; ++q) {
    const int aq = std::abs(q);
    const int s = levels - aq;
    const int n0 = std::max(0, -q), m0 = std::max(0, q);
    v.resize(s, static_cast<long>(cols_ba) * cols_ba);
    for (int bp = 0; bp < nb; ++bp)
      for (int ap = 0; ap < na; ++ap)
        for (int b = 0; b < nb; ++b)
          for (int aa = 0; aa < na; ++aa) {
            const long col =
                (b * na + aa) + static_cast<long>(bp * na + ap) * cols_ba;
            for (int j = 0; j < s; ++j)
              v(j, col) = rho((b * levels + n0 + j) * na + aa,
                              (bp * levels + m0 + j) * na + ap);
          }
    w.noalias() = eq[aq] * v;
    for (int bp = 0; bp < nb; ++bp)
      for (int ap = 0; ap < na; ++ap)
        for (int b = 0; b < nb; ++b)
          for (int aa = 0; aa < na; ++aa) {
            const long col =
                (b * na + aa) + static_cast<long>(bp * na + ap) * cols_ba;
            for (int j = 0; j < s; ++j)
              rho((b * levels + n0 + j) * na + aa,
                  (bp * levels + m0 + j) * na + ap) = w(j, col);
          }
  }
}

// rho <- U rho U^dag with U block-diagonal over the Hamiltonian components
void apply_components(const SplitPlan& plan, const std::vector<MatrixXcd>& uni,
                      MatrixXcd& rho) {
  const long d = rho.rows();
  MatrixXcd buf, out;
  for (size_t c = 0; c < plan.comps.size(); ++c) {
    const auto& idx = plan.comps[c];
    const int s = static_cast<int>(idx.size());
    if (s == 1) {
      rho.row(idx[0]) *= uni[c](0, 0);
      continue;
    }
    buf.resize(s, d);
    for (int i = 0; i < s; ++i) buf.row(i) = rho.row(idx[i]);
    out.noalias() = uni[c] * buf;
    for (int i = 0; i < s; ++i) rho.row(idx[i]) = out.row(i);
  }
  for (size_t c = 0; c < plan.comps.size(); ++c) {
    const auto& idx = plan.comps[c];
    const int s = static_cast<int>(idx.size());
    if (s == 1) {
      rho.col(idx[0]) *= std::conj(uni[c](0, 0));
      continue;
    }
    buf.resize(d, s);
    for (int i = 0; i < s; ++i) buf.col(i) = rho.col(idx[i]);
    out.noalias() = buf * uni[c].adjoint();
    for (int i = 0; i < s; ++i) rho.col(idx[i]) = out.col(i);
  }
}

void split_strang(SplitPlan& plan, double dt, MatrixXcd& rho) {
  const SplitPrepared& prep = split_prepared(plan, dt);
  for (size_t c = 0; c < plan.chans.size(); ++c)
    apply_ladder(plan.chans[c], prep.chan[c], rho);
  if (!plan.comps.empty()) apply_components(plan, prep.uni, rho);
  for (size_t c = 0; c < plan.chans.size(); ++c)
    apply_ladder(plan.chans[c], prep.chan[c], rho);
}

// Strang steps with doubled-step error control: every eighth step (and any
// rejected one) is advanced as two halves and compared against one full step.
Trajectory split_evolve(const FockSystem& sys, SplitPlan& plan,
                        const DensityMatrix& rho0,
                        const std::vector<double>& sample_times, double rtol) {
  MatrixXcd rho = rho0.rho;
  Trajectory traj;
  traj.max_trace_drift = 0.0;
  const auto emit = [&](double ts) {
    traj.times.push_back(ts);
    traj.states.emplace_back(rho);
    traj.max_trace_drift =
        std::max(traj.max_trace_drift, std::abs(rho.trace().real() - 1.0));
  };
  double t = rho0.time;
  const double span = sample_times.back() - t;
  if (span <= 0.0) {
    for (double ts : sample_times) emit(ts);
    return traj;
  }
  const double tol_rel = std::max(rtol, 1e-13);
  const double rate = sys.rate_scale();
  double h = span;
  if (rate > 0.0) h = std::min(h, 0.25 / rate);
  const double h_floor = span * 1e-12;
  int until_check = 0; // check the very first step
  MatrixXcd probe, saved;
  for (double ts : sample_times) {
    while (t < ts) {
      const bool lands = (ts - t) <= h;
      double step = lands ? (ts - t) : h;
      if (until_check <= 0) {
        saved.swap(rho);
        for (;;) {
          probe = saved;
          split_strang(plan, step, probe);
          rho = saved;
          split_strang(plan, 0.5 * step, rho);
          split_strang(plan, 0.5 * step, rho);
          const double err = (probe - rho).norm() / 3.0;
          const double tol = tol_rel * (1e-12 + rho.norm());
          if (err <= tol) {
            const double grow =
                (err > 0.0) ? std::clamp(0.9 * std::cbrt(tol / err), 1.0, 2.0)
                            : 2.0;
            if (grow >= 1.25) h = std::min(span, std::max(h, step * grow));
            break;
          }
          step *= std::clamp(0.9 * std::cbrt(tol / err), 0.25, 0.9);
          if (step < h_floor)
            throw std::runtime_error(
                "lindblad_evolve: split step size underflow");
          h = step;
        }
        until_check = 8;
      } else {
        split_strang(plan, step, rho);
        --until_check;
      }
      t = (lands && step == ts - t) ? ts : t + step;
    }
    emit(ts);
  }
  return traj;
}

} // namespace

Trajectory lindblad_evolve(const FockSystem& sys, const DensityMatrix& rho0,
                           const std::vector<double>& sample_times,
                           double rtol) {
  const int d = sys.dim();
  validate_density(rho0.rho, d);
  if (sample_times.empty())
    throw std::invalid_argument("lindblad_evolve: no sample times");
  if (!std::is_sorted(sample_times.begin(), sample_times.end()))
    throw std::invalid_argument("lindblad_evolve: sample times must ascend");
  if (sample_times.front() < rho0.time)
    throw std::invalid_argument("lindblad_evolve: samples precede the initial time");

  SplitPlan plan = make_split_plan(sys);
  if (plan.eligible) return split_evolve(sys, plan, rho0, sample_times, rtol);

  const LiouvOps ops = build_ops(sys);
  MatrixXcd db(d, d), tmp(d, d);
  VectorXcd y(static_cast<long>(d) * d);
  Eigen::Map<MatrixXcd>(y.data(), d, d) = rho0.rho;

  Trajectory traj;
  traj.max_trace_drift = 0.0;
  ode::Rhs rhs = [&](double t, const VectorXcd& x, VectorXcd& dx) {
    Eigen::Map<const MatrixXcd> b(x.data(), d, d);
    apply_liouvillian(ops, t, b, db, tmp);
    Eigen::Map<MatrixXcd>(dx.data(), d, d) = db;
  };
  ode::StepControl ctrl;
  ctrl.rtol = rtol;
  ctrl.post_step = [d, &traj](VectorXcd& x) {
    Eigen::Map<MatrixXcd> b(x.data(), d, d);
    b = 0.5 * (b + b.adjoint()).eval();
    const double tr = b.trace().real();
    traj.max_trace_drift = std::max(traj.max_trace_drift, std::abs(tr - 1.0));
    if (tr > 0.0) b /= tr;
  };

  ode::integrate_sampled(
      rhs, y, rho0.time, sample_times,
      [&](double t, const VectorXcd& x) {
        traj.times.push_back(t);
        traj.states.emplace_back(Eigen::Map<const MatrixXcd>(x.data(), d, d));
      },
      ctrl);
  return traj;
}

DensityMatrix steady_state_dm(const FockSystem& sys) {
  if (sys.dissipator_terms().empty())
    throw std::invalid_argument(
        "steady_state_dm: no dissipators, every state is stationary");
  if (sys.has_modulation())
    throw std::invalid_argument(
        "steady_state_dm: modulated Hamiltonian has no stationary state");
  const int d = sys.dim();

  DirectSolveContext ctx;
  if (!build_direct_context(sys, false, ctx)) return steady_by_integration(sys);

  const VectorXd w1 = VectorXd::Constant(d, 1.0 / d);
  VectorXd w2(d);
  for (int r = 0; r < d; ++r) w2[r] = (1.0 + 0.5 * (r + 1.0) / d) / d;
  BorderedLU lu1(ctx, w1);
  BorderedLU lu2(ctx, w2);
  if (!lu1.ok() || !lu2.ok())
    throw std::runtime_error(
        "steady_state_dm: bordered factorization failed; steady space is "
        "degenerate (nullity > 1) or the generator is defective");
  const VectorXcd zero = VectorXcd::Zero(static_cast<long>(d) * d);
  const VectorXcd x1 = lu1.solve_full(zero, 1.0);
  const VectorXcd x2 = lu2.solve_full(zero, 1.0);
  if ((x1 - x2).norm() > 1e-8 * std::max(1.0, x1.norm()))
    throw std::runtime_error(
        "steady_state_dm: independent normalizations disagree; steady space "
        "is degenerate (nullity > 1)");
  return postprocess_steady(ctx, x1);
}

SpectralResult regression_spectrum(const FockSystem& sys,
                                   const SparseOp& observable,
                                   const RegressionOptions& opts) {
  const int d = sys.dim();
  if (observable.rows() != d || observable.cols() != d)
    throw std::invalid_argument("regression_spectrum: observable dimension mismatch");
  if (sys.has_modulation())
    throw std::invalid_argument(
        "regression_spectrum: modulated Hamiltonian has no steady state");

  const DensityMatrix mu = steady_state_dm(sys);
  const complex<double> mean_c = expectation(observable, mu.rho);
  const double mean = mean_c.real();
  MatrixXcd b0 = observable * mu.rho;
  b0 -= mean_c * mu.rho;

  SpectralResult out;
  out.mean = mean;

  if (!opts.use_time_path) {
    DirectSolveContext ctx;
    bool usable = build_direct_context(sys, false, ctx);
    if (usable && static_cast<long>(ctx.keep.size()) <
                      static_cast<long>(d) * d) {
      // Sector solve needs the deviation operator to live in the sector.
      VectorXcd v(static_cast<long>(d) * d);
      Eigen::Map<MatrixXcd>(v.data(), d, d) = b0;
      double outside = 0.0;
      for (long i = 0; i < v.size(); ++i)
        if (ctx.pos[i] < 0) outside = std::max(outside, std::abs(v[i]));
      if (outside > 1e-12 * std::max(1.0, b0.norm()))
        usable = build_direct_context(sys, true, ctx);
    }
    if (usable) {
      VectorXcd rhs(static_cast<long>(d) * d);
      Eigen::Map<MatrixXcd>(rhs.data(), d, d) = -b0;
      BorderedLU lu(ctx, VectorXd::Constant(d, 1.0 / d));
      if (!lu.ok())
        throw std::runtime_error("regression_spectrum: factorization failed");
      const VectorXcd y = lu.solve_full(rhs, 0.0);
      const MatrixXcd ymat =
          Eigen::Map<const MatrixXcd>(y.data(), d, d) / ctx.scale;
      const complex<double> s =
          expectation(observable, ymat) - mean_c * ymat.trace();
      out.noise0 = s.real();
      return out;
    }
  }

  // Two-time correlator integration with an adaptive decay cutoff.
  const LiouvOps ops = build_ops(sys);
  const double rate = sys.rate_scale();
  auto integrand = [&](const MatrixXcd& b) {
    return expectation(observable, b) - mean_c * b.trace();
  };
  const double f0 = std::abs(integrand(b0));
  if (f0 == 0.0) {
    out.noise0 = 0.0;
    return out;
  }

  MatrixXcd db(d, d), tmp(d, d);
  const long dd = static_cast<long>(d) * d;
  VectorXcd y(dd + 1);
  Eigen::Map<MatrixXcd>(y.data(), d, d) = b0;
  y[dd] = 0.0;
  ode::Rhs rhs = [&](double t, const VectorXcd& x, VectorXcd& dx) {
    Eigen::Map<const MatrixXcd> b(x.data(), d, d);
    apply_liouvillian(ops, t, b, db, tmp);
    Eigen::Map<MatrixXcd>(dx.data(), d, d) = db;
    dx[dd] = integrand(b);
  };
  ode::StepControl ctrl;
  ctrl.rtol = opts.rtol;

  const double chunk = 20.0 / rate;
  const double t_max = opts.t_max > 0.0 ? opts.t_max : 2000.0 / rate;
  double t = 0.0;
  int quiet = 0;
  while (quiet < 3) {
    if (t >= t_max)
      throw std::runtime_error(
          "regression_spectrum: correlator has not decayed by t = " +
          std::to_string(t_max) + " s; undamped subspace suspected");
    ode::integrate(rhs, y, t, t + chunk, ctrl);
    t += chunk;
    Eigen::Map<const MatrixXcd> b(y.data(), d, d);
    const MatrixXcd cur = b;
    quiet = std::abs(integrand(cur)) < 1e-12 * f0 ? quiet + 1 : 0;
  }
  out.noise0 = y[dd].real();
  return out;
}

RamseyResult ramsey_probe(const FockSystem& sys, double coupling,
                          const SparseOp& observable,
                          const std::vector<double>& t_grid,
                          const RamseyOptions& opts) {
  const int d = sys.dim();
  if (observable.rows() != d || observable.cols() != d)
    throw std::invalid_argument("ramsey_probe: observable dimension mismatch");
  if (coupling == 0.0)
    throw std::invalid_argument("ramsey_probe: coupling must be nonzero");
  if (t_grid.empty() || !std::is_sorted(t_grid.begin(), t_grid.end()) ||
      t_grid.front() < 0.0)
    throw std::invalid_argument("ramsey_probe: time grid must ascend from t >= 0");
  check_hermitian_term(observable, "ramsey_probe");

  MatrixXcd b0;
  if (opts.initial_rho) {
    validate_density(*opts.initial_rho, d);
    b0 = 0.5 * *opts.initial_rho;
  } else {
    b0 = 0.5 * steady_state_dm(sys).rho;
  }

  const LiouvOps ops = build_ops(sys);
  MatrixXcd db(d, d), tmp(d, d);
  VectorXcd y(static_cast<long>(d) * d);
  Eigen::Map<MatrixXcd>(y.data(), d, d) = b0;
  const complex<double> half = I1 * (0.5 * coupling);
  ode::Rhs rhs = [&](double t, const VectorXcd& x, VectorXcd& dx) {
    Eigen::Map<const MatrixXcd> b(x.data(), d, d);
    apply_liouvillian(ops, t, b, db, tmp);
    tmp.noalias() = observable * b;
    db -= half * tmp;
    tmp.noalias() = b * observable;
    db -= half * tmp;
    Eigen::Map<MatrixXcd>(dx.data(), d, d) = db;
  };
  ode::StepControl ctrl;
  ctrl.rtol = opts.rtol;

  RamseyResult res;
  ode::integrate_sampled(
      rhs, y, 0.0, t_grid,
      [&](double t, const VectorXcd& x) {
        Eigen::Map<const MatrixXcd> b(x.data(), d, d);
        res.times.push_back(t);
        res.signal.push_back(2.0 * b.trace().real());
      },
      ctrl);

  res.fit = fit::fit_cos_exp(res.times, res.signal);
  res.fit_failed = !res.fit.converged;
  res.mean = res.fit.freq / std::abs(coupling);
  res.noise0 = res.fit.decay / (coupling * coupling);
  res.weak_probe_warning =
      opts.rate_scale > 0.0 && std::abs(coupling) > 0.1 * opts.rate_scale;
  return res;
}

PopulationTrace evolve_single_excitation(const SingleExcitationRun& run,
                                         int start_site,
                                         const std::vector<double>& times,
                                         double rtol) {
  const int n = static_cast<int>(run.h_static.rows());
  if (run.h_static.cols() != n || n < 2)
    throw std::invalid_argument("evolve_single_excitation: bad Hamiltonian shape");
  if (run.dot_site < 0 || run.dot_site >= n)
    throw std::invalid_argument("evolve_single_excitation: dot site outside chain");
  if (start_site < 0 || start_site >= n)
    throw std::invalid_argument("evolve_single_excitation: start site outside chain");
  if (times.empty() || !std::is_sorted(times.begin(), times.end()))
    throw std::invalid_argument("evolve_single_excitation: times must ascend");
  if (run.spin != 1 && run.spin != -1)
    throw std::invalid_argument("evolve_single_excitation: spin must be +1 or -1");
  std::vector<double> pulses(run.pulse_times);
  std::sort(pulses.begin(), pulses.end());
  for (double p : pulses)
    if (p < times.front() || p > times.back())
      throw std::invalid_argument(
          "evolve_single_excitation: pulse time " + std::to_string(p) +
          " lies outside the simulation window");

  int spin = run.spin;
  VectorXcd psi = VectorXcd::Zero(n);
  psi[start_site] = 1.0;

  ode::Rhs rhs = [&](double t, const VectorXcd& x, VectorXcd& dx) {
    dx.noalias() = run.h_static * x;
    double drv = 0.0;
    for (const auto& dr : run.drives)
      drv += dr.amplitude * (dr.spin_scaled ? spin : 1) *
             std::cos(dr.freq * t - dr.phase);
    dx[run.dot_site] += drv * x[run.dot_site];
    dx *= -I1;
  };

  PopulationTrace trace;
  trace.populations.resize(static_cast<long>(times.size()), n);
  auto record = [&](double t) {
    trace.times.push_back(t);
    trace.populations.row(static_cast<long>(trace.times.size()) - 1) =
        psi.cwiseAbs2().transpose();
    trace.amplitudes.push_back(psi);
  };
  auto advance = [&](double t0, double t1) {
    if (t1 <= t0) return;
    ode::StepControl ctrl;
    ctrl.rtol = rtol;
    ctrl.initial_dt = 0.02 * (t1 - t0);
    ode::integrate(rhs, psi, t0, t1, ctrl);
  };

  double t_cur = times.front();
  record(t_cur);
  std::size_t pi = 0;
  while (pi < pulses.size() && pulses[pi] <= t_cur) {
    spin = -spin;
    ++pi;
  }
  for (std::size_t ti = 1; ti < times.size(); ++ti) {
    while (pi < pulses.size() && pulses[pi] < times[ti]) {
      advance(t_cur, pulses[pi]);
      t_cur = pulses[pi];
      spin = -spin;
      ++pi;
    }
    advance(t_cur, times[ti]);
    t_cur = times[ti];
    record(t_cur);
    while (pi < pulses.size() && pulses[pi] <= t_cur) {
      spin = -spin;
      ++pi;
    }
  }
  return trace;
}

SwitchDrive make_switch_drive(const chain::TightBinding& tb, double zeta,
                              double r, double drive_over_tunneling) {
  if (tb.n_sites() != 3)
    throw std::invalid_argument("make_switch_drive: needs a three-site chain");
  if (zeta < 0.0)
    throw std::invalid_argument("make_switch_drive: zeta must be nonnegative");
  if (!(drive_over_tunneling > 0.0))
    throw std::invalid_argument("make_switch_drive: drive ratio must be positive");
  const double j12 = tb.tunneling(0, 1);
  if (!(j12 > 0.0))
    throw std::invalid_argument("make_switch_drive: vanishing lead-dot tunneling");

  SwitchDrive drive;
  drive.tunneling = tb.tunneling;
  drive.onsite = tb.effective_onsite();
  const double dwm = drive_over_tunneling * j12;
  drive.nu = 0.5 * dwm;
  // Compensate the static dot shift and park the leads at -nu and +nu.
  const double dj = drive.onsite[1] - drive.onsite[0];
  drive.onsite[0] += dj - 0.5 * dwm;
  drive.onsite[2] += dj + 0.5 * dwm;
  drive.zeta = zeta;
  drive.r = r;
  return drive;
}

SwitchResult switch_scenario(const SwitchDrive& drive,
                             const std::vector<double>& times, double rtol) {
  if (drive.tunneling.rows() != 3 || drive.tunneling.cols() != 3 ||
      drive.onsite.size() != 3)
    throw std::invalid_argument("switch_scenario: needs a three-site chain");
  if (times.size() < 2 || !std::is_sorted(times.begin(), times.end()))
    throw std::invalid_argument("switch_scenario: times must ascend");
  for (double p : drive.pulse_times)
    if (p < times.front() || p > times.back())
      throw std::invalid_argument("switch_scenario: pulse time " +
                                  std::to_string(p) +
                                  " lies outside the simulation window");

  SingleExcitationRun exact;
  exact.h_static = drive.tunneling.cast<complex<double>>();
  exact.h_static += drive.onsite.cast<complex<double>>().asDiagonal();
  exact.dot_site = 1;
  exact.drives = {{drive.zeta * drive.nu, drive.nu, 0.0, false},
                  {drive.zeta * drive.nu * drive.r, drive.nu, 0.0, true}};
  exact.spin = drive.spin;
  exact.pulse_times = drive.pulse_times;
  const PopulationTrace ex = evolve_single_excitation(exact, 0, times, rtol);

  const double j12 = drive.tunneling(0, 1);
  auto j_eff = [&](int s) {
    return j12 * laser::bessel_j(1, drive.zeta * (1.0 + drive.r * s));
  };
  auto propagate = [&](VectorXcd& psi, int s, double dt) {
    // First-sideband picture: resonant leads, opposite bond signs.
    const double je = j_eff(s);
    Eigen::Matrix3d h = Eigen::Matrix3d::Zero();
    h(0, 1) = h(1, 0) = -je;
    h(1, 2) = h(2, 1) = je;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(h);
    const Eigen::Vector3cd phase =
        (-I1 * dt * es.eigenvalues().array()).exp().matrix();
    psi = es.eigenvectors().cast<complex<double>>() *
          (phase.asDiagonal() *
           (es.eigenvectors().transpose().cast<complex<double>>() * psi));
  };

  std::vector<double> pulses(drive.pulse_times);
  std::sort(pulses.begin(), pulses.end());
  VectorXcd psi = VectorXcd::Zero(3);
  psi[0] = 1.0;
  int spin = drive.spin;
  MatrixXd pop_eff(times.size(), 3);
  double t_cur = times.front();
  pop_eff.row(0) = psi.cwiseAbs2().transpose();
  std::size_t pi = 0;
  while (pi < pulses.size() && pulses[pi] <= t_cur) {
    spin = -spin;
    ++pi;
  }
  for (std::size_t ti = 1; ti < times.size(); ++ti) {
    while (pi < pulses.size() && pulses[pi] < times[ti]) {
      propagate(psi, spin, pulses[pi] - t_cur);
      t_cur = pulses[pi];
      spin = -spin;
      ++pi;
    }
    propagate(psi, spin, times[ti] - t_cur);
    t_cur = times[ti];
    pop_eff.row(ti) = psi.cwiseAbs2().transpose();
    while (pi < pulses.size() && pulses[pi] <= t_cur) {
      spin = -spin;
      ++pi;
    }
  }

  SwitchResult res;
  res.times = ex.times;
  res.pop_exact = ex.populations;
  res.pop_effective = pop_eff;
  res.max_population_gap = (res.pop_exact - res.pop_effective).cwiseAbs().maxCoeff();
  res.tunneling_effective = std::abs(j_eff(drive.spin));
  return res;
}

CurrentProbe current_probe_setup(const Eigen::MatrixXd& tunneling,
                                 const BichromaticParams& params) {
  if (tunneling.rows() != 3 || tunneling.cols() != 3)
    throw std::invalid_argument("current_probe_setup: needs a three-site chain");
  const double j12 = std::abs(tunneling(0, 1));
  const double tol = 1e-9;
  auto reject = [](const std::string& what) {
    throw std::invalid_argument("current_probe_setup: constraint violated, " + what);
  };
  if (std::abs(params.zeta1 - constants::pi) > tol)
    reject("zeta1 must equal pi");
  if (std::abs(params.phi1 - 0.5 * constants::pi) > tol)
    reject("phi1 must equal pi/2");
  if (std::abs(params.dw1_minus) > tol * std::max(1.0, j12))
    reject("dw1_minus must vanish");
  if (std::abs(params.phi2) > tol) reject("phi2 must vanish");
  if (std::abs(params.dw2_plus) > tol * std::max(1.0, j12))
    reject("dw2_plus must vanish");
  if (params.zeta2 < 0.0 || params.zeta2 > 0.1)
    reject("zeta2 must lie in [0, 0.1]");

  CurrentProbe probe;
  // First-sideband weight fixed by matching the exact bichromatic dynamics.
  probe.j_pat = j12 * laser::bessel_j(1, constants::pi);
  const complex<double> jp = -I1 * probe.j_pat;
  probe.h_eff = Eigen::MatrixXcd::Zero(3, 3);
  probe.h_eff(0, 1) = jp;
  probe.h_eff(1, 0) = std::conj(jp);
  probe.h_eff(2, 1) = jp;
  probe.h_eff(1, 2) = std::conj(jp);
  probe.current_in = Eigen::MatrixXcd::Zero(3, 3);
  probe.current_in(0, 1) = I1 * jp;
  probe.current_in(1, 0) = std::conj(I1 * jp);
  probe.current_out = Eigen::MatrixXcd::Zero(3, 3);
  probe.current_out(2, 1) = -I1 * jp;
  probe.current_out(1, 2) = std::conj(-I1 * jp);
  probe.lambda_tilde = laser::spin_current_coupling(params.zeta2);
  return probe;
}

SpectralResult fano_factor(const FockSystem& sys, int dot_mode) {
  if (dot_mode < 0 || dot_mode >= sys.n_modes())
    throw std::invalid_argument("fano_factor: dot mode outside the registry");
  const int d = sys.dim();
  SparseOp iin(d, d), iout(d, d);
  bool has_in = false, has_out = false;
  for (const auto& bond : sys.bonds()) {
    if (bond.mode_i != dot_mode && bond.mode_j != dot_mode) continue;
    int other;
    complex<double> c;
    if (bond.mode_j == dot_mode) {
      other = bond.mode_i;
      c = bond.coeff;
    } else {
      other = bond.mode_j;
      c = std::conj(bond.coeff);
    }
    // Flux into the dot carried by the bond c a_other^dag a_dot + h.c.
    const SparseOp x = SparseOp(c * SparseOp(sys.ad(other) * sys.a(dot_mode)));
    const SparseOp flux = SparseOp(I1 * SparseOp(x - SparseOp(x.adjoint())));
    if (other < dot_mode) {
      iin += flux;
      has_in = true;
    } else {
      iout -= flux;
      has_out = true;
    }
  }
  if (!has_in || !has_out)
    throw std::invalid_argument(
        "fano_factor: the dot needs bonds on both sides to define a current");

  const SparseOp isym = SparseOp(0.5 * SparseOp(iin + iout));
  SpectralResult res = regression_spectrum(sys, isym);
  const double floor = 1e-8 * std::max(1.0, sys.rate_scale());
  if (std::abs(res.mean) <= floor)
    throw std::runtime_error(
        "fano_factor: mean current is consistent with zero; the Fano factor "
        "is undefined");
  res.fano = res.noise0 / (2.0 * res.mean);
  return res;
}

} // namespace vibronlab::fock
