#include "otbb/precond.hpp"

#include "otbb/errors.hpp"
#include "otbb/krylov.hpp"

#include <chrono>
#include <cmath>

namespace otbb {

namespace {

using Clock = std::chrono::steady_clock;

KrylovResult<double> gmres_amg(const AmgHierarchy<double>& h, const VecX& b,
                               double tol, int max_iterations,
                               int stall_window = 0) {
  const SpMat& A = h.matrix(0);
  auto op = [&A](const VecX& x, VecX& y) { y.noalias() = A * x; };
  auto prec = [&h](const VecX& r, VecX& z) { h.vcycle(r, z); };
  FgmresOptions<double> o;
  o.tol = tol;
  o.max_iterations = max_iterations;
  o.restart = 30;
  o.stall_window = stall_window;
  o.stall_ratio = 0.99;
  return fgmres<double>(op, prec, b, o);
}

VecX repeat(const VecX& v, int count) {
  VecX out(v.size() * count);
  for (int k = 0; k < count; ++k) out.segment(k * v.size(), v.size()) = v;
  return out;
}

// Removes the mass-weighted mean of every fine slice.
void remove_slice_means(VecX& x, const Discretization& d) {
  const int nf = d.grid.n_fine;
  const VecX& mf = d.mesh.mass_fine;
  const double omega = mf.sum();
  for (int j = 0; j <= d.grid.K; ++j) {
    auto s = x.segment(long(j) * nf, nf);
    s.array() -= mf.dot(s) / omega;
  }
}

// Mean-free solve of one singular Laplacian block.
KrylovResult<double> solve_singular_block(const AmgHierarchy<double>& h,
                                          VecX b, double tol, int max_it) {
  b.array() -= b.mean();
  auto res = amg_solve<double>(h, b, tol, max_it, AmgMode::spd, true);
  res.x.array() -= res.x.mean();
  return res;
}

SpMat stack2x2(const SpMat& A11, const SpMat& A12, const SpMat& A21,
               const SpMat& A22) {
  const long n = A11.rows(), m = A22.rows();
  std::vector<Triplet> t;
  t.reserve(A11.nonZeros() + A12.nonZeros() + A21.nonZeros() + A22.nonZeros());
  auto add = [&t](const SpMat& X, long r0, long c0) {
    for (int i = 0; i < X.outerSize(); ++i)
      for (SpMat::InnerIterator it(X, i); it; ++it)
        t.emplace_back(int(r0 + it.row()), int(c0 + it.col()), it.value());
  };
  add(A11, 0, 0);
  add(A12, 0, n);
  add(A21, n, 0);
  add(A22, n, n);
  SpMat M(n + m, n + m);
  M.setFromTriplets(t.begin(), t.end());
  prune_exact_zeros(M);
  return M;
}

}  // namespace

std::string to_string(PrecondKind kind) {
  switch (kind) {
    case PrecondKind::hss: return "hss";
    case PrecondKind::primal_schur: return "primal";
    case PrecondKind::simple: return "simple";
    case PrecondKind::bb: return "bb";
  }
  return "unknown";
}

PrecondKind parse_precond_kind(const std::string& name) {
  if (name == "hss") return PrecondKind::hss;
  if (name == "primal" || name == "primal_schur") return PrecondKind::primal_schur;
  if (name == "simple") return PrecondKind::simple;
  if (name == "bb") return PrecondKind::bb;
  throw InputError("unknown preconditioner '" + name +
                   "' (expected hss, primal, simple or bb)");
}

void remove_global_mean(VecX& dphi, const Discretization& d) {
  const int nf = d.grid.n_fine;
  const VecX& mf = d.mesh.mass_fine;
  double weighted = 0.0;
  for (int j = 0; j <= d.grid.K; ++j) weighted += mf.dot(dphi.segment(long(j) * nf, nf));
  dphi.array() -= weighted / (mf.sum() * (d.grid.K + 1));
}

// ---------------------------------------------------------------------------
// Original formulation

SaddleFormulation::SaddleFormulation(const SaddleSystem& sys,
                                     const Discretization& d)
    : sys_(sys), d_(d), Bt_(transpose(sys.B)), n_(sys.A.rows()), m_(sys.B.rows()) {}

VecX SaddleFormulation::rhs() const {
  VecX b(n_ + m_);
  b << sys_.f, sys_.g_tilde;
  return b;
}

void SaddleFormulation::apply_operator(const VecX& x, VecX& y) const {
  const auto x1 = x.head(n_);
  const auto x2 = x.tail(m_);
  y.resize(n_ + m_);
  y.head(n_) = sys_.A * x1 + Bt_ * x2;
  y.tail(m_) = sys_.B * x1 - sys_.C.cwiseProduct(x2);
}

void SaddleFormulation::recover(const VecX& x, VecX& dphi, VecX& drho) {
  dphi = x.head(n_);
  remove_global_mean(dphi, d_);
  drho = x.tail(m_);
}

// ---------------------------------------------------------------------------
// Primal Schur complement

PrimalSchurPreconditioner::PrimalSchurPreconditioner(const SaddleSystem& sys,
                                                     const Discretization& d,
                                                     const PrecondOptions& opt)
    : SaddleFormulation(sys, d), opt_(opt) {
  const auto t0 = Clock::now();
  inv_C_ = sys.C.cwiseInverse();
  S_ = sys.A + SpMat(Bt_ * diagonal_matrix<double>(inv_C_) * sys.B);
  prune_exact_zeros(S_);
  amg_ = AmgHierarchy<double>(S_);
  setup_seconds_ = detail::seconds_since(t0);
}

void PrimalSchurPreconditioner::apply(const VecX& r, VecX& z) {
  ++applications_;
  const VecX r2c = r.tail(m_).cwiseProduct(inv_C_);
  VecX t1 = r.head(n_) + Bt_ * r2c;
  // S is singular on the global constant; its range is the mean-free space.
  t1.array() -= t1.mean();
  auto res = amg_solve<double>(amg_, t1, opt_.primal_inner_tol,
                               opt_.inner_max_iterations, AmgMode::spd, true);
  inner_iterations_ += res.stats.outer_iterations;
  if (!res.stats.converged) ++flagged_events_;
  z.resize(n_ + m_);
  z.head(n_) = res.x;
  z.tail(m_) = (sys_.B * res.x).cwiseProduct(inv_C_) - r2c;
}

// ---------------------------------------------------------------------------
// SIMPLE

SimplePreconditioner::SimplePreconditioner(const SaddleSystem& sys,
                                           const Discretization& d,
                                           const PrecondOptions& opt)
    : SaddleFormulation(sys, d), opt_(opt) {
  const auto t0 = Clock::now();
  const VecX diagA = matrix_diagonal(sys.A);
  if (!(diagA.minCoeff() > 0.0))
    throw NumericalError("SIMPLE: diag(A) must be positive");
  inv_diag_A_ = diagA.cwiseInverse();
  // Solve with -S~ = C + B Ahat^{-1} B^T, which is symmetric positive definite.
  SpMat neg = SpMat(sys.B * diagonal_matrix<double>(inv_diag_A_) * Bt_) +
              diagonal_matrix<double>(sys.C);
  prune_exact_zeros(neg);
  S_tilde_ = -neg;
  amg_ = AmgHierarchy<double>(neg);
  setup_seconds_ = detail::seconds_since(t0);
}

void SimplePreconditioner::apply(const VecX& r, VecX& z) {
  ++applications_;
  const VecX r1 = r.head(n_);
  const VecX t2 = r.tail(m_) - sys_.B * inv_diag_A_.cwiseProduct(r1);
  auto res = amg_solve<double>(amg_, VecX(-t2), opt_.simple_inner_tol,
                               opt_.inner_max_iterations, AmgMode::spd);
  inner_iterations_ += res.stats.outer_iterations;
  if (!res.stats.converged) ++flagged_events_;
  z.resize(n_ + m_);
  z.tail(m_) = res.x;
  z.head(n_) = inv_diag_A_.cwiseProduct(r1 - Bt_ * res.x);
}

// ---------------------------------------------------------------------------
// HSS

HssPreconditioner::HssPreconditioner(const SaddleSystem& sys,
                                     const Discretization& d,
                                     const PrecondOptions& opt)
    : sys_(sys), d_(d), opt_(opt), n_(sys.A.rows()), m_(sys.B.rows()) {
  if (!(opt.hss_alpha > 0.0)) throw InputError("HSS: alpha must be positive");
  const auto t0 = Clock::now();
  const double alpha = opt.hss_alpha;
  D1_ = matrix_diagonal(sys.A).cwiseAbs();
  for (Eigen::Index i = 0; i < D1_.size(); ++i)
    D1_[i] = D1_[i] > 0.0 ? 1.0 / std::sqrt(D1_[i]) : 1.0;
  D2_ = sys.C.cwiseAbs();
  for (Eigen::Index i = 0; i < D2_.size(); ++i)
    D2_[i] = D2_[i] > 0.0 ? 1.0 / std::sqrt(D2_[i]) : 1.0;
  C_hat_ = D2_.cwiseAbs2().cwiseProduct(sys.C);

  const int nf = d.grid.n_fine;
  A_hat_blocks_.reserve(sys.A_blocks.size());
  block_amg_.reserve(sys.A_blocks.size());
  for (std::size_t k = 0; k < sys.A_blocks.size(); ++k) {
    const auto Dk = diagonal_matrix<double>(VecX(D1_.segment(long(k) * nf, nf)));
    SpMat Ak = Dk * sys.A_blocks[k] * Dk;
    Ak.makeCompressed();
    block_amg_.emplace_back(SpMat(Ak + alpha * identity_matrix<double>(nf)));
    A_hat_blocks_.push_back(std::move(Ak));
  }
  A_hat_ = block_diagonal(A_hat_blocks_);
  B_hat_ = diagonal_matrix<double>(D2_) * sys.B * diagonal_matrix<double>(D1_);
  prune_exact_zeros(B_hat_);
  Bt_hat_ = transpose(B_hat_);
  dual_ = alpha * identity_matrix<double>(m_) + SpMat(B_hat_ * Bt_hat_) / alpha;
  prune_exact_zeros(dual_);
  dual_amg_ = AmgHierarchy<double>(dual_);
  setup_seconds_ = detail::seconds_since(t0);
}

VecX HssPreconditioner::rhs() const {
  VecX b(n_ + m_);
  b << D1_.cwiseProduct(sys_.f), -D2_.cwiseProduct(sys_.g_tilde);
  return b;
}

double HssPreconditioner::rhs_scale() const {
  const double base =
      std::sqrt(sys_.f.squaredNorm() + sys_.g_tilde.squaredNorm());
  return base > 0.0 ? rhs().norm() / base : 1.0;
}

void HssPreconditioner::apply_operator(const VecX& x, VecX& y) const {
  const auto x1 = x.head(n_);
  const auto x2 = x.tail(m_);
  y.resize(n_ + m_);
  y.head(n_) = A_hat_ * x1 + Bt_hat_ * x2;
  y.tail(m_) = C_hat_.cwiseProduct(x2) - B_hat_ * x1;
}

void HssPreconditioner::apply(const VecX& r, VecX& z) {
  ++applications_;
  const double alpha = opt_.hss_alpha;
  const VecX r1 = r.head(n_);
  // K_alpha^{-1} through the dual system (alpha I + B^ B^T / alpha).
  const VecX rhs2 = r.tail(m_) + B_hat_ * r1 / alpha;
  auto dual = gmres_amg(dual_amg_, rhs2, opt_.hss_inner_tol, opt_.inner_max_iterations);
  inner_iterations_ += dual.stats.outer_iterations;
  if (!dual.stats.converged) ++flagged_events_;
  const VecX y1 = (r1 - Bt_hat_ * dual.x) / alpha;

  // H_alpha^{-1}: shifted Laplacian blocks and a diagonal.
  const int nf = d_.grid.n_fine;
  z.resize(n_ + m_);
  for (std::size_t k = 0; k < block_amg_.size(); ++k) {
    const VecX bk = y1.segment(long(k) * nf, nf);
    auto res = amg_solve<double>(block_amg_[k], bk, opt_.hss_inner_tol,
                                 opt_.inner_max_iterations, AmgMode::spd);
    z.segment(long(k) * nf, nf) = res.x;
  }
  z.tail(m_) = dual.x.cwiseQuotient((C_hat_.array() + alpha).matrix());
}

void HssPreconditioner::recover(const VecX& x, VecX& dphi, VecX& drho) {
  dphi = D1_.cwiseProduct(x.head(n_));
  remove_global_mean(dphi, d_);
  drho = D2_.cwiseProduct(x.tail(m_));
}

SpMat HssPreconditioner::scaled_matrix() const {
  return stack2x2(A_hat_, Bt_hat_, -B_hat_, diagonal_matrix<double>(C_hat_));
}

SpMat HssPreconditioner::H_alpha() const {
  const double a = opt_.hss_alpha;
  SpMat zero12(n_, m_), zero21(m_, n_);
  return stack2x2(SpMat(A_hat_ + a * identity_matrix<double>(n_)), zero12, zero21,
                  diagonal_matrix<double>(VecX((C_hat_.array() + a).matrix())));
}

SpMat HssPreconditioner::K_alpha() const {
  const double a = opt_.hss_alpha;
  return stack2x2(a * identity_matrix<double>(n_), Bt_hat_, -B_hat_,
                  a * identity_matrix<double>(m_));
}

// ---------------------------------------------------------------------------
// BB

SpMat assemble_coarse_laplacian(const PrimalDualState& st,
                                const Discretization& d, bool time_averaged) {
  const auto& ops = d.coarse_ops;
  const VecX we = ops.w.cwiseProduct(ops.e);
  const SpMat grad_t = transpose(ops.grad);
  std::vector<SpMat> blocks;
  blocks.reserve(d.grid.K);
  for (int k = 1; k <= d.grid.K; ++k) {
    const VecX rk = time_averaged
                        ? VecX(0.5 * (rho_level(st, d, k) + rho_level(st, d, k - 1)))
                        : rho_level(st, d, k);
    const VecX edge_rho = d.coarse_recon * rk;
    SpMat Lk = grad_t * diagonal_matrix<double>(we.cwiseProduct(edge_rho)) * ops.grad;
    Lk.makeCompressed();
    blocks.push_back(std::move(Lk));
  }
  return block_diagonal(blocks);
}

SpMat assemble_B_tilde(const PrimalDualState& st, const Discretization& d) {
  const auto& g = d.grid;
  const auto& b = d.blocks;
  const auto& coarse = d.mesh.coarse;
  const int nt = coarse.num_cells(), ne = coarse.num_edges();
  const VecX we = d.coarse_ops.w.cwiseProduct(d.coarse_ops.e);
  const SpMat Rt = transpose(d.coarse_recon);
  const VecX inv_mbar = d.mesh.mass_coarse.cwiseInverse();
  std::vector<SpMat> blocks;
  blocks.reserve(g.K + 1);
  for (int j = 0; j <= g.K; ++j) {
    const VecX gj = d.fine_ops.grad * st.phi.segment(long(j) * g.n_fine, g.n_fine);
    // Normal derivative on a coarse edge: mean over its two fine halves.
    VecX dn(ne);
    for (int k = 0; k < ne; ++k)
      dn[k] = 0.5 * (gj[3 * nt + 2 * k] + gj[3 * nt + 2 * k + 1]);
    blocks.push_back(SpMat(diagonal_matrix<double>(inv_mbar) * Rt *
                           diagonal_matrix<double>(we.cwiseProduct(dn)) *
                           d.coarse_ops.grad));
  }
  const SpMat transport = block_diagonal(blocks) * transpose(b.H);
  SpMat Bt = b.M_fine * b.It * SpMat(transpose(b.Dt) - transport);
  prune_exact_zeros(Bt);
  return Bt;
}

BbPreconditioner::BbPreconditioner(const SaddleSystem& sys,
                                   const PrimalDualState& st,
                                   const Discretization& d,
                                   const PrecondOptions& opt)
    : sys_(sys), d_(d), opt_(opt), n_(sys.A.rows()), m_(sys.B.rows()),
      Bt_(transpose(sys.B)) {
  const auto t0 = Clock::now();
  mbar_ = repeat(d.mesh.mass_coarse, d.grid.K);
  inv_mbar_ = mbar_.cwiseInverse();
  L_coarse_ = assemble_coarse_laplacian(st, d, opt.bb_time_averaged_laplacian);
  B_tilde_ = assemble_B_tilde(st, d);
  const VecX inv_mf = repeat(d.mesh.mass_fine, d.grid.K + 1).cwiseInverse();
  Q_ = SpMat(diagonal_matrix<double>(VecX(sys.C.cwiseProduct(inv_mbar_))) * L_coarse_) +
       SpMat(sys.B * diagonal_matrix<double>(inv_mf) * B_tilde_);
  prune_exact_zeros(Q_);
  block_amg_.reserve(sys.A_blocks.size());
  for (const auto& Ak : sys.A_blocks) block_amg_.emplace_back(Ak);
  schur_amg_ = AmgHierarchy<double>(Q_);
  dlambda_ = VecX::Zero(d.grid.K);
  setup_seconds_ = detail::seconds_since(t0);
}

VecX BbPreconditioner::rhs() const {
  VecX b(n_ + m_);
  b << sys_.f, d_.projector.apply(sys_.g_tilde);
  return b;
}

void BbPreconditioner::apply_operator(const VecX& x, VecX& y) const {
  const VecX x1 = x.head(n_);
  const VecX px2 = d_.projector.apply_transpose(x.tail(m_));
  y.resize(n_ + m_);
  y.head(n_) = sys_.A * x1 + Bt_ * px2;
  y.tail(m_) = d_.projector.apply(VecX(sys_.B * x1 - sys_.C.cwiseProduct(px2)));
}

void BbPreconditioner::apply(const VecX& r, VecX& z) {
  ++applications_;
  // Schur approximation: S^{-1} r2 ~ -Mbar^{-1} Ã Q^{-1} r2.
  auto schur = gmres_amg(schur_amg_, VecX(r.tail(m_)), opt_.bb_schur_tol,
                         opt_.inner_max_iterations, opt_.bb_schur_stall_window);
  inner_iterations_ += schur.stats.outer_iterations;
  if (schur.stats.stalled || !schur.stats.converged) ++flagged_events_;
  const VecX y = d_.projector.apply_transpose(
      VecX(-inv_mbar_.cwiseProduct(L_coarse_ * schur.x)));
  const VecX b = r.head(n_) - Bt_ * d_.projector.apply_transpose(y);
  const int nf = d_.grid.n_fine;
  z.resize(n_ + m_);
  for (std::size_t k = 0; k < block_amg_.size(); ++k) {
    auto res = solve_singular_block(block_amg_[k], b.segment(long(k) * nf, nf),
                                    opt_.bb_block_tol, opt_.inner_max_iterations);
    z.segment(long(k) * nf, nf) = res.x;
  }
  z.tail(m_) = y;
}

void BbPreconditioner::recover(const VecX& x, VecX& dphi, VecX& drho) {
  const auto& g = d_.grid;
  VecX dphi_tilde = x.head(n_);
  remove_slice_means(dphi_tilde, d_);
  drho = d_.projector.apply_transpose(x.tail(m_));
  const VecX slack = sys_.g_tilde - sys_.B * dphi_tilde + sys_.C.cwiseProduct(drho);
  const double omega = d_.mesh.coarse.domain_area;
  dlambda_ = d_.blocks.Ebar_sum * slack / omega;
  dphi = dphi_tilde;
  double shift = 0.0;
  for (int j = 1; j <= g.K; ++j) {
    shift += g.dt * dlambda_[j - 1];
    dphi.segment(long(j) * g.n_fine, g.n_fine).array() += shift;
  }
}

// ---------------------------------------------------------------------------

std::unique_ptr<SaddlePreconditioner> make_preconditioner(
    PrecondKind kind, const SaddleSystem& sys, const PrimalDualState& st,
    const Discretization& d, const PrecondOptions& opt) {
  switch (kind) {
    case PrecondKind::hss: return std::make_unique<HssPreconditioner>(sys, d, opt);
    case PrecondKind::primal_schur:
      return std::make_unique<PrimalSchurPreconditioner>(sys, d, opt);
    case PrecondKind::simple: return std::make_unique<SimplePreconditioner>(sys, d, opt);
    case PrecondKind::bb: return std::make_unique<BbPreconditioner>(sys, st, d, opt);
  }
  throw InputError("unknown preconditioner kind");
}

PrimalSchurTerms primal_schur_terms(const SaddleSystem& sys,
                                    const PrimalDualState& st,
                                    const Discretization& d) {
  const auto& b = d.blocks;
  const auto invC = diagonal_matrix<double>(VecX(sys.C.cwiseInverse()));
  const SpMat T = b.Dt * transpose(b.It) * b.M_fine;
  const SpMat G = assemble_G(d.recon, d.fine_ops, d.grid, st.phi);
  const SpMat X = b.H * G * b.Dx;
  // Dx^T = -Divx diag(|w||e|)^{-1}, blockwise.
  const VecX inv_we =
      repeat(VecX(d.fine_ops.w.cwiseProduct(d.fine_ops.e).cwiseInverse()),
             d.grid.K + 1);
  PrimalSchurTerms out;
  out.S_tt = transpose(T) * invC * T;
  out.S_xx = SpMat(-b.Divx) * diagonal_matrix<double>(inv_we) * transpose(G) *
             transpose(b.H) * invC * X;
  out.S_tx = transpose(T) * invC * X;
  return out;
}

// ---------------------------------------------------------------------------
// Commutator diagnostic

namespace {

// Compactly supported C^4 bump in space, vanishing at both time ends.
struct TestFunction {
  Point center{0.5, 0.5};
  double radius = 0.3;
  double value(double t, const Point& x) const {
    const double s2 = (x - center).squaredNorm() / (radius * radius);
    if (s2 >= 1.0) return 0.0;
    return std::sin(M_PI * t) * std::pow(1.0 - s2, 5);
  }
  Point gradient(double t, const Point& x) const {
    const double s2 = (x - center).squaredNorm() / (radius * radius);
    if (s2 >= 1.0) return Point::Zero();
    return std::sin(M_PI * t) * 5.0 * std::pow(1.0 - s2, 4) *
           (-2.0 / (radius * radius)) * (x - center);
  }
};

struct FieldDerivatives {
  double value, dt, laplacian;
  Point grad;
  Eigen::Matrix2d hessian;
};

FieldDerivatives differentiate(const SpaceTimeField& f, double t, const Point& x) {
  const double h1 = 1e-5, h2 = 1e-4;
  const Point ex(1.0, 0.0), ey(0.0, 1.0);
  FieldDerivatives d;
  d.value = f(t, x);
  d.dt = (f(t + h1, x) - f(t - h1, x)) / (2 * h1);
  d.grad = Point((f(t, x + h1 * ex) - f(t, x - h1 * ex)) / (2 * h1),
                 (f(t, x + h1 * ey) - f(t, x - h1 * ey)) / (2 * h1));
  const double fxx = (f(t, x + h2 * ex) - 2 * d.value + f(t, x - h2 * ex)) / (h2 * h2);
  const double fyy = (f(t, x + h2 * ey) - 2 * d.value + f(t, x - h2 * ey)) / (h2 * h2);
  const double fxy = (f(t, x + h2 * (ex + ey)) - f(t, x + h2 * (ex - ey)) -
                      f(t, x - h2 * (ex - ey)) + f(t, x - h2 * (ex + ey))) /
                     (4 * h2 * h2);
  d.hessian << fxx, fxy, fxy, fyy;
  d.laplacian = fxx + fyy;
  return d;
}

// Smooth weights for the weak norm: cos(a pi x) cos(b pi y) times 1 or t.
double weak_norm(const VecX& r, const Discretization& d) {
  const auto& g = d.grid;
  const auto& anchors = d.mesh.fine.cell_points;
  double best = 0.0;
  for (int a = 0; a <= 2; ++a)
    for (int b = 0; b <= 2; ++b)
      for (int p = 0; p <= 1; ++p) {
        double acc = 0.0;
        for (int j = 0; j <= g.K; ++j) {
          const double t = (j + 0.5) * g.dt;
          const double tw = p == 0 ? 1.0 : t;
          for (int i = 0; i < g.n_fine; ++i) {
            const Point& x = anchors[i];
            acc += g.dt * tw * std::cos(a * M_PI * x.x()) *
                   std::cos(b * M_PI * x.y()) * r[long(j) * g.n_fine + i];
          }
        }
        best = std::max(best, std::abs(acc));
      }
  return best;
}

}  // namespace

std::vector<CommutatorLevel> commutator_residual(
    const SpaceTimeField& rho, const SpaceTimeField& phi, const CoarseMesh& base,
    const std::vector<std::pair<int, int>>& levels) {
  const TestFunction u;
  std::vector<CommutatorLevel> out;
  for (const auto& [refine_levels, K] : levels) {
    const Discretization d = make_discretization(refine(base, refine_levels), K);
    const auto& g = d.grid;
    const auto& centers = d.mesh.coarse.cell_points;
    const auto& anchors = d.mesh.fine.cell_points;
    auto sample_coarse = [&](double t) {
      VecX v(g.n_coarse);
      for (int i = 0; i < g.n_coarse; ++i) v[i] = rho(t, centers[i]);
      return v;
    };
    PrimalDualState st;
    st.rho_begin = sample_coarse(0.0);
    st.rho_end = sample_coarse(1.0);
    st.rho.resize(g.m);
    for (int k = 1; k <= g.K; ++k)
      st.rho.segment(long(k - 1) * g.n_coarse, g.n_coarse) = sample_coarse(k * g.dt);
    st.s = VecX::Ones(g.m);
    st.phi.resize(g.n);
    for (int j = 0; j <= g.K; ++j)
      for (int i = 0; i < g.n_fine; ++i)
        st.phi[long(j) * g.n_fine + i] = phi((j + 0.5) * g.dt, anchors[i]);
    st.lambda = VecX::Zero(g.K);
    st.mu = 1.0;

    const SaddleSystem sys = assemble_saddle(st, d);
    const SpMat L = assemble_coarse_laplacian(st, d, false);
    const SpMat Bt = assemble_B_tilde(st, d);
    VecX z(g.m);
    for (int k = 1; k <= g.K; ++k)
      for (int i = 0; i < g.n_coarse; ++i)
        z[long(k - 1) * g.n_coarse + i] = u.value(k * g.dt, centers[i]);
    const VecX inv_mbar = repeat(d.mesh.mass_coarse, g.K).cwiseInverse();
    const VecX inv_mf = repeat(d.mesh.mass_fine, g.K + 1).cwiseInverse();
    const VecX lhs = transpose(sys.B) * inv_mbar.cwiseProduct(L * z);
    const VecX rhs = sys.A * inv_mf.cwiseProduct(Bt * z);
    const VecX residual = lhs - rhs;

    // Corrections -M div(q), q = -(d_t rho + div(rho grad phi)) grad u
    // + 2 rho Hess(phi) grad u, as TPFA fluxes through fine edges.
    const auto& fine = d.mesh.fine;
    VecX corr(g.n);
    VecX qn(fine.num_edges());
    for (int j = 0; j <= g.K; ++j) {
      const double t = (j + 0.5) * g.dt;
      for (int k = 0; k < fine.num_edges(); ++k) {
        const FvEdge& e = fine.edges[k];
        const Point x = 0.5 * (e.p + e.q);
        Point nrm = anchors[e.right] - anchors[e.left];
        nrm.normalize();
        const Point gu = u.gradient(t, x);
        if (gu.squaredNorm() == 0.0) {
          qn[k] = 0.0;
          continue;
        }
        const auto r = differentiate(rho, t, x);
        const auto p = differentiate(phi, t, x);
        const double cont = r.dt + r.grad.dot(p.grad) + r.value * p.laplacian;
        const Point q = -cont * gu + 2.0 * r.value * (p.hessian * gu);
        qn[k] = q.dot(nrm);
      }
      corr.segment(long(j) * g.n_fine, g.n_fine) = d.fine_ops.div * qn;
    }

    CommutatorLevel lv;
    lv.refine = refine_levels;
    lv.K = K;
    const double lhs_norm = weak_norm(lhs, d);
    lv.residual = lhs_norm > 0.0 ? weak_norm(residual, d) / lhs_norm : 0.0;
    lv.correction = lhs_norm > 0.0 ? weak_norm(corr, d) / lhs_norm : 0.0;
    const double corr_norm = weak_norm(corr, d);
    lv.mismatch = corr_norm > 0.0 ? weak_norm(VecX(residual - corr), d) / corr_norm
                                  : weak_norm(VecX(residual - corr), d);
    out.push_back(lv);
  }
  return out;
}

}  // namespace otbb
