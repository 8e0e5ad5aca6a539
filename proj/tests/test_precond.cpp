#include "fixtures.hpp"

#include "otbb/precond.hpp"

#include <doctest.h>

#include <Eigen/Eigenvalues>

using namespace otbb;
using namespace otbb::testing;

namespace {

struct Setup {
  Discretization d;
  PrimalDualState st;
  SaddleSystem sys;
};

Setup make_setup(unsigned seed, int refine_levels = 1, int K = 4, double mu = 0.1) {
  Setup s{small_discretization(refine_levels, K), {}, {}};
  std::mt19937 rng(seed);
  s.st = random_state(s.d, rng, mu);
  // Potentials of IP iterates are smooth; large random ones make Q indefinite.
  s.st.phi *= 0.05;
  renormalize(s.st, s.d);
  s.sys = assemble_saddle(s.st, s.d);
  return s;
}

PrecondOptions tight_options() {
  PrecondOptions o;
  o.hss_inner_tol = o.primal_inner_tol = o.simple_inner_tol = 1e-12;
  o.bb_schur_tol = o.bb_block_tol = 1e-12;
  o.bb_schur_stall_window = 0;
  o.inner_max_iterations = 2000;
  return o;
}

const PrecondKind kAllKinds[] = {PrecondKind::hss, PrecondKind::primal_schur,
                                 PrecondKind::simple, PrecondKind::bb};

}  // namespace

TEST_CASE("preconditioner names round trip") {
  for (PrecondKind k : kAllKinds) CHECK(parse_precond_kind(to_string(k)) == k);
  CHECK(parse_precond_kind("primal") == PrecondKind::primal_schur);
  CHECK_THROWS_AS(parse_precond_kind("ilu"), InputError);
}

TEST_CASE("HSS factors split the scaled skew form") {
  const Setup s = make_setup(31);
  PrecondOptions o;
  o.hss_alpha = 0.7;
  const HssPreconditioner p(s.sys, s.d, o);
  const SpMat Ahat = p.scaled_matrix();
  const SpMat twoalpha = 2.0 * o.hss_alpha * identity_matrix<double>(Ahat.rows());
  const SpMat sum = SpMat(SpMat(p.H_alpha() + p.K_alpha()) - twoalpha);
  CHECK(max_abs(SpMat(sum - Ahat)) <= 1e-12 * max_abs(Ahat));
  // The shifted skew part K_alpha - alpha I is skew-symmetric.
  const SpMat skew = SpMat(p.K_alpha() - 0.5 * twoalpha);
  CHECK(max_abs(SpMat(skew + transpose(skew))) <= 1e-14 * max_abs(skew));
}

TEST_CASE("primal Schur complement decomposes into time, transport and cross terms") {
  const Setup s = make_setup(32);
  const PrimalSchurPreconditioner p(s.sys, s.d, PrecondOptions{});
  const PrimalSchurTerms t = primal_schur_terms(s.sys, s.st, s.d);
  const SpMat rebuilt =
      SpMat(SpMat(SpMat(s.sys.A + t.S_tt) + t.S_xx) + SpMat(t.S_tx + transpose(t.S_tx)));
  CHECK(max_abs(SpMat(rebuilt - p.S())) <= 1e-12 * max_abs(p.S()));
  CHECK(max_abs(SpMat(p.S() - transpose(p.S()))) <= 1e-12 * max_abs(p.S()));
}

TEST_CASE("SIMPLE approximate Schur complement is negative definite") {
  const Setup s = make_setup(33);
  const SimplePreconditioner p(s.sys, s.d, PrecondOptions{});
  const Eigen::MatrixXd S = Eigen::MatrixXd(p.S_tilde());
  CHECK((S - S.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * S.cwiseAbs().maxCoeff());
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
  CHECK(es.eigenvalues().maxCoeff() < 0.0);
}

TEST_CASE("projected constraint rows are orthogonal to per-slice constants") {
  const Setup s = make_setup(34, 1, 5);
  std::mt19937 rng(1);
  const VecX y = random_vector(s.d.grid.m, rng);
  const VecX v = transpose(s.sys.B) * s.d.projector.apply_transpose(y);
  const int nf = s.d.grid.n_fine;
  for (int k = 0; k <= s.d.grid.K; ++k)
    CHECK(std::abs(v.segment(long(k) * nf, nf).sum()) <= 1e-12 * v.cwiseAbs().maxCoeff());
}

TEST_CASE("BB Schur operator has the assembled block structure") {
  const Setup s = make_setup(35);
  const BbPreconditioner p(s.sys, s.st, s.d, PrecondOptions{});
  const SpMat& At = p.A_tilde();
  CHECK(At.rows() == s.d.grid.m);
  CHECK(max_abs(SpMat(At - transpose(At))) <= 1e-13 * max_abs(At));
  CHECK((At * VecX::Ones(At.cols())).cwiseAbs().maxCoeff() <= 1e-12 * max_abs(At));
  CHECK(p.B_tilde().rows() == s.d.grid.n);
  CHECK(p.B_tilde().cols() == s.d.grid.m);
  CHECK(p.schur_matrix().rows() == s.d.grid.m);
}

TEST_CASE("preconditioners are linear maps at tight inner tolerances") {
  const Setup s = make_setup(36);
  std::mt19937 rng(2);
  for (PrecondKind k : kAllKinds) {
    CAPTURE(to_string(k));
    auto p = make_preconditioner(k, s.sys, s.st, s.d, tight_options());
    const long len = p->rhs().size();
    VecX r1 = random_vector(len, rng), r2 = random_vector(len, rng);
    // The projected formulation acts on residuals in the range of its operator.
    if (k == PrecondKind::bb) {
      auto in_range = [&](VecX& r) {
        VecX y(len);
        p->apply_operator(r, y);
        r = y;
      };
      in_range(r1);
      in_range(r2);
    }
    VecX z1, z2, z12;
    p->apply(r1, z1);
    p->apply(r2, z2);
    p->apply(VecX(2.0 * r1 - 3.0 * r2), z12);
    CHECK(rel_diff(z12, VecX(2.0 * z1 - 3.0 * z2)) <= 1e-8);
  }
}

TEST_CASE("every formulation recovers a solution of the saddle system") {
  const Setup s = make_setup(37);
  const long n = s.sys.A.rows();
  for (PrecondKind k : kAllKinds) {
    CAPTURE(to_string(k));
    auto p = make_preconditioner(k, s.sys, s.st, s.d, tight_options());
    auto op = [&](const VecX& x, VecX& y) { p->apply_operator(x, y); };
    auto pc = [&](const VecX& r, VecX& z) { p->apply(r, z); };
    FgmresOptions<double> o;
    o.tol = 1e-11;
    o.max_iterations = 300;
    const auto res = fgmres<double>(op, pc, p->rhs(), o);
    CHECK(res.stats.converged);
    // Exact inner solves make the primal factorization exact.
    if (k == PrecondKind::primal_schur) CHECK(res.stats.outer_iterations <= 3);
    VecX dphi, drho;
    p->recover(res.x, dphi, drho);
    REQUIRE(dphi.size() == n);
    const VecX r1 = s.sys.A * dphi + transpose(s.sys.B) * drho - s.sys.f;
    const VecX r2 = s.sys.B * dphi - s.sys.C.cwiseProduct(drho) - s.sys.g_tilde;
    const double scale = std::sqrt(s.sys.f.squaredNorm() + s.sys.g_tilde.squaredNorm());
    CHECK(std::sqrt(r1.squaredNorm() + r2.squaredNorm()) <= 1e-8 * scale);
  }
}

TEST_CASE("global mean removal leaves a mass-orthogonal update") {
  const Discretization d = small_discretization(1, 3);
  std::mt19937 rng(6);
  VecX dphi = random_vector(d.grid.n, rng);
  remove_global_mean(dphi, d);
  const int nf = d.grid.n_fine;
  double mass = 0.0;
  for (int k = 0; k <= d.grid.K; ++k) mass += d.mesh.mass_fine.dot(dphi.segment(long(k) * nf, nf));
  CHECK(std::abs(mass) <= 1e-13 * dphi.norm());
}
