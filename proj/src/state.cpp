#include "otbb/state.hpp"

#include "otbb/errors.hpp"

#include <algorithm>
#include <cmath>

namespace otbb {

Discretization make_discretization(CoarseMesh coarse, int K) {
  Discretization d;
  d.mesh = build_two_level(std::move(coarse));
  d.grid = make_time_grid(K, d.mesh);
  d.fine_ops = assemble_spatial(d.mesh.fine);
  d.coarse_ops = assemble_spatial(d.mesh.coarse);
  d.recon = assemble_recon(d.mesh, d.fine_ops);
  d.coarse_recon = edge_average(d.mesh.coarse);
  d.blocks = assemble_blocks(d.mesh, d.grid, d.fine_ops);
  d.time_part = d.blocks.Dt * transpose(d.blocks.It) * d.blocks.M_fine;
  prune_exact_zeros(d.time_part);
  d.projector = Projector(d.mesh.mass_coarse, K);
  return d;
}

PrimalDualState initial_state(const Discretization& d, const VecX& rho_begin,
                              const VecX& rho_end, double mu) {
  const auto& g = d.grid;
  if (rho_begin.size() != g.n_coarse || rho_end.size() != g.n_coarse)
    throw InputError("boundary densities have the wrong length");
  PrimalDualState st;
  st.mu = mu;
  st.rho_begin = rho_begin;
  st.rho_end = rho_end;
  const double mass = d.mesh.mass_coarse.dot(rho_begin);
  if (!(mass > 0.0)) throw InputError("boundary density has no mass");
  st.rho = VecX::Constant(g.m, mass / d.mesh.coarse.domain_area);
  st.s = VecX::Constant(g.m, mu).cwiseQuotient(st.rho);
  st.phi = VecX::Zero(g.n);
  st.lambda = VecX::Zero(g.K);
  return st;
}

VecX rho_level(const PrimalDualState& st, const Discretization& d, int k) {
  const int nb = d.grid.n_coarse;
  if (k == 0) return st.rho_begin;
  if (k == d.grid.K + 1) return st.rho_end;
  return st.rho.segment(long(k - 1) * nb, nb);
}

VecX edge_density(const PrimalDualState& st, const Discretization& d, int k) {
  return d.recon.R_edges * (0.5 * (rho_level(st, d, k) + rho_level(st, d, k - 1)));
}

VecX residual_continuity(const PrimalDualState& st, const Discretization& d) {
  const auto& g = d.grid;
  const int nf = g.n_fine;
  VecX F(g.n);
  for (int k = 1; k <= g.K + 1; ++k) {
    const VecX drho = (rho_level(st, d, k) - rho_level(st, d, k - 1)) / g.dt;
    const VecX flux = edge_density(st, d, k).cwiseProduct(
        d.fine_ops.grad * st.phi.segment(long(k - 1) * nf, nf));
    F.segment(long(k - 1) * nf, nf) =
        -d.mesh.mass_fine.cwiseProduct(d.mesh.injection * drho) -
        d.fine_ops.div * flux;
  }
  return F;
}

VecX residual_hamilton_jacobi(const PrimalDualState& st,
                              const Discretization& d) {
  const auto& g = d.grid;
  const int nf = g.n_fine, nb = g.n_coarse;
  const SpMat It_T = transpose(d.mesh.injection);
  VecX F(g.m);
  for (int k = 1; k <= g.K; ++k) {
    const VecX phi_k = st.phi.segment(long(k - 1) * nf, nf);
    const VecX phi_k1 = st.phi.segment(long(k) * nf, nf);
    const VecX gk = d.fine_ops.grad * phi_k;
    const VecX gk1 = d.fine_ops.grad * phi_k1;
    F.segment(long(k - 1) * nb, nb) =
        It_T * d.mesh.mass_fine.cwiseProduct((phi_k1 - phi_k) / g.dt) +
        0.25 * (d.recon.DRecon * (gk.cwiseAbs2() + gk1.cwiseAbs2())) +
        d.mesh.mass_coarse.cwiseProduct(st.s.segment(long(k - 1) * nb, nb));
  }
  return F;
}

VecX residual_complementarity(const PrimalDualState& st) {
  return (st.rho.cwiseProduct(st.s).array() - st.mu).matrix();
}

VecX full_residual(const PrimalDualState& st, const Discretization& d) {
  const VecX a = residual_continuity(st, d);
  const VecX b = residual_hamilton_jacobi(st, d);
  const VecX c = residual_complementarity(st);
  VecX F(a.size() + b.size() + c.size());
  F << a, b, c;
  return F;
}

SaddleSystem assemble_saddle(const PrimalDualState& st, const Discretization& d) {
  const auto& g = d.grid;
  if (!(st.rho.minCoeff() > 0.0) || !(st.s.minCoeff() > 0.0))
    throw NumericalError("assemble_saddle: rho and s must be strictly positive");
  SaddleSystem sys;
  sys.rho = st.rho;
  sys.s = st.s;
  const SpMat grad_t = transpose(d.fine_ops.grad);
  const VecX we = d.fine_ops.w.cwiseProduct(d.fine_ops.e);
  sys.A_blocks.reserve(g.K + 1);
  for (int k = 1; k <= g.K + 1; ++k) {
    // -div diag(r) grad = grad^T diag(|w||e| r) grad, symmetric by construction.
    const VecX r = edge_density(st, d, k);
    SpMat Ak = grad_t * diagonal_matrix<double>(we.cwiseProduct(r)) * d.fine_ops.grad;
    Ak.makeCompressed();
    sys.A_blocks.push_back(std::move(Ak));
  }
  sys.A = block_diagonal(sys.A_blocks);
  const SpMat G = assemble_G(d.recon, d.fine_ops, g, st.phi);
  sys.B = d.time_part + SpMat(d.blocks.H * G * d.blocks.Dx);
  prune_exact_zeros(sys.B);

  VecX mbar(g.m);
  for (int k = 0; k < g.K; ++k)
    mbar.segment(long(k) * g.n_coarse, g.n_coarse) = d.mesh.mass_coarse;
  sys.C = mbar.cwiseProduct(st.s).cwiseQuotient(st.rho);
  sys.f = -residual_continuity(st, d);
  sys.g = -residual_hamilton_jacobi(st, d);
  sys.h = -residual_complementarity(st);
  sys.g_tilde = sys.g - mbar.cwiseProduct(sys.h).cwiseQuotient(st.rho);
  sys.scaling_norm = std::sqrt(sys.f.squaredNorm() + sys.g.squaredNorm() +
                               sys.h.squaredNorm());
  return sys;
}

SpMat assemble_jacobian(const SaddleSystem& sys, const Discretization& d) {
  const long n = sys.A.rows(), m = sys.B.rows();
  std::vector<Triplet> t;
  t.reserve(sys.A.nonZeros() + 2 * sys.B.nonZeros() + 3 * m);
  for (int i = 0; i < sys.A.outerSize(); ++i)
    for (SpMat::InnerIterator it(sys.A, i); it; ++it)
      t.emplace_back(int(it.row()), int(it.col()), it.value());
  for (int i = 0; i < sys.B.outerSize(); ++i)
    for (SpMat::InnerIterator it(sys.B, i); it; ++it) {
      t.emplace_back(int(n + it.row()), int(it.col()), it.value());
      t.emplace_back(int(it.col()), int(n + it.row()), it.value());
    }
  const int nb = d.grid.n_coarse;
  for (long i = 0; i < m; ++i) {
    t.emplace_back(int(n + i), int(n + m + i), d.mesh.mass_coarse[i % nb]);
    t.emplace_back(int(n + m + i), int(n + i), sys.s[i]);
    t.emplace_back(int(n + m + i), int(n + m + i), sys.rho[i]);
  }
  SpMat J(n + 2 * m, n + 2 * m);
  J.setFromTriplets(t.begin(), t.end());
  prune_exact_zeros(J);
  return J;
}

SpMat assemble_saddle_matrix(const SaddleSystem& sys) {
  const long n = sys.A.rows(), m = sys.B.rows();
  std::vector<Triplet> t;
  t.reserve(sys.A.nonZeros() + 2 * sys.B.nonZeros() + m);
  for (int i = 0; i < sys.A.outerSize(); ++i)
    for (SpMat::InnerIterator it(sys.A, i); it; ++it)
      t.emplace_back(int(it.row()), int(it.col()), it.value());
  for (int i = 0; i < sys.B.outerSize(); ++i)
    for (SpMat::InnerIterator it(sys.B, i); it; ++it) {
      t.emplace_back(int(n + it.row()), int(it.col()), it.value());
      t.emplace_back(int(it.col()), int(n + it.row()), it.value());
    }
  for (long i = 0; i < m; ++i) t.emplace_back(int(n + i), int(n + i), -sys.C[i]);
  SpMat J(n + m, n + m);
  J.setFromTriplets(t.begin(), t.end());
  prune_exact_zeros(J);
  return J;
}

VecX recover_slack(const SaddleSystem& sys, const VecX& drho) {
  return (sys.h - sys.s.cwiseProduct(drho)).cwiseQuotient(sys.rho);
}

double step_length(const VecX& rho, const VecX& s, const VecX& drho,
                   const VecX& ds, double tau) {
  double alpha = 1.0;
  auto limit = [&](const VecX& x, const VecX& dx) {
    for (Eigen::Index i = 0; i < x.size(); ++i)
      if (dx[i] < 0.0) alpha = std::min(alpha, (1.0 - tau) * x[i] / -dx[i]);
  };
  limit(rho, drho);
  limit(s, ds);
  return alpha;
}

void renormalize(PrimalDualState& st, const Discretization& d) {
  const int nb = d.grid.n_coarse;
  const double target = d.mesh.mass_coarse.dot(st.rho_begin);
  for (int k = 0; k < d.grid.K; ++k) {
    auto slice = st.rho.segment(long(k) * nb, nb);
    const double mass = d.mesh.mass_coarse.dot(slice);
    if (!(mass > 0.0))
      throw NumericalError("renormalize: nonpositive mass in slice " +
                           std::to_string(k + 1));
    slice *= target / mass;
  }
}

double transport_cost(const PrimalDualState& st, const Discretization& d) {
  const auto& g = d.grid;
  const int nf = g.n_fine;
  const VecX we = d.fine_ops.w.cwiseProduct(d.fine_ops.e);
  double cost = 0.0;
  for (int k = 1; k <= g.K + 1; ++k) {
    const VecX gk = d.fine_ops.grad * st.phi.segment(long(k - 1) * nf, nf);
    cost += 0.5 * g.dt * we.cwiseProduct(edge_density(st, d, k)).dot(gk.cwiseAbs2());
  }
  return cost;
}

}  // namespace otbb
