#pragma once

#include "otbb/mesh.hpp"
#include "otbb/operators.hpp"
#include "otbb/sparse.hpp"

#include <vector>

namespace otbb {

/// Mesh pair, time grid and every state-independent operator.
struct Discretization {
  TwoLevelMesh mesh;
  TimeGrid grid;
  SpatialOps fine_ops;
  SpatialOps coarse_ops;
  ReconOps recon;
  SpMat coarse_recon;  // Rbar: coarse cells -> coarse edges
  BlockOps blocks;
  SpMat time_part;     // Dt It^T M: the phi-derivative of the time term of F_rho
  Projector projector;
};

Discretization make_discretization(CoarseMesh coarse, int K);

/// Slices are stored contiguously: phi has K+1 slices of N_T values, rho and
/// s have K slices of N_Tbar values. Time level k of rho is slice k-1;
/// levels 0 and K+1 are the boundary densities.
struct PrimalDualState {
  VecX phi;
  VecX rho;
  VecX s;
  VecX lambda;  // K values; increments of the per-slice shift (BB formulation)
  double mu = 1.0;
  VecX rho_begin;
  VecX rho_end;
};

/// Uniform density with the boundary mass, s = mu / rho, phi = 0.
PrimalDualState initial_state(const Discretization& d, const VecX& rho_begin,
                              const VecX& rho_end, double mu);

/// rho at level k = 0..K+1 (boundary data at both ends).
VecX rho_level(const PrimalDualState& st, const Discretization& d, int k);

/// Reconstructed edge density R((rho^k + rho^{k-1}) / 2), k = 1..K+1.
VecX edge_density(const PrimalDualState& st, const Discretization& d, int k);

VecX residual_continuity(const PrimalDualState& st, const Discretization& d);
VecX residual_hamilton_jacobi(const PrimalDualState& st, const Discretization& d);
VecX residual_complementarity(const PrimalDualState& st);

/// (F_phi; F_rho; F_s).
VecX full_residual(const PrimalDualState& st, const Discretization& d);

struct SaddleSystem {
  std::vector<SpMat> A_blocks;  // A_k = -div diag(rho_tilde^k) grad
  SpMat A;
  SpMat B;       // time_part + H G Dx
  VecX C;        // diagonal of Mbar diag(s) diag(rho)^{-1}
  VecX f, g, h;  // -F_phi, -F_rho, -F_s
  VecX g_tilde;  // g - Mbar diag(rho)^{-1} h
  double scaling_norm = 0.0;  // ||(f; g; h)||
  VecX rho, s;   // linearization point
};

SaddleSystem assemble_saddle(const PrimalDualState& st, const Discretization& d);

/// Full Newton Jacobian [[A, B^T, 0], [B, 0, Mbar], [0, diag(s), diag(rho)]].
SpMat assemble_jacobian(const SaddleSystem& sys, const Discretization& d);

/// Saddle matrix [[A, B^T], [B, -C]].
SpMat assemble_saddle_matrix(const SaddleSystem& sys);

VecX recover_slack(const SaddleSystem& sys, const VecX& drho);

/// Largest alpha in (0, 1] keeping rho + alpha drho and s + alpha ds above
/// tau times their current values.
double step_length(const VecX& rho, const VecX& s, const VecX& drho,
                   const VecX& ds, double tau);

/// Rescales each rho slice to the mass of rho_begin.
void renormalize(PrimalDualState& st, const Discretization& d);

/// (1/2) sum_k dt phi^k^T A_k phi^k with the state's edge densities.
double transport_cost(const PrimalDualState& st, const Discretization& d);

}  // namespace otbb
