#pragma once

#include "otbb/mesh.hpp"
#include "otbb/sparse.hpp"

#include <string>
#include <vector>

namespace otbb {

struct SpatialOps {
  SpMat incidence;  // N_cells x N_edges, +1 on the left cell, -1 on the right
  SpMat grad;       // diag(|w|)^{-1} incidence^T
  SpMat div;        // -incidence diag(|e|)
  VecX w;           // |w|
  VecX e;           // |e|
};

struct ReconOps {
  SpMat cell_to_edge;  // fine cells -> fine edges, weights (lambda, 1 - lambda)
  SpMat R_edges;       // cell_to_edge * I: coarse cells -> fine edges
  SpMat DRecon;        // R_edges^T diag(|w||e|)
  VecX lambda;         // weight of the left cell per edge
};

struct TimeGrid {
  int K = 1;          // interior density levels
  double dt = 0.5;    // 1 / (K + 1)
  int n_fine = 0;     // N_T
  int n_coarse = 0;   // N_Tbar
  long n = 0;         // N_T (K + 1)
  long m = 0;         // N_Tbar K
};

TimeGrid make_time_grid(int K, const TwoLevelMesh& mesh);

SpatialOps assemble_spatial(const FvGeometry& mesh);

/// Averaging from cells to their shared edges, weighting each cell by its
/// distance to the edge (half-diamond fractions).
SpMat edge_average(const FvGeometry& mesh, VecX* lambda = nullptr);

ReconOps assemble_recon(const TwoLevelMesh& mesh, const SpatialOps& fine);

/// Time-slice independent block operators.
struct BlockOps {
  SpMat Dt;        // m x N_Tbar (K+1): rows k = (-I, +I) / dt at levels (k, k+1)
  SpMat H;         // m x N_Tbar (K+1): rows k = (I, I) / 2
  SpMat It;        // n x N_Tbar (K+1): blockdiag(I)
  SpMat Dx;        // blockdiag(grad), K+1 blocks
  SpMat Divx;      // blockdiag(div), K+1 blocks
  SpMat M_fine;    // blockdiag(M), K+1 blocks
  SpMat M_coarse;  // blockdiag(Mbar), K blocks
  SpMat E_sum;     // (K+1) x n, all-ones rows per slice
  SpMat Ebar_sum;  // K x m
};

BlockOps assemble_blocks(const TwoLevelMesh& mesh, const TimeGrid& grid,
                         const SpatialOps& fine);

/// blockdiag(G_k), G_k = DRecon diag(grad phi^k); phi has K+1 slices.
SpMat assemble_G(const ReconOps& recon, const SpatialOps& fine,
                 const TimeGrid& grid, const VecX& phi);

/// Per-slice zero-mean projector P = I - (1/|Omega|) Mbar Ebar^T Ebar,
/// applied as a rank-structured correction.
class Projector {
 public:
  Projector() = default;
  Projector(VecX coarse_areas, int K);

  VecX apply(const VecX& y) const;            // P y
  VecX apply_transpose(const VecX& y) const;  // P^T y
  int K() const { return K_; }

 private:
  VecX areas_;
  double omega_ = 0.0;
  int K_ = 0;
};

/// Explicit P for inspection and tests; dense within each slice.
SpMat assemble_projector(const TwoLevelMesh& mesh, const TimeGrid& grid);

/// Writes a named operator as `<dir>/<name>.mtx`.
void export_operator(const std::string& dir, const std::string& name,
                     const SpMat& A);

}  // namespace otbb
