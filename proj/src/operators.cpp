#include "otbb/operators.hpp"

#include "otbb/matrix_market.hpp"

#include <cmath>
#include <filesystem>

namespace otbb {

namespace {

double distance_to_line(const Point& x, const Point& p, const Point& q) {
  const Point t = q - p;
  const double len = t.norm();
  if (len == 0.0) return (x - p).norm();
  return std::abs(t.x() * (x.y() - p.y()) - t.y() * (x.x() - p.x())) / len;
}

// Block matrix with `blocks` block rows, block row k holding a*X at block
// column k and b*X at block column k+1.
SpMat bidiagonal_blocks(int blocks, int size, double a, double b) {
  std::vector<Triplet> t;
  t.reserve(2 * std::size_t(blocks) * size);
  for (int k = 0; k < blocks; ++k)
    for (int i = 0; i < size; ++i) {
      t.emplace_back(k * size + i, k * size + i, a);
      t.emplace_back(k * size + i, (k + 1) * size + i, b);
    }
  SpMat M(long(blocks) * size, long(blocks + 1) * size);
  M.setFromTriplets(t.begin(), t.end());
  M.makeCompressed();
  return M;
}

SpMat slice_sums(int slices, int size) {
  std::vector<Triplet> t;
  t.reserve(std::size_t(slices) * size);
  for (int k = 0; k < slices; ++k)
    for (int i = 0; i < size; ++i) t.emplace_back(k, k * size + i, 1.0);
  SpMat E(slices, long(slices) * size);
  E.setFromTriplets(t.begin(), t.end());
  E.makeCompressed();
  return E;
}

}  // namespace

TimeGrid make_time_grid(int K, const TwoLevelMesh& mesh) {
  if (K < 1) throw InputError("number of time steps K must be >= 1");
  TimeGrid g;
  g.K = K;
  g.dt = 1.0 / (K + 1);
  g.n_fine = mesh.fine.num_cells();
  g.n_coarse = mesh.coarse.num_cells();
  g.n = long(g.n_fine) * (K + 1);
  g.m = long(g.n_coarse) * K;
  return g;
}

SpatialOps assemble_spatial(const FvGeometry& mesh) {
  SpatialOps ops;
  const int nc = mesh.num_cells(), ne = mesh.num_edges();
  ops.w = mesh.point_distances;
  ops.e = mesh.edge_lengths;
  std::vector<Triplet> t;
  t.reserve(2 * std::size_t(ne));
  for (int k = 0; k < ne; ++k) {
    if (!(ops.w[k] > 0.0))
      throw GeometryError("zero cell-point distance on edge " + std::to_string(k));
    t.emplace_back(mesh.edges[k].left, k, 1.0);
    t.emplace_back(mesh.edges[k].right, k, -1.0);
  }
  ops.incidence = SpMat(nc, ne);
  ops.incidence.setFromTriplets(t.begin(), t.end());
  ops.incidence.makeCompressed();
  const VecX inv_w = ops.w.cwiseInverse();
  ops.grad = diagonal_matrix<double>(inv_w) * transpose(ops.incidence);
  ops.grad.makeCompressed();
  ops.div = -(ops.incidence * diagonal_matrix<double>(ops.e));
  ops.div.makeCompressed();
  return ops;
}

SpMat edge_average(const FvGeometry& mesh, VecX* lambda) {
  const int ne = mesh.num_edges();
  std::vector<Triplet> t;
  t.reserve(2 * std::size_t(ne));
  VecX lam(ne);
  for (int k = 0; k < ne; ++k) {
    const FvEdge& e = mesh.edges[k];
    const double di = distance_to_line(mesh.cell_points[e.left], e.p, e.q);
    const double dj = distance_to_line(mesh.cell_points[e.right], e.p, e.q);
    // Each cell weighs in with its own half-diamond: the transpose then
    // distributes edge energies consistently to cells.
    lam[k] = (di < 1e-14 && dj < 1e-14) ? 0.5 : di / (di + dj);
    t.emplace_back(k, e.left, lam[k]);
    t.emplace_back(k, e.right, 1.0 - lam[k]);
  }
  SpMat R(ne, mesh.num_cells());
  R.setFromTriplets(t.begin(), t.end());
  R.makeCompressed();
  if (lambda) *lambda = lam;
  return R;
}

ReconOps assemble_recon(const TwoLevelMesh& mesh, const SpatialOps& fine) {
  ReconOps r;
  r.cell_to_edge = edge_average(mesh.fine, &r.lambda);
  r.R_edges = r.cell_to_edge * mesh.injection;
  r.R_edges.makeCompressed();
  const VecX we = fine.w.cwiseProduct(fine.e);
  r.DRecon = transpose(r.R_edges) * diagonal_matrix<double>(we);
  r.DRecon.makeCompressed();
  return r;
}

BlockOps assemble_blocks(const TwoLevelMesh& mesh, const TimeGrid& grid,
                         const SpatialOps& fine) {
  BlockOps b;
  const int K = grid.K;
  b.Dt = bidiagonal_blocks(K, grid.n_coarse, -1.0 / grid.dt, 1.0 / grid.dt);
  b.H = bidiagonal_blocks(K, grid.n_coarse, 0.5, 0.5);
  b.It = repeat_block(mesh.injection, K + 1);
  b.Dx = repeat_block(fine.grad, K + 1);
  b.Divx = repeat_block(fine.div, K + 1);
  b.M_fine = repeat_block(diagonal_matrix<double>(mesh.mass_fine), K + 1);
  b.M_coarse = repeat_block(diagonal_matrix<double>(mesh.mass_coarse), K);
  b.E_sum = slice_sums(K + 1, grid.n_fine);
  b.Ebar_sum = slice_sums(K, grid.n_coarse);
  return b;
}

SpMat assemble_G(const ReconOps& recon, const SpatialOps& fine,
                 const TimeGrid& grid, const VecX& phi) {
  detail::require(phi.size() == grid.n, "assemble_G: phi has wrong length");
  std::vector<SpMat> blocks;
  blocks.reserve(grid.K + 1);
  for (int k = 0; k <= grid.K; ++k) {
    const VecX gk = fine.grad * phi.segment(long(k) * grid.n_fine, grid.n_fine);
    SpMat Gk = recon.DRecon * diagonal_matrix<double>(gk);
    blocks.push_back(std::move(Gk));
  }
  return block_diagonal(blocks);
}

Projector::Projector(VecX coarse_areas, int K)
    : areas_(std::move(coarse_areas)), omega_(areas_.sum()), K_(K) {}

VecX Projector::apply(const VecX& y) const {
  const long nb = areas_.size();
  detail::require(y.size() == nb * K_, "Projector: wrong length");
  VecX out = y;
  for (int k = 0; k < K_; ++k)
    out.segment(k * nb, nb) -= (y.segment(k * nb, nb).sum() / omega_) * areas_;
  return out;
}

VecX Projector::apply_transpose(const VecX& y) const {
  const long nb = areas_.size();
  detail::require(y.size() == nb * K_, "Projector: wrong length");
  VecX out = y;
  for (int k = 0; k < K_; ++k)
    out.segment(k * nb, nb).array() -= areas_.dot(y.segment(k * nb, nb)) / omega_;
  return out;
}

SpMat assemble_projector(const TwoLevelMesh& mesh, const TimeGrid& grid) {
  const int nb = grid.n_coarse;
  const VecX& a = mesh.mass_coarse;
  const double omega = a.sum();
  std::vector<Triplet> t;
  t.reserve(std::size_t(grid.K) * nb * nb);
  for (int k = 0; k < grid.K; ++k)
    for (int i = 0; i < nb; ++i)
      for (int j = 0; j < nb; ++j) {
        const double v = (i == j ? 1.0 : 0.0) - a[i] / omega;
        t.emplace_back(k * nb + i, k * nb + j, v);
      }
  SpMat P(grid.m, grid.m);
  P.setFromTriplets(t.begin(), t.end());
  prune_exact_zeros(P);
  return P;
}

void export_operator(const std::string& dir, const std::string& name,
                     const SpMat& A) {
  std::filesystem::create_directories(dir);
  write_matrix_market(dir + "/" + name + ".mtx", A);
}

}  // namespace otbb
