#pragma once

#include "otbb/errors.hpp"
#include "otbb/sparse.hpp"

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace otbb {

using Point = Eigen::Vector2d;

/// Internal edge between cells `left` < `right`, with endpoints p and q.
struct FvEdge {
  int left = -1;
  int right = -1;
  Point p;
  Point q;
};

/// TPFA geometry shared by both mesh levels.
struct FvGeometry {
  std::vector<Point> cell_points;  // circumcenters (coarse) or anchors (fine)
  std::vector<FvEdge> edges;       // internal edges only
  VecX edge_lengths;               // |e|
  VecX point_distances;            // |w|
  VecX cell_areas;                 // |c|

  int num_cells() const { return int(cell_points.size()); }
  int num_edges() const { return int(edges.size()); }
};

struct CoarseMesh : FvGeometry {
  std::vector<Point> vertices;
  std::vector<std::array<int, 3>> cells;  // counter-clockwise
  double domain_area = 0.0;

  const std::vector<Point>& circumcenters() const { return cell_points; }
};

struct FineMesh : FvGeometry {
  // Quad at vertex v of triangle T: v, midpoint(v, next), c(T), midpoint(prev, v).
  std::vector<std::array<Point, 4>> quads;
  std::vector<int> parent_map;  // quad -> coarse triangle; quad 3t+i sits at vertex i
};

struct TwoLevelMesh {
  CoarseMesh coarse;
  FineMesh fine;
  SpMat injection;   // N_T x N_Tbar, I[i, parent(i)] = 1
  VecX mass_coarse;  // diagonal of Mbar
  VecX mass_fine;    // diagonal of M
};

struct EdgeCheck {
  double angle_error = 0.0;  // radians between anchor segment and edge normal
  double distance = 0.0;     // |w|
  bool pass = false;
};

struct AdmissibilityReport {
  std::vector<EdgeCheck> edges;
  double diameter = 0.0;
  double max_angle_error = 0.0;
  double min_distance = 0.0;
  bool all_pass = true;
};

inline constexpr double kOrthogonalityTol = 1e-8;     // radians
inline constexpr double kDistanceRelativeTol = 1e-12;  // times diameter

/// Builds all coarse geometric fields from vertices and CCW triangles.
/// Throws GeometryError on degenerate, clockwise, non-acute, duplicate-vertex
/// or non-manifold input.
CoarseMesh build_coarse(std::vector<Point> vertices,
                        std::vector<std::array<int, 3>> cells);

/// Reads the text format: `nv nt`, nv lines `x y`, nt lines `i j k`.
CoarseMesh load_mesh(const std::string& path);
CoarseMesh parse_mesh(const std::string& text);
std::string format_mesh(const CoarseMesh& mesh);

/// The 8-triangle acute triangulation of the unit square.
CoarseMesh embedded_unit_square();

/// Splits every triangle into four through its edge midpoints.
CoarseMesh refine(const CoarseMesh& mesh);
CoarseMesh refine(const CoarseMesh& mesh, int levels);

FineMesh build_fine(const CoarseMesh& mesh);
SpMat injection_matrix(const FineMesh& fine, int num_coarse_cells);
TwoLevelMesh build_two_level(CoarseMesh coarse);

AdmissibilityReport validate_admissibility(const FvGeometry& mesh);

Point circumcenter(const Point& a, const Point& b, const Point& c);
double signed_area(const Point& a, const Point& b, const Point& c);
double polygon_area(const std::array<Point, 4>& quad);

/// Stable FNV-1a hash over vertex coordinates and connectivity.
std::uint64_t mesh_hash(const CoarseMesh& mesh);

}  // namespace otbb
