#include "otbb/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <utility>

namespace otbb {

namespace {

// cos of the largest admissible angle; right angles must be rejected.
constexpr double kAcuteCosTol = 1e-12;

double bounding_diameter(const std::vector<Point>& pts) {
  if (pts.empty()) return 0.0;
  Point lo = pts.front(), hi = pts.front();
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

std::string cell_label(int t) { return "triangle " + std::to_string(t); }

void fill_edge_measures(FvGeometry& g) {
  const int ne = g.num_edges();
  g.edge_lengths.resize(ne);
  g.point_distances.resize(ne);
  for (int k = 0; k < ne; ++k) {
    const FvEdge& e = g.edges[k];
    g.edge_lengths[k] = (e.q - e.p).norm();
    g.point_distances[k] = (g.cell_points[e.left] - g.cell_points[e.right]).norm();
  }
}

void require_admissible(const FvGeometry& g, const char* level) {
  const AdmissibilityReport rep = validate_admissibility(g);
  if (rep.all_pass) return;
  for (int k = 0; k < int(rep.edges.size()); ++k) {
    if (rep.edges[k].pass) continue;
    std::ostringstream msg;
    msg << level << " mesh not TPFA-admissible at edge " << k << " (cells "
        << g.edges[k].left << ", " << g.edges[k].right
        << "): |w| = " << rep.edges[k].distance
        << ", angle error = " << rep.edges[k].angle_error;
    throw GeometryError(msg.str());
  }
}

}  // namespace

double signed_area(const Point& a, const Point& b, const Point& c) {
  return 0.5 * ((b.x() - a.x()) * (c.y() - a.y()) -
                (b.y() - a.y()) * (c.x() - a.x()));
}

Point circumcenter(const Point& a, const Point& b, const Point& c) {
  const Point ab = b - a, ac = c - a;
  const double d = 2.0 * (ab.x() * ac.y() - ab.y() * ac.x());
  const double ab2 = ab.squaredNorm(), ac2 = ac.squaredNorm();
  return a + Point((ac.y() * ab2 - ab.y() * ac2) / d,
                   (ab.x() * ac2 - ac.x() * ab2) / d);
}

double polygon_area(const std::array<Point, 4>& quad) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) {
    const Point& p = quad[i];
    const Point& q = quad[(i + 1) % 4];
    s += p.x() * q.y() - q.x() * p.y();
  }
  return 0.5 * s;
}

CoarseMesh build_coarse(std::vector<Point> vertices,
                        std::vector<std::array<int, 3>> cells) {
  CoarseMesh m;
  m.vertices = std::move(vertices);
  m.cells = std::move(cells);
  const int nv = int(m.vertices.size());
  const int nt = int(m.cells.size());
  if (nt == 0) throw GeometryError("mesh has no triangles");

  {
    std::set<std::pair<double, double>> seen;
    for (int v = 0; v < nv; ++v)
      if (!seen.emplace(m.vertices[v].x(), m.vertices[v].y()).second)
        throw GeometryError("duplicate vertex " + std::to_string(v));
  }

  m.cell_points.resize(nt);
  m.cell_areas.resize(nt);
  for (int t = 0; t < nt; ++t) {
    const auto& c = m.cells[t];
    for (int i = 0; i < 3; ++i)
      if (c[i] < 0 || c[i] >= nv)
        throw GeometryError(cell_label(t) + " references a missing vertex");
    if (c[0] == c[1] || c[1] == c[2] || c[0] == c[2])
      throw GeometryError(cell_label(t) + " repeats a vertex");
    const Point &a = m.vertices[c[0]], &b = m.vertices[c[1]],
                &d = m.vertices[c[2]];
    const double area = signed_area(a, b, d);
    if (!(area > 0.0))
      throw GeometryError(cell_label(t) +
                          " is degenerate or not counter-clockwise");
    const std::array<Point, 3> p{a, b, d};
    for (int i = 0; i < 3; ++i) {
      const Point u = p[(i + 1) % 3] - p[i], w = p[(i + 2) % 3] - p[i];
      if (!(u.dot(w) > kAcuteCosTol * u.norm() * w.norm()))
        throw GeometryError(cell_label(t) + " is not strictly acute at vertex " +
                            std::to_string(c[i]));
    }
    m.cell_areas[t] = area;
    m.cell_points[t] = circumcenter(a, b, d);
  }
  m.domain_area = m.cell_areas.sum();

  // Edges in first-encounter order; an edge seen twice becomes internal.
  std::map<std::pair<int, int>, int> first_owner;
  std::map<std::pair<int, int>, int> edge_index;
  std::set<std::pair<int, int>> directed;
  for (int t = 0; t < nt; ++t) {
    for (int i = 0; i < 3; ++i) {
      const int a = m.cells[t][i], b = m.cells[t][(i + 1) % 3];
      if (!directed.emplace(a, b).second)
        throw GeometryError("edge (" + std::to_string(a) + ", " +
                            std::to_string(b) +
                            ") has inconsistent orientation or is non-manifold");
      const auto key = std::minmax(a, b);
      auto it = first_owner.find(key);
      if (it == first_owner.end()) {
        first_owner.emplace(key, t);
        continue;
      }
      if (edge_index.count(key))
        throw GeometryError("edge (" + std::to_string(key.first) + ", " +
                            std::to_string(key.second) +
                            ") shared by more than two triangles");
      edge_index.emplace(key, m.num_edges());
      FvEdge e;
      e.left = std::min(it->second, t);
      e.right = std::max(it->second, t);
      e.p = m.vertices[key.first];
      e.q = m.vertices[key.second];
      m.edges.push_back(e);
    }
  }
  fill_edge_measures(m);
  require_admissible(m, "coarse");
  return m;
}

CoarseMesh parse_mesh(const std::string& text) {
  std::istringstream in(text);
  long nv = 0, nt = 0;
  if (!(in >> nv >> nt) || nv < 3 || nt < 1)
    throw ParseError("mesh header must be `nv nt` with nv >= 3, nt >= 1");
  std::vector<Point> v(nv);
  for (long i = 0; i < nv; ++i) {
    double x = 0, y = 0;
    if (!(in >> x >> y) || !std::isfinite(x) || !std::isfinite(y))
      throw ParseError("bad vertex line " + std::to_string(i + 2));
    v[i] = Point(x, y);
  }
  std::vector<std::array<int, 3>> c(nt);
  for (long t = 0; t < nt; ++t) {
    long a = 0, b = 0, d = 0;
    if (!(in >> a >> b >> d))
      throw ParseError("bad triangle line " + std::to_string(nv + t + 2));
    c[t] = {int(a), int(b), int(d)};
  }
  std::string extra;
  if (in >> extra) throw ParseError("trailing content after triangle list");
  return build_coarse(std::move(v), std::move(c));
}

CoarseMesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open mesh file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_mesh(ss.str());
}

std::string format_mesh(const CoarseMesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  out << mesh.vertices.size() << ' ' << mesh.cells.size() << '\n';
  for (const auto& p : mesh.vertices) out << p.x() << ' ' << p.y() << '\n';
  for (const auto& c : mesh.cells)
    out << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  return out.str();
}

CoarseMesh embedded_unit_square() {
  // Corners, one point on the bottom and top sides, two interior points.
  // Largest angle is about 86.8 degrees.
  std::vector<Point> v{{0.0, 0.0},  {1.0, 0.0},  {1.0, 1.0},  {0.0, 1.0},
                       {0.53, 0.0}, {0.5, 1.0},  {0.45, 0.23}, {0.55, 0.23}};
  std::vector<std::array<int, 3>> c{{0, 4, 6}, {4, 7, 6}, {4, 1, 7}, {1, 2, 7},
                                    {2, 5, 7}, {5, 6, 7}, {5, 3, 6}, {3, 0, 6}};
  return build_coarse(std::move(v), std::move(c));
}

CoarseMesh refine(const CoarseMesh& mesh) {
  std::vector<Point> v = mesh.vertices;
  std::map<std::pair<int, int>, int> mid;
  auto midpoint = [&](int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = mid.find(key);
    if (it != mid.end()) return it->second;
    const int id = int(v.size());
    v.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    mid.emplace(key, id);
    return id;
  };
  std::vector<std::array<int, 3>> c;
  c.reserve(4 * mesh.cells.size());
  for (const auto& t : mesh.cells) {
    const int ab = midpoint(t[0], t[1]);
    const int bc = midpoint(t[1], t[2]);
    const int ca = midpoint(t[2], t[0]);
    c.push_back({t[0], ab, ca});
    c.push_back({ab, t[1], bc});
    c.push_back({ca, bc, t[2]});
    c.push_back({ab, bc, ca});
  }
  return build_coarse(std::move(v), std::move(c));
}

CoarseMesh refine(const CoarseMesh& mesh, int levels) {
  CoarseMesh m = mesh;
  for (int l = 0; l < levels; ++l) m = refine(m);
  return m;
}

FineMesh build_fine(const CoarseMesh& mesh) {
  FineMesh f;
  const int nt = mesh.num_cells();
  f.quads.resize(3 * nt);
  f.cell_points.resize(3 * nt);
  f.cell_areas.resize(3 * nt);
  f.parent_map.resize(3 * nt);
  for (int t = 0; t < nt; ++t) {
    const Point& c = mesh.cell_points[t];
    std::array<Point, 3> v;
    for (int i = 0; i < 3; ++i) v[i] = mesh.vertices[mesh.cells[t][i]];
    for (int i = 0; i < 3; ++i) {
      const int q = 3 * t + i;
      const Point& vn = v[(i + 1) % 3];
      const Point& vp = v[(i + 2) % 3];
      f.quads[q] = {v[i], 0.5 * (v[i] + vn), c, 0.5 * (vp + v[i])};
      f.cell_points[q] = 0.5 * (v[i] + c);
      f.cell_areas[q] = polygon_area(f.quads[q]);
      f.parent_map[q] = t;
    }
  }
  // Midpoint-circumcenter segments, three per triangle.
  for (int t = 0; t < nt; ++t) {
    for (int i = 0; i < 3; ++i) {
      const int j = (i + 1) % 3;
      FvEdge e;
      e.left = std::min(3 * t + i, 3 * t + j);
      e.right = std::max(3 * t + i, 3 * t + j);
      e.p = 0.5 * (mesh.vertices[mesh.cells[t][i]] + mesh.vertices[mesh.cells[t][j]]);
      e.q = mesh.cell_points[t];
      f.edges.push_back(e);
    }
  }
  // Two halves of every coarse internal edge.
  auto local_index = [&](int t, int vertex) {
    for (int i = 0; i < 3; ++i)
      if (mesh.cells[t][i] == vertex) return i;
    throw GeometryError("vertex not found in adjacent triangle");
  };
  auto vertex_id = [&](int t, const Point& p) {
    for (int i = 0; i < 3; ++i)
      if (mesh.vertices[mesh.cells[t][i]] == p) return mesh.cells[t][i];
    throw GeometryError("edge endpoint not found in adjacent triangle");
  };
  for (const FvEdge& ce : mesh.edges) {
    const Point mid = 0.5 * (ce.p + ce.q);
    for (const Point& end : {ce.p, ce.q}) {
      const int vid = vertex_id(ce.left, end);
      const int a = 3 * ce.left + local_index(ce.left, vid);
      const int b = 3 * ce.right + local_index(ce.right, vid);
      FvEdge e;
      e.left = std::min(a, b);
      e.right = std::max(a, b);
      e.p = end;
      e.q = mid;
      f.edges.push_back(e);
    }
  }
  fill_edge_measures(f);
  require_admissible(f, "fine");
  return f;
}

SpMat injection_matrix(const FineMesh& fine, int num_coarse_cells) {
  std::vector<Triplet> t;
  t.reserve(fine.parent_map.size());
  for (int i = 0; i < int(fine.parent_map.size()); ++i)
    t.emplace_back(i, fine.parent_map[i], 1.0);
  SpMat I(Eigen::Index(fine.parent_map.size()), num_coarse_cells);
  I.setFromTriplets(t.begin(), t.end());
  I.makeCompressed();
  return I;
}

TwoLevelMesh build_two_level(CoarseMesh coarse) {
  TwoLevelMesh m;
  m.coarse = std::move(coarse);
  m.fine = build_fine(m.coarse);
  m.injection = injection_matrix(m.fine, m.coarse.num_cells());
  m.mass_coarse = m.coarse.cell_areas;
  m.mass_fine = m.fine.cell_areas;
  return m;
}

AdmissibilityReport validate_admissibility(const FvGeometry& mesh) {
  AdmissibilityReport rep;
  std::vector<Point> pts = mesh.cell_points;
  for (const auto& e : mesh.edges) {
    pts.push_back(e.p);
    pts.push_back(e.q);
  }
  rep.diameter = bounding_diameter(pts);
  rep.min_distance = mesh.edges.empty() ? 0.0 : INFINITY;
  for (const FvEdge& e : mesh.edges) {
    EdgeCheck chk;
    const Point d = mesh.cell_points[e.right] - mesh.cell_points[e.left];
    const Point tan = e.q - e.p;
    chk.distance = d.norm();
    const double denom = chk.distance * tan.norm();
    chk.angle_error =
        denom > 0 ? std::asin(std::min(1.0, std::abs(d.dot(tan)) / denom))
                  : M_PI / 2;
    chk.pass = chk.distance >= kDistanceRelativeTol * rep.diameter &&
               chk.distance > 0 && chk.angle_error <= kOrthogonalityTol;
    rep.all_pass = rep.all_pass && chk.pass;
    rep.max_angle_error = std::max(rep.max_angle_error, chk.angle_error);
    rep.min_distance = std::min(rep.min_distance, chk.distance);
    rep.edges.push_back(chk);
  }
  return rep;
}

std::uint64_t mesh_hash(const CoarseMesh& mesh) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
      h ^= p[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto& v : mesh.vertices) {
    const double xy[2] = {v.x(), v.y()};
    mix(xy, sizeof(xy));
  }
  for (const auto& c : mesh.cells) mix(c.data(), sizeof(int) * 3);
  return h;
}

}  // namespace otbb
