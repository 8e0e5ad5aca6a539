#pragma once

#include "otbb/newton.hpp"

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

namespace otbb {

using DensityField = std::function<double(const Point&)>;

struct TestCase {
  std::string name;
  DensityField rho_in;
  DensityField rho_fin;
  std::optional<double> analytic_cost;  // for unit mass
};

/// Smooth bump cos^2(pi r / (2 r0)) for r <= r0, else 0.
double bump(double r, double r0);

/// gaussian, translation or compression; throws InputError otherwise.
TestCase make_case(const std::string& name);
std::vector<std::string> case_names();

/// Integral over a triangle: centroid split into three subtriangles, each
/// with the edge-midpoint rule (exact for quadratics).
double integrate_triangle(const DensityField& f, const Point& a, const Point& b,
                          const Point& c);

/// Cell averages of both densities, floored at `floor`, each scaled to unit
/// mass. Throws InputError when a density has no mass.
std::pair<VecX, VecX> discretize_boundary(const TestCase& tc,
                                          const CoarseMesh& mesh,
                                          double floor = 1e-10);

/// ((1 - theta)^2 / 2) * int rho |x - c|^2 / int rho for the radial bump,
/// by Gauss-Legendre quadrature in r.
double dilation_cost(double r0, double theta);

struct BenchRow {
  std::string case_name;
  int mesh_level = 0;
  int K = 0;
  std::string precond;
  int ip_iter = 0;
  double mu = 0.0;
  int linsys = 0;
  double outer_per_linsys = 0.0;
  double inner_per_outer = 0.0;
  double cpu_per_linsys_s = 0.0;
  double setup_fraction = 0.0;
  bool converged = false;
};

void write_csv_header(std::ostream& os);
void write_csv_row(std::ostream& os, const BenchRow& row);

std::vector<BenchRow> rows_from_metrics(const std::string& case_name,
                                        int mesh_level, int K,
                                        PrecondKind kind, const RunMetrics& m);

struct RunSpec {
  std::string case_name;
  int mesh_level = 0;
  int K = 8;
  PrecondKind precond = PrecondKind::bb;
};

struct RunOutcome {
  RunSpec spec;
  RunMetrics metrics;
  std::vector<BenchRow> rows;
  bool failed = false;
  std::string error;
};

/// One full interior-point run on `base` refined `mesh_level` times.
RunOutcome run_case(const RunSpec& spec, const CoarseMesh& base,
                    const IpOptions& opt);

struct SweepConfig {
  std::vector<std::string> cases;
  std::vector<int> mesh_levels;
  std::vector<int> K_values;
  std::vector<PrecondKind> preconds;
  bool diagonal = false;  // pair mesh_levels[i] with K_values[i]
  int threads = 1;
  IpOptions ip;
};

std::vector<RunSpec> sweep_runs(const SweepConfig& cfg);

/// Runs every entry; failures are kept as outcomes with `failed` set.
/// Results are in `sweep_runs` order regardless of the thread count.
std::vector<RunOutcome> sweep(const SweepConfig& cfg, const CoarseMesh& base);

}  // namespace otbb
