#include "otbb/bench.hpp"

#include "otbb/errors.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iomanip>
#include <thread>

namespace otbb {

namespace {

constexpr double kSigma = 0.2;
constexpr double kBumpRadius = 0.2;
constexpr double kTheta = 0.5;
const Point kCompressionCenter(0.5, 0.5);

}  // namespace

double bump(double r, double r0) {
  if (r > r0) return 0.0;
  const double c = std::cos(M_PI * r / (2.0 * r0));
  return c * c;
}

std::vector<std::string> case_names() { return {"gaussian", "translation", "compression"}; }

TestCase make_case(const std::string& name) {
  TestCase tc;
  tc.name = name;
  if (name == "gaussian") {
    auto gauss = [](Point c) {
      return [c](const Point& x) {
        return std::exp(-(x - c).squaredNorm() / (2.0 * kSigma * kSigma));
      };
    };
    tc.rho_in = gauss(Point(0.3, 0.3));
    tc.rho_fin = gauss(Point(0.7, 0.7));
  } else if (name == "translation") {
    const Point a(0.3, 0.5), b(0.8, 0.5);
    tc.rho_in = [a](const Point& x) { return bump((x - a).norm(), kBumpRadius); };
    tc.rho_fin = [b](const Point& x) { return bump((x - b).norm(), kBumpRadius); };
    tc.analytic_cost = 0.5 * (b - a).squaredNorm();
  } else if (name == "compression") {
    const Point c = kCompressionCenter;
    tc.rho_in = [c](const Point& x) { return bump((x - c).norm(), kBumpRadius); };
    tc.rho_fin = [c](const Point& x) {
      return bump((x - c).norm() / kTheta, kBumpRadius) / (kTheta * kTheta);
    };
    tc.analytic_cost = dilation_cost(kBumpRadius, kTheta);
  } else {
    throw InputError("unknown case '" + name +
                     "' (expected gaussian, translation or compression)");
  }
  return tc;
}

double integrate_triangle(const DensityField& f, const Point& a, const Point& b,
                          const Point& c) {
  const Point g = (a + b + c) / 3.0;
  auto midpoint_rule = [&f](const Point& p, const Point& q, const Point& r) {
    const double area = std::abs(signed_area(p, q, r));
    return area / 3.0 * (f(0.5 * (p + q)) + f(0.5 * (q + r)) + f(0.5 * (r + p)));
  };
  return midpoint_rule(a, b, g) + midpoint_rule(b, c, g) + midpoint_rule(c, a, g);
}

std::pair<VecX, VecX> discretize_boundary(const TestCase& tc,
                                          const CoarseMesh& mesh, double floor) {
  const int nt = mesh.num_cells();
  auto averages = [&](const DensityField& f, const char* which) {
    VecX v(nt);
    for (int t = 0; t < nt; ++t) {
      const auto& cell = mesh.cells[t];
      const double integral =
          integrate_triangle(f, mesh.vertices[cell[0]], mesh.vertices[cell[1]],
                             mesh.vertices[cell[2]]);
      v[t] = std::max(integral / mesh.cell_areas[t], floor);
    }
    const double mass = mesh.cell_areas.dot(v);
    if (!(mass > 0.0))
      throw InputError(std::string(which) + " density of case '" + tc.name +
                       "' has no mass");
    return VecX(v / mass);
  };
  return {averages(tc.rho_in, "initial"), averages(tc.rho_fin, "final")};
}

double dilation_cost(double r0, double theta) {
  // Gauss-Legendre nodes on [-1, 1] by the Golub-Welsch eigenproblem.
  constexpr int n = 64;
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  for (int i = 1; i < n; ++i) {
    const double b = i / std::sqrt(4.0 * i * i - 1.0);
    J(i, i - 1) = J(i - 1, i) = b;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J);
  double second = 0.0, zeroth = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = es.eigenvalues()[i];
    const double w = 2.0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    const double r = 0.5 * r0 * (x + 1.0);
    zeroth += w * bump(r, r0) * r;
    second += w * bump(r, r0) * r * r * r;
  }
  return 0.5 * (1.0 - theta) * (1.0 - theta) * second / zeroth;
}

void write_csv_header(std::ostream& os) {
  os << "case,mesh_level,K,precond,ip_iter,mu,linsys,outer_per_linsys,"
        "inner_per_outer,cpu_per_linsys_s,setup_fraction,converged\n";
}

void write_csv_row(std::ostream& os, const BenchRow& r) {
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << r.case_name << ',' << r.mesh_level << ',' << r.K << ',' << r.precond << ','
     << r.ip_iter << ',' << std::setprecision(6) << r.mu << ',' << r.linsys << ','
     << r.outer_per_linsys << ',' << r.inner_per_outer << ',' << r.cpu_per_linsys_s
     << ',' << r.setup_fraction << ',' << (r.converged ? "true" : "false") << '\n';
  os.flags(flags);
  os.precision(prec);
}

std::vector<BenchRow> rows_from_metrics(const std::string& case_name,
                                        int mesh_level, int K, PrecondKind kind,
                                        const RunMetrics& m) {
  std::vector<BenchRow> rows;
  for (const auto& it : m.iterations) {
    BenchRow r;
    r.case_name = case_name;
    r.mesh_level = mesh_level;
    r.K = K;
    r.precond = to_string(kind);
    r.ip_iter = it.ip_iter;
    r.mu = it.mu;
    r.linsys = it.linear_systems;
    r.outer_per_linsys = it.outer_per_linsys;
    r.inner_per_outer = it.inner_per_outer;
    r.cpu_per_linsys_s = it.cpu_per_linsys;
    r.setup_fraction = it.setup_fraction;
    r.converged = it.converged && it.newton_converged;
    rows.push_back(r);
  }
  return rows;
}

RunOutcome run_case(const RunSpec& spec, const CoarseMesh& base,
                    const IpOptions& opt) {
  RunOutcome out;
  out.spec = spec;
  IpOptions o = opt;
  o.precond = spec.precond;
  try {
    const TestCase tc = make_case(spec.case_name);
    const Discretization d = make_discretization(refine(base, spec.mesh_level), spec.K);
    const auto [r0, r1] = discretize_boundary(tc, d.mesh.coarse);
    PrimalDualState st = initial_state(d, r0, r1, o.mu0);
    out.metrics = ip_solve(st, d, o);
    out.failed = out.metrics.failed;
    out.error = out.metrics.failure;
  } catch (const std::exception& e) {
    out.failed = true;
    out.error = e.what();
  }
  out.rows = rows_from_metrics(spec.case_name, spec.mesh_level, spec.K,
                               spec.precond, out.metrics);
  return out;
}

std::vector<RunSpec> sweep_runs(const SweepConfig& cfg) {
  std::vector<std::pair<int, int>> grid;
  if (cfg.diagonal) {
    if (cfg.mesh_levels.size() != cfg.K_values.size())
      throw InputError("diagonal sweep needs as many K values as mesh levels");
    for (std::size_t i = 0; i < cfg.mesh_levels.size(); ++i)
      grid.emplace_back(cfg.mesh_levels[i], cfg.K_values[i]);
  } else {
    for (int l : cfg.mesh_levels)
      for (int K : cfg.K_values) grid.emplace_back(l, K);
  }
  std::vector<RunSpec> runs;
  for (const auto& c : cfg.cases)
    for (const auto& p : cfg.preconds)
      for (const auto& [l, K] : grid) runs.push_back(RunSpec{c, l, K, p});
  return runs;
}

std::vector<RunOutcome> sweep(const SweepConfig& cfg, const CoarseMesh& base) {
  const auto runs = sweep_runs(cfg);
  std::vector<RunOutcome> out(runs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t i = next++; i < runs.size(); i = next++)
      out[i] = run_case(runs[i], base, cfg.ip);
  };
  const int threads = std::max(1, std::min<int>(cfg.threads, int(runs.size())));
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  return out;
}

}  // namespace otbb
