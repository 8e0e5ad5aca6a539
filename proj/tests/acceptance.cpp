// Acceptance gate: one PASS/FAIL line per criterion, exit status 0 only when
// every criterion passes.

#include "otbb/bench.hpp"
#include "otbb/cli.hpp"

#include <Eigen/Eigenvalues>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

using namespace otbb;

namespace {

struct Verdict {
  int id;
  std::string title;
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

void note(const std::string& s) {
  std::printf("  %s\n", s.c_str());
  std::fflush(stdout);
}

VecX random_vector(Eigen::Index n, std::mt19937& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  VecX v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

PrimalDualState random_state(const Discretization& d, std::mt19937& rng) {
  const auto [r0, r1] = discretize_boundary(make_case("gaussian"), d.mesh.coarse);
  PrimalDualState st = initial_state(d, r0, r1, 0.1);
  st.phi = random_vector(st.phi.size(), rng);
  st.rho = random_vector(st.rho.size(), rng, 0.5, 1.5);
  st.s = random_vector(st.s.size(), rng, 0.05, 0.5);
  return st;
}

RunOutcome run(const std::string& name, int level, int K, PrecondKind kind, int ip_iterations = 10) {
  IpOptions o;
  o.ip_iterations = ip_iterations;
  o.precond = kind;
  const auto t0 = std::chrono::steady_clock::now();
  RunOutcome out = run_case({name, level, K, kind}, embedded_unit_square(), o);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "run %s refine %d K %d %s: linsys %d avg outer %.2f cost %.6f %s (%.1f s)",
                name.c_str(), level, K, to_string(kind).c_str(),
                out.metrics.total_linear_systems, out.metrics.average_outer_per_linsys(),
                out.metrics.final_cost, out.failed ? ("failed: " + out.error).c_str() : "ok", s);
  note(buf);
  std::string per_ip = "  outer/linsys per IP:";
  for (const auto& it : out.metrics.iterations) per_ip += fmt(" %.1f", it.outer_per_linsys);
  note(per_ip);
  return out;
}

// Index of the IP iteration whose mu is closest to `mu` in log scale.
int ip_index_near(const RunMetrics& m, double mu) {
  int best = -1;
  for (int i = 0; i < int(m.iterations.size()); ++i)
    if (best < 0 || std::abs(std::log(m.iterations[i].mu / mu)) <
                        std::abs(std::log(m.iterations[best].mu / mu)))
      best = i;
  return best;
}

Verdict criterion1() {
  bool ok = true;
  double worst_div = 0, worst_sym = 0, worst_null = 0, worst_P = 0, worst_E = 0;
  for (int level = 0; level <= 3; ++level) {
    const Discretization d = make_discretization(refine(embedded_unit_square(), level), 8);
    ok &= d.mesh.fine.num_cells() == 3 * d.mesh.coarse.num_cells();
    ok &= d.mesh.fine.num_edges() == 2 * d.mesh.coarse.num_edges() + 3 * d.mesh.coarse.num_cells();
    for (const SpatialOps* ops : {&d.fine_ops, &d.coarse_ops}) {
      const SpMat expected =
          -(transpose(ops->grad) * diagonal_matrix<double>(VecX(ops->w.cwiseProduct(ops->e))));
      worst_div = std::max(worst_div, max_abs(SpMat(ops->div - expected)) / max_abs(ops->div));
    }
    std::mt19937 rng(100 + level);
    const PrimalDualState st = random_state(d, rng);
    const SaddleSystem sys = assemble_saddle(st, d);
    for (const SpMat& Ak : sys.A_blocks) {
      const double s = max_abs(Ak);
      worst_sym = std::max(worst_sym, max_abs(SpMat(Ak - transpose(Ak))) / s);
      worst_null = std::max(worst_null, (Ak * VecX::Ones(Ak.cols())).cwiseAbs().maxCoeff() / s);
    }
    ok &= sys.C.minCoeff() > 0.0 && sys.C.size() == d.grid.m;
    const SpMat P = assemble_projector(d.mesh, d.grid);
    worst_P = std::max(worst_P, max_abs(SpMat(SpMat(P * P) - P)));
    const Eigen::MatrixXd G =
        Eigen::MatrixXd(d.blocks.Ebar_sum * d.blocks.M_coarse * transpose(d.blocks.Ebar_sum));
    const double omega = d.mesh.coarse.domain_area;
    worst_E = std::max(worst_E,
                       (G - omega * Eigen::MatrixXd::Identity(d.grid.K, d.grid.K)).cwiseAbs().maxCoeff() /
                           omega);
  }
  // "Exact" identities are checked at rounding level.
  ok &= worst_div <= 1e-15 && worst_sym <= 1e-15 && worst_null <= 1e-13;
  ok &= worst_P <= 1e-12 && worst_E <= 1e-13;
  const std::string detail = "div " + fmt("%.1e", worst_div) + ", A_k sym " + fmt("%.1e", worst_sym) +
                             ", A_k 1 " + fmt("%.1e", worst_null) + ", P^2-P " + fmt("%.1e", worst_P) +
                             ", E M E^T " + fmt("%.1e", worst_E) + ", refine 0-3";
  return {1, "structural identities", ok, detail};
}

Verdict criterion2() {
  const Discretization d = make_discretization(refine(embedded_unit_square(), 1), 2);
  std::mt19937 rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const PrimalDualState st = random_state(d, rng);
    const SpMat J = assemble_jacobian(assemble_saddle(st, d), d);
    const VecX v = random_vector(J.cols(), rng);
    auto shifted = [&](double eps) {
      PrimalDualState s = st;
      s.phi += eps * v.head(s.phi.size());
      s.rho += eps * v.segment(s.phi.size(), s.rho.size());
      s.s += eps * v.tail(s.s.size());
      return full_residual(s, d);
    };
    const double eps = 1e-5;
    const VecX fd = (shifted(eps) - shifted(-eps)) / (2 * eps);
    const VecX jv = J * v;
    worst = std::max(worst, (fd - jv).norm() / std::max(fd.norm(), jv.norm()));
  }
  return {2, "Jacobian vs central differences", worst <= 1e-6,
          "max relative error " + fmt("%.2e", worst) + " over 20 states, refine 1, K 2"};
}

struct MassAudit {
  double worst_mass = 0.0;
  double worst_flux = 0.0;
  int checks = 0;
};

void audit_mass(const PrimalDualState& st, const Discretization& d, MassAudit& a) {
  const double target = d.mesh.mass_coarse.dot(st.rho_begin);
  const VecX F = residual_continuity(st, d);
  const int nf = d.grid.n_fine;
  for (int k = 1; k <= d.grid.K + 1; ++k) {
    if (k <= d.grid.K)
      a.worst_mass = std::max(
          a.worst_mass, std::abs(d.mesh.mass_coarse.dot(rho_level(st, d, k)) - target) / target);
    // The continuity residual carries the 1/dt of the time difference and
    // the opposite sign of the mass change.
    const VecX dm = d.mesh.mass_coarse.cwiseProduct(rho_level(st, d, k) - rho_level(st, d, k - 1));
    const auto Fk = F.segment(long(k - 1) * nf, nf);
    const double scale = Fk.cwiseAbs().sum() + dm.cwiseAbs().sum() / d.grid.dt;
    if (scale > 0.0)
      a.worst_flux = std::max(a.worst_flux, std::abs(Fk.sum() + dm.sum() / d.grid.dt) / scale);
  }
  ++a.checks;
}

std::vector<Verdict> criteria3and4() {
  const int level = 1, K = 8;
  const Discretization d = make_discretization(refine(embedded_unit_square(), level), K);
  const auto [r0, r1] = discretize_boundary(make_case("gaussian"), d.mesh.coarse);
  IpOptions o;
  o.precond = PrecondKind::bb;
  o.ip_iterations = ip_iterations_for(1.0, 5e-7, 5.0);
  PrimalDualState st = initial_state(d, r0, r1, o.mu0);
  MassAudit audit;
  // The hook sees every linearization point, i.e. the state after each update.
  const RunMetrics m = ip_solve(st, d, o, [&](int, double, int, const PrimalDualState& s,
                                              const SaddleSystem&) { audit_mass(s, d, audit); });
  audit_mass(st, d, audit);
  char buf[200];
  std::snprintf(buf, sizeof buf, "run gaussian refine 1 K 8 bb: linsys %d avg outer %.2f %s",
                m.total_linear_systems, m.average_outer_per_linsys(),
                m.failed ? m.failure.c_str() : "ok");
  note(buf);
  std::string steps = "Newton steps per IP:";
  for (const auto& it : m.iterations) steps += " " + std::to_string(it.linear_systems);
  note(steps);

  std::vector<Verdict> out;
  out.push_back({3, "mass conservation after every Newton update",
                 !m.failed && audit.worst_mass <= 1e-13 && audit.worst_flux <= 1e-12,
                 "mass " + fmt("%.1e", audit.worst_mass) + ", 1^T F_phi " +
                     fmt("%.1e", audit.worst_flux) + " over " + std::to_string(audit.checks) +
                     " states"});

  const double expected[] = {1, 2e-1, 4e-2, 8e-3, 2e-3, 3e-4, 6e-5, 1e-5, 3e-6, 5e-7};
  const auto mus = mu_schedule(o);
  bool schedule_ok = mus.size() == 10;
  for (std::size_t i = 0; schedule_ok && i < mus.size(); ++i) {
    const double p = std::pow(10.0, std::floor(std::log10(mus[i])));
    schedule_ok = std::abs(std::round(mus[i] / p) * p - expected[i]) <= 1e-12 * expected[i];
  }
  int min_steps = 1 << 30, max_steps = 0;
  for (const auto& it : m.iterations) {
    min_steps = std::min(min_steps, it.linear_systems);
    max_steps = std::max(max_steps, it.linear_systems);
  }
  const bool ok4 = schedule_ok && int(m.iterations.size()) == 10 && !m.failed &&
                   m.total_linear_systems >= 30 && m.total_linear_systems <= 80 &&
                   min_steps >= 2 && max_steps <= 12;
  out.push_back({4, "IP protocol", ok4,
                 std::string("schedule ") + (schedule_ok ? "ok" : "wrong") + ", " +
                     std::to_string(m.iterations.size()) + " IP iterations, " +
                     std::to_string(m.total_linear_systems) + " linear systems in [30, 80], " +
                     "Newton steps " + std::to_string(min_steps) + ".." + std::to_string(max_steps) +
                     " in [2, 12]"});
  return out;
}

Verdict criterion5() {
  const double exact = make_case("translation").analytic_cost.value();
  const RunOutcome a = run("translation", 2, 16, PrecondKind::simple);
  const RunOutcome b = run("translation", 3, 32, PrecondKind::simple);
  const double ea = std::abs(a.metrics.final_cost - exact) / exact;
  const double eb = std::abs(b.metrics.final_cost - exact) / exact;
  const double dil = make_case("compression").analytic_cost.value();
  const RunOutcome c = run("compression", 3, 32, PrecondKind::simple);
  const double ec = std::abs(c.metrics.final_cost - dil) / dil;
  const bool ok = !a.failed && !b.failed && !c.failed && ea <= 0.10 && eb < ea && ec <= 0.15;
  return {5, "solution quality", ok,
          "translation error " + fmt("%.2f%%", 100 * ea) + " (refine 2, K 16) -> " +
              fmt("%.2f%%", 100 * eb) + " (refine 3, K 32); compression error " +
              fmt("%.2f%%", 100 * ec) + " (refine 3, K 32)"};
}

struct Crit6Runs {
  RunOutcome bb, simple;
};

Verdict criterion6(Crit6Runs& keep) {
  const int level = 1, K = 8;
  const RunOutcome hss = run("translation", level, K, PrecondKind::hss);
  const RunOutcome simple = run("translation", level, K, PrecondKind::simple);
  const RunOutcome primal = run("translation", level, K, PrecondKind::primal_schur);
  const RunOutcome bb = run("translation", level, K, PrecondKind::bb);
  const double h = hss.metrics.average_outer_per_linsys();
  const double s = simple.metrics.average_outer_per_linsys();
  const double p = primal.metrics.average_outer_per_linsys();
  const double b1 = bb.metrics.iterations.empty() ? 0.0 : bb.metrics.iterations[0].outer_per_linsys;
  const int i5 = ip_index_near(bb.metrics, 1e-5);
  const double b5 = i5 >= 0 ? bb.metrics.iterations[i5].outer_per_linsys : 0.0;
  bool capped = true;
  for (const RunOutcome* r : {&hss, &simple, &primal, &bb}) {
    capped &= !r->failed;
    for (const auto& it : r->metrics.iterations)
      if (it.mu >= 1e-5)
        for (const auto& sv : it.solves) capped &= sv.converged && sv.outer_iterations < 400;
  }
  const bool ok_h = h >= 11 && h <= 44;
  const bool ok_s = s >= 16 && s <= 64;
  const bool ok_p = p >= 2 && p <= 9;
  const bool ok_b1 = b1 >= 3 && b1 <= 12;
  const bool ok_growth = b5 >= 3 * b1;
  keep.bb = bb;
  keep.simple = simple;
  auto tag = [](bool x) { return x ? "" : " (out)"; };
  return {6, "preconditioner iteration counts", ok_h && ok_s && ok_p && ok_b1 && ok_growth && capped,
          "HSS " + fmt("%.1f", h) + tag(ok_h) + " in [11, 44], SIMPLE " + fmt("%.1f", s) + tag(ok_s) +
              " in [16, 64], primal " + fmt("%.1f", p) + tag(ok_p) + " in [2, 9], BB mu=1 " +
              fmt("%.1f", b1) + tag(ok_b1) + " in [3, 12], BB mu=1.3e-5 " + fmt("%.1f", b5) +
              tag(ok_growth) + " (>= 3x mu=1), cap " + (capped ? "held" : "hit")};
}

Verdict criterion7(const Crit6Runs& coarse) {
  // mu = 1.28e-5 is the eighth IP iteration, the schedule point nearest 1e-5.
  const RunOutcome bb2 = run("translation", 2, 16, PrecondKind::bb, 8);
  const RunOutcome simple2 = run("translation", 2, 16, PrecondKind::simple, 8);
  auto at = [](const RunOutcome& r) {
    const int i = ip_index_near(r.metrics, 1e-5);
    return i >= 0 ? r.metrics.iterations[i].outer_per_linsys : 0.0;
  };
  const double b1 = at(coarse.bb), b2 = at(bb2), s1 = at(coarse.simple), s2 = at(simple2);
  const double rb = b1 > 0 ? b2 / b1 : 0.0, rs = s1 > 0 ? s2 / s1 : 0.0;
  const bool ok = !bb2.failed && !simple2.failed && b1 > 0 && rb <= 2.0 && rs >= 1.5 &&
                  b1 < s1 && b2 < s2;
  return {7, "BB scaling under refinement", ok,
          "at mu=1.3e-5, (refine 1, K 8) -> (refine 2, K 16): BB " + fmt("%.1f", b1) + " -> " +
              fmt("%.1f", b2) + " (x" + fmt("%.2f", rb) + ", need <= 2), SIMPLE " + fmt("%.1f", s1) +
              " -> " + fmt("%.1f", s2) + " (x" + fmt("%.2f", rs) + ", need >= 1.5), BB < SIMPLE " +
              (b1 < s1 && b2 < s2 ? "yes" : "no")};
}

Verdict criterion8() {
  const std::vector<std::pair<int, int>> levels = {{1, 4}, {2, 8}, {3, 16}, {4, 32}};
  const auto one = [](double, const Point&) { return 1.0; };
  const auto linear = [](double, const Point& x) { return 0.3 * x.x() - 0.2 * x.y(); };
  const auto rho = [](double t, const Point& x) {
    return 1.0 + 0.3 * std::sin(M_PI * x.x()) * std::cos(M_PI * x.y()) * (1.0 + t);
  };
  const auto phi = [](double t, const Point& x) {
    return 0.5 * x.x() * x.x() + 0.2 * std::sin(2.0 * x.y()) * (1.0 - t * t);
  };
  const auto a = commutator_residual(one, linear, embedded_unit_square(), levels);
  const auto b = commutator_residual(rho, phi, embedded_unit_square(), levels);
  bool monotone = true;
  std::string ra = "rho=1, linear phi residual:";
  for (std::size_t i = 0; i < a.size(); ++i) {
    ra += fmt(" %.3g", a[i].residual);
    if (i > 0) monotone &= a[i].residual < a[i - 1].residual;
  }
  std::string rb = "smooth pair mismatch:";
  for (const auto& l : b) rb += fmt(" %.3g", l.mismatch);
  note(ra);
  note(rb);
  const double finest = b.back().mismatch;
  return {8, "commutator diagnostics", monotone && finest <= 0.20,
          std::string("linear case ") + (monotone ? "monotone" : "not monotone") + " to " +
              fmt("%.2e", a.back().residual) + ", smooth mismatch " + fmt("%.1f%%", 100 * finest) +
              " at refine 4, K 32"};
}

}  // namespace

int main() {
  std::vector<Verdict> verdicts;
  const auto t0 = std::chrono::steady_clock::now();
  auto stage = [&](const char* name) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("-- %s (t = %.0f s)\n", name, s);
    std::fflush(stdout);
  };
  try {
    stage("criterion 1");
    verdicts.push_back(criterion1());
    stage("criterion 2");
    verdicts.push_back(criterion2());
    stage("criteria 3, 4");
    for (auto& v : criteria3and4()) verdicts.push_back(v);
    stage("criterion 5");
    verdicts.push_back(criterion5());
    stage("criterion 6");
    Crit6Runs keep;
    verdicts.push_back(criterion6(keep));
    stage("criterion 7");
    verdicts.push_back(criterion7(keep));
    stage("criterion 8");
    verdicts.push_back(criterion8());
  } catch (const std::exception& e) {
    std::printf("aborted: %s\n", e.what());
    return 2;
  }
  stage("done");
  bool all = true;
  for (const auto& v : verdicts) {
    std::printf("[%s] criterion %d, %s: %s\n", v.pass ? "PASS" : "FAIL", v.id, v.title.c_str(),
                v.detail.c_str());
    all &= v.pass;
  }
  return all ? 0 : 1;
}
