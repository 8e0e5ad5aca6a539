#include "otbb/newton.hpp"

#include "otbb/errors.hpp"
#include "otbb/krylov.hpp"

#include <chrono>
#include <cmath>

namespace otbb {

std::vector<double> mu_schedule(const IpOptions& opt) {
  if (!(opt.mu0 > 0.0) || !(opt.mu_factor > 1.0) || opt.ip_iterations < 1)
    throw InputError("mu schedule needs mu0 > 0, factor > 1, iterations >= 1");
  std::vector<double> mus;
  double mu = opt.mu0;
  for (int i = 0; i < opt.ip_iterations; ++i) {
    mus.push_back(mu);
    mu /= opt.mu_factor;
  }
  return mus;
}

LinearSolveRecord newton_step(PrimalDualState& st, const Discretization& d,
                              const IpOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  LinearSolveRecord rec;
  const SaddleSystem sys = assemble_saddle(st, d);
  rec.residual_before = sys.scaling_norm;
  auto prec = make_preconditioner(opt.precond, sys, st, d, opt.precond_options);
  rec.setup_seconds = prec->setup_seconds();

  auto op = [&prec](const VecX& x, VecX& y) { prec->apply_operator(x, y); };
  auto pc = [&prec](const VecX& r, VecX& z) { prec->apply(r, z); };
  FgmresOptions<double> o;
  o.tol = opt.outer_tol;
  o.max_iterations = opt.outer_max_iterations;
  o.scaling_norm = sys.scaling_norm * prec->rhs_scale();
  const auto res = fgmres<double>(op, pc, prec->rhs(), o);
  rec.outer_iterations = res.stats.outer_iterations;
  rec.inner_iterations = prec->inner_iterations();
  rec.flagged_inner = prec->flagged_events();
  rec.converged = res.stats.converged;

  VecX dphi, drho;
  prec->recover(res.x, dphi, drho);
  const VecX ds = recover_slack(sys, drho);
  const double alpha = step_length(st.rho, st.s, drho, ds, opt.tau);
  rec.step_length = alpha;
  st.phi += alpha * dphi;
  st.rho += alpha * drho;
  st.s += alpha * ds;
  if (const auto* bb = dynamic_cast<const BbPreconditioner*>(prec.get()))
    st.lambda = bb->last_dlambda();
  renormalize(st, d);
  rec.total_seconds = detail::seconds_since(t0);
  return rec;
}

RunMetrics ip_solve(PrimalDualState& st, const Discretization& d,
                    const IpOptions& opt, const NewtonHook& hook) {
  const auto t0 = std::chrono::steady_clock::now();
  RunMetrics run;
  const auto mus = mu_schedule(opt);
  for (std::size_t i = 0; i < mus.size() && !run.failed; ++i) {
    IpIterationRecord rec;
    rec.ip_iter = int(i) + 1;
    rec.mu = mus[i];
    st.mu = mus[i];
    try {
      const double f0 = full_residual(st, d).norm();
      const double target = opt.newton_stop == NewtonStop::relative
                                ? opt.newton_tol * f0
                                : opt.newton_tol * (1.0 + f0);
      double best = f0, current = f0;
      int since_best = 0;
      for (int step = 0; step < opt.newton_max_steps; ++step) {
        if (current <= target) break;
        if (hook) {
          const SaddleSystem sys = assemble_saddle(st, d);
          hook(rec.ip_iter, st.mu, step, st, sys);
        }
        rec.solves.push_back(newton_step(st, d, opt));
        current = full_residual(st, d).norm();
        if (current < best) {
          best = current;
          since_best = 0;
        } else if (++since_best >= opt.newton_stagnation_steps) {
          break;
        }
      }
      rec.final_residual = current;
      rec.newton_converged = current <= target;
    } catch (const NumericalError& e) {
      run.failed = true;
      run.failure = e.what();
      rec.newton_converged = false;
    }
    summarize(rec);
    if (run.failed) rec.converged = false;
    run.total_linear_systems += rec.linear_systems;
    run.total_outer += rec.outer_total;
    run.total_inner += rec.inner_total;
    run.iterations.push_back(std::move(rec));
  }
  run.final_cost = transport_cost(st, d);
  run.total_seconds = detail::seconds_since(t0);
  return run;
}

bool RunMetrics::converged() const {
  if (failed) return false;
  for (const auto& it : iterations)
    if (!it.converged || !it.newton_converged) return false;
  return true;
}

void summarize(IpIterationRecord& rec) {
  rec.linear_systems = int(rec.solves.size());
  rec.outer_total = 0;
  rec.inner_total = 0;
  double seconds = 0.0, setup = 0.0;
  rec.converged = true;
  for (const auto& s : rec.solves) {
    rec.outer_total += s.outer_iterations;
    rec.inner_total += s.inner_iterations;
    seconds += s.total_seconds;
    setup += s.setup_seconds;
    rec.converged = rec.converged && s.converged;
  }
  rec.outer_per_linsys =
      rec.linear_systems ? double(rec.outer_total) / rec.linear_systems : 0.0;
  rec.inner_per_outer =
      rec.outer_total ? double(rec.inner_total) / double(rec.outer_total) : 0.0;
  rec.cpu_per_linsys = rec.linear_systems ? seconds / rec.linear_systems : 0.0;
  rec.setup_fraction = seconds > 0.0 ? setup / seconds : 0.0;
}

}  // namespace otbb
