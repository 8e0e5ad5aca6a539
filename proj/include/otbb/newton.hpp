#pragma once

#include "otbb/precond.hpp"
#include "otbb/state.hpp"

#include <functional>
#include <string>
#include <vector>

namespace otbb {

/// relative: ||F|| <= tol ||F_0||; mixed: ||F|| <= tol (1 + ||F_0||), where
/// F_0 is the residual on entering each mu.
enum class NewtonStop { relative, mixed };

struct IpOptions {
  double mu0 = 1.0;
  double mu_factor = 5.0;     // mu_{i+1} = mu_i / mu_factor
  int ip_iterations = 10;
  double outer_tol = 1e-5;    // relative to ||(f; g; h)||
  int outer_max_iterations = 400;
  double newton_tol = 1e-6;
  NewtonStop newton_stop = NewtonStop::relative;
  int newton_max_steps = 20;
  int newton_stagnation_steps = 5;
  double tau = 0.05;          // fraction to the boundary
  PrecondKind precond = PrecondKind::bb;
  PrecondOptions precond_options;
};

struct LinearSolveRecord {
  int outer_iterations = 0;
  long inner_iterations = 0;
  bool converged = false;
  int flagged_inner = 0;
  double setup_seconds = 0.0;
  double total_seconds = 0.0;
  double step_length = 0.0;
  double residual_before = 0.0;  // ||F|| at the linearization point
};

struct IpIterationRecord {
  int ip_iter = 0;
  double mu = 0.0;
  int linear_systems = 0;
  long outer_total = 0;
  long inner_total = 0;
  double outer_per_linsys = 0.0;
  double inner_per_outer = 0.0;
  double cpu_per_linsys = 0.0;
  double setup_fraction = 0.0;
  bool converged = true;        // every linear solve met the outer tolerance
  bool newton_converged = false;
  double final_residual = 0.0;
  std::vector<LinearSolveRecord> solves;
};

struct RunMetrics {
  std::vector<IpIterationRecord> iterations;
  int total_linear_systems = 0;
  long total_outer = 0;
  long total_inner = 0;
  double total_seconds = 0.0;
  double final_cost = 0.0;
  bool failed = false;   // a NumericalError stopped the run
  std::string failure;
  /// Every IP iteration met both the linear and the Newton tolerance.
  bool converged() const;
  double average_outer_per_linsys() const {
    return total_linear_systems ? double(total_outer) / total_linear_systems : 0.0;
  }
};

/// Observes every Newton linearization before it is solved.
using NewtonHook = std::function<void(int ip_iter, double mu, int newton_step,
                                      const PrimalDualState& st,
                                      const SaddleSystem& sys)>;

/// The mu values of the continuation, starting at mu0.
std::vector<double> mu_schedule(const IpOptions& opt);

/// One inexact Newton step at the current mu; updates `st` in place.
LinearSolveRecord newton_step(PrimalDualState& st, const Discretization& d,
                              const IpOptions& opt);

/// Runs the continuation from the current state; the state is left at the
/// last iterate. A NumericalError ends the run early with `failed` set and
/// the interrupted IP iteration recorded as not converged.
RunMetrics ip_solve(PrimalDualState& st, const Discretization& d,
                    const IpOptions& opt, const NewtonHook& hook = {});

void summarize(IpIterationRecord& rec);

}  // namespace otbb
