#pragma once

#include "otbb/bench.hpp"

#include <random>

namespace otbb::testing {

inline Discretization small_discretization(int refine_levels = 1, int K = 2) {
  return make_discretization(refine(embedded_unit_square(), refine_levels), K);
}

inline VecX random_vector(Eigen::Index n, std::mt19937& rng, double lo = -1.0,
                          double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  VecX v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

/// Strictly feasible state with smooth-ish random perturbations.
inline PrimalDualState random_state(const Discretization& d, std::mt19937& rng,
                                    double mu = 0.1) {
  const auto tc = make_case("gaussian");
  const auto [r0, r1] = discretize_boundary(tc, d.mesh.coarse);
  PrimalDualState st = initial_state(d, r0, r1, mu);
  st.phi = random_vector(st.phi.size(), rng);
  st.rho = random_vector(st.rho.size(), rng, 0.5, 1.5);
  st.s = random_vector(st.s.size(), rng, 0.05, 0.5);
  return st;
}

inline double rel_diff(const VecX& a, const VecX& b) {
  const double scale = std::max(a.norm(), b.norm());
  return scale > 0.0 ? (a - b).norm() / scale : 0.0;
}

}  // namespace otbb::testing
