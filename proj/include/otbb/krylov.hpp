#pragma once

#include "otbb/sparse.hpp"

#include <chrono>
#include <cmath>
#include <limits>
#include <vector>

namespace otbb {

struct KrylovStats {
  int outer_iterations = 0;
  long inner_iterations_total = 0;
  bool converged = false;
  bool breakdown = false;
  bool stalled = false;
  double final_relative_residual = 0.0;
  double setup_seconds = 0.0;
  double solve_seconds = 0.0;
  // Residual norms relative to the scaling norm, starting with the initial one.
  std::vector<double> residual_history;
};

template <class Scalar>
struct KrylovResult {
  Vec<Scalar> x;
  KrylovStats stats;
};

template <class Scalar>
struct FgmresOptions {
  Scalar tol = Scalar(1e-5);
  int max_iterations = 400;
  int restart = 0;  // 0: keep the full basis
  // Stopping test is ||b - A x|| <= tol * scaling_norm; <= 0 means ||b||.
  Scalar scaling_norm = Scalar(0);
  // Stop early when the residual ratio over `stall_window` steps exceeds
  // `stall_ratio`; 0 disables the check.
  int stall_window = 0;
  Scalar stall_ratio = Scalar(0.99);
};

namespace detail {
inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
      .count();
}
}  // namespace detail

/// Right-preconditioned flexible GMRES with modified Gram-Schmidt.
/// `apply_operator(x, y)` sets y = A x; `apply_preconditioner(r, z)` sets an
/// approximation z of A^{-1} r and may differ between calls.
template <class Scalar, class Op, class Prec>
KrylovResult<Scalar> fgmres(Op&& apply_operator, Prec&& apply_preconditioner,
                            const Vec<Scalar>& b,
                            const FgmresOptions<Scalar>& opt,
                            const Vec<Scalar>* x0 = nullptr) {
  using std::abs;
  using std::sqrt;
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = b.size();
  KrylovResult<Scalar> res;
  KrylovStats& st = res.stats;
  res.x = x0 ? *x0 : Vec<Scalar>::Zero(n);

  Scalar scale = opt.scaling_norm > 0 ? opt.scaling_norm : b.norm();
  if (scale == Scalar(0)) scale = Scalar(1);
  const Scalar target = opt.tol * scale;

  Vec<Scalar> r(n), w(n);
  auto true_residual = [&] {
    if (res.x.squaredNorm() == Scalar(0)) {
      r = b;
    } else {
      apply_operator(res.x, w);
      r = b - w;
    }
    return r.norm();
  };

  Scalar beta = true_residual();
  st.residual_history.push_back(double(beta / scale));
  if (beta <= target) {
    st.converged = true;
    st.final_relative_residual = double(beta / scale);
    st.solve_seconds = detail::seconds_since(t0);
    return res;
  }

  const int cycle_len = opt.restart > 0 ? opt.restart : opt.max_iterations;
  std::vector<Vec<Scalar>> V, Z;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> H;
  Vec<Scalar> cs, sn, g;

  while (st.outer_iterations < opt.max_iterations && !st.converged) {
    V.assign(1, r / beta);
    Z.clear();
    H.setZero(cycle_len + 1, cycle_len);
    cs.setZero(cycle_len);
    sn.setZero(cycle_len);
    g.setZero(cycle_len + 1);
    g[0] = beta;
    int j = 0;
    bool stop = false;
    for (; j < cycle_len && st.outer_iterations < opt.max_iterations; ++j) {
      Z.emplace_back(n);
      apply_preconditioner(V[j], Z[j]);
      apply_operator(Z[j], w);
      for (int i = 0; i <= j; ++i) {
        H(i, j) = w.dot(V[i]);
        w -= H(i, j) * V[i];
      }
      const Scalar h_next = w.norm();
      H(j + 1, j) = h_next;
      ++st.outer_iterations;

      for (int i = 0; i < j; ++i) {
        const Scalar a = H(i, j), c = H(i + 1, j);
        H(i, j) = cs[i] * a + sn[i] * c;
        H(i + 1, j) = -sn[i] * a + cs[i] * c;
      }
      const Scalar a = H(j, j), c = H(j + 1, j);
      const Scalar rad = std::hypot(a, c);
      cs[j] = rad == Scalar(0) ? Scalar(1) : a / rad;
      sn[j] = rad == Scalar(0) ? Scalar(0) : c / rad;
      H(j, j) = rad;
      H(j + 1, j) = Scalar(0);
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];

      const Scalar est = abs(g[j + 1]);
      st.residual_history.push_back(double(est / scale));
      if (est <= target) {
        st.converged = true;
        stop = true;
      } else if (h_next < Scalar(1e-300) || H(j, j) == Scalar(0)) {
        st.breakdown = true;
        stop = true;
      } else if (opt.stall_window > 0 &&
                 int(st.residual_history.size()) > opt.stall_window) {
        const auto& hist = st.residual_history;
        const double prev = hist[hist.size() - 1 - opt.stall_window];
        if (prev > 0 && hist.back() / prev > double(opt.stall_ratio)) {
          st.stalled = true;
          stop = true;
        }
      }
      if (stop) {
        ++j;
        break;
      }
      V.emplace_back(w / h_next);
    }

    // Solve the j x j upper-triangular least-squares system.
    Vec<Scalar> y = g.head(j);
    for (int i = j - 1; i >= 0; --i) {
      for (int k = i + 1; k < j; ++k) y[i] -= H(i, k) * y[k];
      y[i] = H(i, i) == Scalar(0) ? Scalar(0) : y[i] / H(i, i);
    }
    for (int i = 0; i < j; ++i) res.x += y[i] * Z[i];

    // Convergence is judged on the true residual; the Arnoldi estimate can
    // drift when the preconditioned basis loses orthogonality.
    beta = true_residual();
    st.converged = beta <= target;
    if (st.stalled || st.breakdown) break;
  }

  st.final_relative_residual = double(beta / scale);
  st.solve_seconds = detail::seconds_since(t0);
  return res;
}

template <class Scalar>
struct CgOptions {
  Scalar tol = Scalar(1e-6);
  int max_iterations = 200;
  // Work in the complement of the constant vector (singular Laplacians).
  bool deflate_constant = false;
};

/// Flexible preconditioned conjugate gradients.
/// Relative residual is measured against the (deflated) right-hand side.
template <class Scalar, class Op, class Prec>
KrylovResult<Scalar> pcg(Op&& apply_operator, Prec&& apply_preconditioner,
                         const Vec<Scalar>& b_in, const CgOptions<Scalar>& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const Eigen::Index n = b_in.size();
  KrylovResult<Scalar> res;
  KrylovStats& st = res.stats;
  res.x = Vec<Scalar>::Zero(n);

  auto deflate = [&](Vec<Scalar>& v) {
    if (opt.deflate_constant && n > 0) v.array() -= v.mean();
  };
  Vec<Scalar> r = b_in;
  deflate(r);
  const Scalar bnorm = r.norm();
  st.residual_history.push_back(bnorm == Scalar(0) ? 0.0 : 1.0);
  if (bnorm == Scalar(0)) {
    st.converged = true;
    st.solve_seconds = detail::seconds_since(t0);
    return res;
  }
  const Scalar target = opt.tol * bnorm;

  Vec<Scalar> z(n), p(n), q(n);
  apply_preconditioner(r, z);
  deflate(z);
  p = z;
  Scalar rz = r.dot(z);
  Scalar rnorm = bnorm;
  while (st.outer_iterations < opt.max_iterations) {
    apply_operator(p, q);
    deflate(q);
    const Scalar pq = p.dot(q);
    if (!(std::abs(pq) > Scalar(1e-300))) {
      st.breakdown = true;
      break;
    }
    const Scalar alpha = rz / pq;
    res.x += alpha * p;
    r -= alpha * q;
    ++st.outer_iterations;
    rnorm = r.norm();
    st.residual_history.push_back(double(rnorm / bnorm));
    if (rnorm <= target) {
      st.converged = true;
      break;
    }
    apply_preconditioner(r, z);
    deflate(z);
    // Polak-Ribiere form: stays stable when the preconditioner varies.
    const Scalar rz_new = r.dot(z);
    const Scalar beta = -alpha * q.dot(z) / rz;
    p = z + beta * p;
    rz = rz_new;
  }
  deflate(res.x);
  st.final_relative_residual = double(rnorm / bnorm);
  st.solve_seconds = detail::seconds_since(t0);
  return res;
}

}  // namespace otbb
