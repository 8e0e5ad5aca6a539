#pragma once

#include "otbb/krylov.hpp"
#include "otbb/sparse.hpp"

#include <Eigen/LU>
#include <Eigen/QR>

#include <chrono>
#include <cmath>
#include <vector>

namespace otbb {

enum class AmgMode { spd, general };

/// v: one coarse correction per level. k: the coarse problem is solved by two
/// Krylov steps preconditioned by the next level (skipped when the first step
/// already reduces the coarse residual by `kcycle_threshold`).
enum class AmgCycle { v, k };

struct AmgOptions {
  AmgCycle cycle = AmgCycle::v;
  double kcycle_threshold = 0.25;
  double strength_threshold = 0.25;
  int aggregation_passes = 2;  // pairwise passes per level: aggregates <= 2^p
  int max_coarse_size = 64;
  int max_levels = 40;
};

namespace detail {

// Pairwise matching: each unmatched node joins its strongest unmatched
// neighbour with strength >= threshold, otherwise stays a singleton.
// With `force`, weak links are accepted and isolated nodes are paired by index.
template <class Scalar>
int pairwise_aggregate(const SparseMat<Scalar>& A, double threshold, bool force,
                       std::vector<int>& agg) {
  const int n = int(A.rows());
  agg.assign(n, -1);
  const Vec<Scalar> d = A.diagonal();
  int count = 0;
  int pending_isolated = -1;
  for (int i = 0; i < n; ++i) {
    if (agg[i] != -1) continue;
    int best = -1;
    double best_s = force ? -1.0 : threshold;
    for (typename SparseMat<Scalar>::InnerIterator it(A, i); it; ++it) {
      const int j = int(it.col());
      if (j == i || agg[j] != -1) continue;
      const double dd = std::abs(double(d[i]) * double(d[j]));
      const double s =
          dd > 0 ? std::abs(double(it.value())) / std::sqrt(dd) : 0.0;
      if (s > best_s || (force && best == -1)) {
        best_s = s;
        best = j;
      }
    }
    if (best >= 0) {
      agg[i] = agg[best] = count++;
    } else if (force && pending_isolated >= 0) {
      agg[i] = agg[pending_isolated];
      pending_isolated = -1;
    } else {
      agg[i] = count++;
      if (force) pending_isolated = i;
    }
  }
  return count;
}

template <class Scalar>
SparseMat<Scalar> aggregation_prolongation(const std::vector<int>& agg,
                                           int ncoarse) {
  SparseMat<Scalar> P(Eigen::Index(agg.size()), ncoarse);
  P.reserve(Eigen::VectorXi::Constant(Eigen::Index(agg.size()), 1));
  for (int i = 0; i < int(agg.size()); ++i) P.insert(i, agg[i]) = Scalar(1);
  P.makeCompressed();
  return P;
}

template <class Scalar>
SparseMat<Scalar> galerkin(const SparseMat<Scalar>& A,
                           const SparseMat<Scalar>& P) {
  const SparseMat<Scalar> Pt = transpose(P);
  SparseMat<Scalar> AP = A * P;
  SparseMat<Scalar> Ac = Pt * AP;
  Ac.makeCompressed();
  return Ac;
}

}  // namespace detail

/// Aggregation AMG: piecewise-constant prolongations, symmetric Gauss-Seidel,
/// V- or K-cycle, dense (pseudo-)inverse on the coarsest level.
template <class Scalar>
class AmgHierarchy {
 public:
  using Matrix = SparseMat<Scalar>;
  using Vector = Vec<Scalar>;

  AmgHierarchy() = default;

  explicit AmgHierarchy(const Matrix& A, const AmgOptions& opt = {}) {
    const auto t0 = std::chrono::steady_clock::now();
    detail::require(A.rows() == A.cols(), "amg_setup: matrix not square");
    kcycle_ = opt.cycle == AmgCycle::k;
    kcycle_threshold_ = opt.kcycle_threshold;
    const Matrix At = transpose(A);
    symmetric_ = max_abs(Matrix(A - At)) <= 1e-12 * max_abs(A);
    levels_.push_back(Level{A, {}, {}});
    while (int(levels_.size()) < opt.max_levels &&
           levels_.back().A.rows() > opt.max_coarse_size) {
      Matrix P;
      if (!coarsen(levels_.back().A, opt, P)) break;
      Level next{detail::galerkin(levels_.back().A, P), {}, {}};
      levels_.back().P = std::move(P);
      levels_.push_back(std::move(next));
    }
    for (auto& lv : levels_) {
      lv.inv_diag = lv.A.diagonal();
      for (Eigen::Index i = 0; i < lv.inv_diag.size(); ++i)
        lv.inv_diag[i] = lv.inv_diag[i] != Scalar(0) ? Scalar(1) / lv.inv_diag[i]
                                                     : Scalar(0);
    }
    factor_coarsest();
    setup_seconds_ = detail::seconds_since(t0);
  }

  int num_levels() const { return int(levels_.size()); }
  Eigen::Index level_size(int l) const { return levels_[l].A.rows(); }
  const Matrix& matrix(int l) const { return levels_[l].A; }
  /// Maps level l+1 to level l.
  const Matrix& prolongation(int l) const { return levels_[l].P; }
  double setup_seconds() const { return setup_seconds_; }
  bool used_pseudo_inverse() const { return pseudo_inverse_; }

  /// One cycle from a zero initial guess: x ~ A^{-1} b.
  void vcycle(const Vector& b, Vector& x) const { cycle(0, b, x); }
  bool symmetric() const { return symmetric_; }

 private:
  struct Level {
    Matrix A;
    Matrix P;
    Vector inv_diag;
  };

  static bool coarsen(const Matrix& A, const AmgOptions& opt, Matrix& P) {
    const Eigen::Index n = A.rows();
    for (bool force : {false, true}) {
      std::vector<int> agg;
      Matrix Acur = A;
      Matrix Ptot;
      for (int pass = 0; pass < opt.aggregation_passes; ++pass) {
        const int nc =
            detail::pairwise_aggregate(Acur, opt.strength_threshold, force, agg);
        Matrix Pp = detail::aggregation_prolongation<Scalar>(agg, nc);
        Ptot = pass == 0 ? Pp : Matrix(Ptot * Pp);
        if (pass + 1 < opt.aggregation_passes) Acur = detail::galerkin(Acur, Pp);
      }
      // Accept if the level shrinks by at least a quarter.
      if (4 * Ptot.cols() <= 3 * n) {
        P = std::move(Ptot);
        P.makeCompressed();
        return true;
      }
      if (force && Ptot.cols() < n) {
        P = std::move(Ptot);
        P.makeCompressed();
        return true;
      }
    }
    return false;
  }

  void factor_coarsest() {
    const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> D =
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>(levels_.back().A);
    if (D.rows() == 0) return;
    Eigen::FullPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> lu(D);
    lu.setThreshold(Scalar(1e-12));
    if (lu.isInvertible()) {
      coarse_inverse_ = lu.inverse();
      return;
    }
    pseudo_inverse_ = true;
    Eigen::CompleteOrthogonalDecomposition<
        Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>
        cod;
    cod.setThreshold(Scalar(1e-12));
    cod.compute(D);
    coarse_inverse_ = cod.pseudoInverse();
  }

  static void gauss_seidel(const Level& lv, const Vector& b, Vector& x,
                           bool forward) {
    const Matrix& A = lv.A;
    const int n = int(A.rows());
    for (int s = 0; s < n; ++s) {
      const int i = forward ? s : n - 1 - s;
      Scalar acc = b[i];
      Scalar diag(0);
      for (typename Matrix::InnerIterator it(A, i); it; ++it) {
        if (it.col() == i)
          diag = it.value();
        else
          acc -= it.value() * x[it.col()];
      }
      if (diag != Scalar(0)) x[i] = acc / diag;
    }
  }

  void cycle(int l, const Vector& b, Vector& x) const {
    const Level& lv = levels_[l];
    if (l + 1 == int(levels_.size())) {
      x = coarse_inverse_ * b;
      return;
    }
    x.setZero(b.size());
    gauss_seidel(lv, b, x, true);
    const Vector r = b - lv.A * x;
    const Vector rc = lv.P.transpose() * r;
    Vector xc;
    if (kcycle_ && l + 2 < int(levels_.size()))
      coarse_krylov(l + 1, rc, xc);
    else
      cycle(l + 1, rc, xc);
    x += lv.P * xc;
    gauss_seidel(lv, b, x, false);
  }

  // Two flexible Krylov steps on level l preconditioned by cycle(l): conjugate
  // gradients when A is symmetric, residual minimization otherwise.
  void coarse_krylov(int l, const Vector& b, Vector& x) const {
    const Matrix& A = levels_[l].A;
    Vector v1;
    cycle(l, b, v1);
    const Vector w1 = A * v1;
    const Scalar bnorm = b.norm();
    if (symmetric_) {
      const Scalar rho1 = v1.dot(w1);
      if (!(std::abs(rho1) > Scalar(0))) {
        x = v1;
        return;
      }
      const Scalar a1 = v1.dot(b) / rho1;
      const Vector r1 = b - a1 * w1;
      if (r1.norm() <= kcycle_threshold_ * bnorm) {
        x = a1 * v1;
        return;
      }
      Vector v2;
      cycle(l, r1, v2);
      const Vector w2 = A * v2;
      const Scalar gamma = v2.dot(w1);
      const Scalar rho2 = v2.dot(w2) - gamma * gamma / rho1;
      if (!(std::abs(rho2) > Scalar(0))) {
        x = a1 * v1;
        return;
      }
      const Scalar a2 = v2.dot(r1) / rho2;
      x = (a1 - gamma * a2 / rho1) * v1 + a2 * v2;
      return;
    }
    const Scalar ww = w1.squaredNorm();
    if (!(ww > Scalar(0))) {
      x = v1;
      return;
    }
    const Scalar a1 = w1.dot(b) / ww;
    const Vector r1 = b - a1 * w1;
    if (r1.norm() <= kcycle_threshold_ * bnorm) {
      x = a1 * v1;
      return;
    }
    Vector v2;
    cycle(l, r1, v2);
    const Vector w2 = A * v2;
    // Minimize ||b - a w1 - c w2|| over (a, c).
    Eigen::Matrix<Scalar, 2, 2> G;
    G << ww, w1.dot(w2), w1.dot(w2), w2.squaredNorm();
    const Eigen::Matrix<Scalar, 2, 1> rhs(w1.dot(b), w2.dot(b));
    const Eigen::Matrix<Scalar, 2, 1> c = G.completeOrthogonalDecomposition().solve(rhs);
    x = c[0] * v1 + c[1] * v2;
  }

  std::vector<Level> levels_;
  bool kcycle_ = true;
  bool symmetric_ = false;
  double kcycle_threshold_ = 0.25;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> coarse_inverse_;
  bool pseudo_inverse_ = false;
  double setup_seconds_ = 0.0;
};

/// Krylov-accelerated AMG solve. spd: CG (optionally deflating constants);
/// general: GMRES(30). Iteration count is in stats.outer_iterations.
template <class Scalar>
KrylovResult<Scalar> amg_solve(const AmgHierarchy<Scalar>& h,
                               const Vec<Scalar>& b, Scalar tol,
                               int max_iterations = 200,
                               AmgMode mode = AmgMode::spd,
                               bool deflate_constant = false) {
  const auto& A = h.matrix(0);
  auto op = [&A](const Vec<Scalar>& x, Vec<Scalar>& y) { y.noalias() = A * x; };
  auto prec = [&h](const Vec<Scalar>& r, Vec<Scalar>& z) { h.vcycle(r, z); };
  if (mode == AmgMode::spd) {
    CgOptions<Scalar> o;
    o.tol = tol;
    o.max_iterations = max_iterations;
    o.deflate_constant = deflate_constant;
    return pcg<Scalar>(op, prec, b, o);
  }
  FgmresOptions<Scalar> o;
  o.tol = tol;
  o.max_iterations = max_iterations;
  o.restart = 30;
  return fgmres<Scalar>(op, prec, b, o);
}

}  // namespace otbb
