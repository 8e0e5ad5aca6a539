#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <stdexcept>
#include <vector>

namespace otbb {

// Compressed sparse row storage; Eigen keeps column indices sorted per row.
template <class Scalar>
using SparseMat = Eigen::SparseMatrix<Scalar, Eigen::RowMajor, int>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using SpMat = SparseMat<double>;
using VecX = Vec<double>;
using Triplet = Eigen::Triplet<double, int>;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

namespace detail {
inline void require(bool ok, const char* what) {
  if (!ok) throw ShapeError(what);
}
}  // namespace detail

template <class Scalar>
void prune_exact_zeros(SparseMat<Scalar>& A) {
  A.prune([](int, int, const Scalar& v) { return v != Scalar(0); });
  A.makeCompressed();
}

/// y = A x, accumulated row by row in column-index order.
template <class Scalar>
Vec<Scalar> spmv(const SparseMat<Scalar>& A, const Vec<Scalar>& x) {
  detail::require(A.cols() == x.size(), "spmv: shape mismatch");
  Vec<Scalar> y(A.rows());
  for (int i = 0; i < A.outerSize(); ++i) {
    Scalar acc(0);
    for (typename SparseMat<Scalar>::InnerIterator it(A, i); it; ++it)
      acc += it.value() * x[it.col()];
    y[i] = acc;
  }
  return y;
}

template <class Scalar>
SparseMat<Scalar> sparse_product(const SparseMat<Scalar>& A,
                                 const SparseMat<Scalar>& B) {
  detail::require(A.cols() == B.rows(), "sparse_product: shape mismatch");
  SparseMat<Scalar> C = A * B;
  prune_exact_zeros(C);
  return C;
}

/// alpha A + beta B.
template <class Scalar>
SparseMat<Scalar> sparse_add(const SparseMat<Scalar>& A,
                             const SparseMat<Scalar>& B, Scalar alpha,
                             Scalar beta) {
  detail::require(A.rows() == B.rows() && A.cols() == B.cols(),
                  "sparse_add: shape mismatch");
  SparseMat<Scalar> C = alpha * A + beta * B;
  prune_exact_zeros(C);
  return C;
}

template <class Scalar>
SparseMat<Scalar> transpose(const SparseMat<Scalar>& A) {
  SparseMat<Scalar> T = A.transpose();
  T.makeCompressed();
  return T;
}

template <class Scalar>
SparseMat<Scalar> diagonal_matrix(const Vec<Scalar>& d) {
  SparseMat<Scalar> D(d.size(), d.size());
  D.reserve(Eigen::VectorXi::Constant(d.size(), 1));
  for (Eigen::Index i = 0; i < d.size(); ++i) D.insert(i, i) = d[i];
  prune_exact_zeros(D);
  return D;
}

template <class Scalar>
SparseMat<Scalar> identity_matrix(Eigen::Index n) {
  return diagonal_matrix<Scalar>(Vec<Scalar>::Ones(n));
}

/// Block-diagonal matrix from a list of blocks of arbitrary shapes.
template <class Scalar>
SparseMat<Scalar> block_diagonal(const std::vector<SparseMat<Scalar>>& blocks) {
  Eigen::Index rows = 0, cols = 0, nnz = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
    nnz += b.nonZeros();
  }
  std::vector<Eigen::Triplet<Scalar, int>> t;
  t.reserve(nnz);
  Eigen::Index r0 = 0, c0 = 0;
  for (const auto& b : blocks) {
    for (int i = 0; i < b.outerSize(); ++i)
      for (typename SparseMat<Scalar>::InnerIterator it(b, i); it; ++it)
        t.emplace_back(int(r0 + it.row()), int(c0 + it.col()), it.value());
    r0 += b.rows();
    c0 += b.cols();
  }
  SparseMat<Scalar> M(rows, cols);
  M.setFromTriplets(t.begin(), t.end());
  prune_exact_zeros(M);
  return M;
}

/// Block-diagonal repetition of one block.
template <class Scalar>
SparseMat<Scalar> repeat_block(const SparseMat<Scalar>& block, int count) {
  return block_diagonal(std::vector<SparseMat<Scalar>>(count, block));
}

template <class Scalar>
Vec<Scalar> matrix_diagonal(const SparseMat<Scalar>& A) {
  return A.diagonal();
}

/// Largest |a_ij| over stored entries.
template <class Scalar>
Scalar max_abs(const SparseMat<Scalar>& A) {
  Scalar m(0);
  for (int i = 0; i < A.outerSize(); ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(A, i); it; ++it)
      m = std::max(m, Scalar(std::abs(it.value())));
  return m;
}

}  // namespace otbb
