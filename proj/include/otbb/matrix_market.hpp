#pragma once

#include "otbb/sparse.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>

namespace otbb {

struct MatrixMarketError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Writes `coordinate real general`, 1-based, one entry per line.
template <class Scalar>
void write_matrix_market(const std::string& path, const SparseMat<Scalar>& A) {
  std::ofstream out(path);
  if (!out) throw MatrixMarketError("cannot open " + path + " for writing");
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << A.rows() << ' ' << A.cols() << ' ' << A.nonZeros() << '\n';
  out << std::setprecision(17);
  for (int i = 0; i < A.outerSize(); ++i)
    for (typename SparseMat<Scalar>::InnerIterator it(A, i); it; ++it)
      out << it.row() + 1 << ' ' << it.col() + 1 << ' ' << double(it.value())
          << '\n';
  if (!out) throw MatrixMarketError("write failed for " + path);
}

/// Reads coordinate real/integer/pattern matrices, general or symmetric.
template <class Scalar>
SparseMat<Scalar> read_matrix_market(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MatrixMarketError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw MatrixMarketError("empty file " + path);
  std::istringstream banner(line);
  std::string tag, object, format, field, symmetry;
  banner >> tag >> object >> format >> field >> symmetry;
  if (tag != "%%MatrixMarket" || object != "matrix" || format != "coordinate")
    throw MatrixMarketError("unsupported Matrix Market header in " + path);
  const bool pattern = field == "pattern";
  if (!pattern && field != "real" && field != "integer")
    throw MatrixMarketError("unsupported field '" + field + "'");
  const bool symmetric = symmetry == "symmetric";
  if (!symmetric && symmetry != "general")
    throw MatrixMarketError("unsupported symmetry '" + symmetry + "'");

  while (std::getline(in, line) && (line.empty() || line[0] == '%')) {
  }
  long rows = 0, cols = 0, nnz = 0;
  if (!(std::istringstream(line) >> rows >> cols >> nnz) || rows < 0 ||
      cols < 0 || nnz < 0)
    throw MatrixMarketError("bad size line in " + path);

  std::vector<Eigen::Triplet<Scalar, int>> t;
  t.reserve(symmetric ? 2 * nnz : nnz);
  for (long k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 1.0;
    if (!(in >> i >> j) || (!pattern && !(in >> v)))
      throw MatrixMarketError("truncated entry list in " + path);
    if (i < 1 || i > rows || j < 1 || j > cols)
      throw MatrixMarketError("index out of range in " + path);
    t.emplace_back(int(i - 1), int(j - 1), Scalar(v));
    if (symmetric && i != j) t.emplace_back(int(j - 1), int(i - 1), Scalar(v));
  }
  SparseMat<Scalar> A(rows, cols);
  A.setFromTriplets(t.begin(), t.end());
  A.makeCompressed();
  return A;
}

}  // namespace otbb
