#pragma once

#include <cstddef>
#include <sstream>
#include <string>

#include <Eigen/Core>

namespace sparsedm {

/// Row-major dense matrix; row-major matches the on-disk layout and the
/// per-row grouping of N:M masks.
template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// The numeric carrier of the library: 32-bit floats, shape rows x cols.
/// Vectors (biases) are 1 x n.
using Tensor = RowMatrix<float>;

template <typename Derived>
std::string shape_string(const Eigen::EigenBase<Derived>& m) {
  std::ostringstream os;
  os << '[' << m.rows() << 'x' << m.cols() << ']';
  return os.str();
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace sparsedm
