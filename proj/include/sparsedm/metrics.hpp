#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "sparsedm/errors.hpp"
#include "sparsedm/model.hpp"

namespace sparsedm {

struct LayerMacs {
  std::string name;
  std::uint64_t dense = 0;
  std::uint64_t sparse = 0;
};

/// Multiply-accumulates of the linear layers for one forward pass.
struct MacsReport {
  std::vector<LayerMacs> layers;
  std::uint64_t dense_total = 0;
  std::uint64_t sparse_total = 0;

  /// 1 - sparse/dense
  double reduction() const;
};

/// Dense layer MACs are batch * out * in; a layer with pattern N:M executes
/// dense * N / M.
MacsReport macs_count(const NoisePredictor& model, Eigen::Index batch);

/// Energy distance 2 E|A-B| - E|A-A'| - E|B-B'| between two point sets
/// (rows are points), with every expectation an exact mean over all pairs.
/// Distances are accumulated in double.
template <typename DerivedA, typename DerivedB>
double energy_distance(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  if (a.rows() == 0 || b.rows() == 0) throw ContractError("energy_distance: empty sample set");
  if (a.cols() != b.cols()) throw DimensionError("energy_distance: point dimensions differ");
  const Eigen::MatrixXd x = a.template cast<double>();
  const Eigen::MatrixXd y = b.template cast<double>();
  auto mean_pairwise = [](const Eigen::MatrixXd& p, const Eigen::MatrixXd& q) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      double row = 0.0;
      for (Eigen::Index j = 0; j < q.rows(); ++j) row += (p.row(i) - q.row(j)).norm();
      total += row;
    }
    return total / (static_cast<double>(p.rows()) * static_cast<double>(q.rows()));
  };
  const double value = 2.0 * mean_pairwise(x, y) - mean_pairwise(x, x) - mean_pairwise(y, y);
  return value < 0.0 ? 0.0 : value;
}

}  // namespace sparsedm
