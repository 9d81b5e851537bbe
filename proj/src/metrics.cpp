#include "sparsedm/metrics.hpp"

namespace sparsedm {

double MacsReport::reduction() const {
  if (dense_total == 0) return 0.0;
  return 1.0 - static_cast<double>(sparse_total) / static_cast<double>(dense_total);
}

MacsReport macs_count(const NoisePredictor& model, Eigen::Index batch) {
  MacsReport report;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const MaskedLinear& layer = model.layers()[i];
    LayerMacs entry;
    entry.name = NoisePredictor::layer_name(i);
    entry.dense = static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(layer.out_features()) *
                  static_cast<std::uint64_t>(layer.in_features());
    entry.sparse = entry.dense / static_cast<std::uint64_t>(layer.pattern.m) *
                   static_cast<std::uint64_t>(layer.pattern.n);
    report.dense_total += entry.dense;
    report.sparse_total += entry.sparse;
    report.layers.push_back(std::move(entry));
  }
  return report;
}

}  // namespace sparsedm
