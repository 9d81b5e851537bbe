#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsedm/diffusion.hpp"
#include "sparsedm/metrics.hpp"
#include "sparsedm/model.hpp"
#include "sparsedm/trainer.hpp"

namespace sparsedm {

/// Energy distance between model samples and fresh data (stand-in for FID).
struct QualityReport {
  double energy_distance = 0.0;
  Eigen::Index n_generated = 0;
  Eigen::Index n_reference = 0;
  std::uint64_t seed = 0;
};

/// Draws n samples (Stream::sample) and n reference points (Stream::eval).
QualityReport evaluate_quality(const NoisePredictor& model, const ToyDataset& data, Eigen::Index n,
                               const NoiseSchedule& sched, std::uint64_t seed);

/// The ten ratios from 32:32 down to 1:32.
std::vector<NMPattern> default_sweep_patterns();

struct SweepRow {
  NMPattern pattern;
  double sparsity = 0.0;
  std::uint64_t macs_sparse = 0;
  std::uint64_t macs_dense = 0;
  double energy_distance = 0.0;
};

struct SweepOptions {
  TrainConfig train;              // per-pattern transfer budget and weights
  Eigen::Index eval_samples = 2000;
  unsigned threads = 1;
};

/// For each pattern: prune the dense model, transfer-train it against the
/// dense model, then measure MACs (batch 1) and quality. Rows come back
/// sorted by sparsity. Entries run on up to `threads` workers; each uses its
/// own RNG streams so results do not depend on the thread count.
std::vector<SweepRow> sweep_ratios(const NoisePredictor& dense, const std::vector<NMPattern>& patterns,
                                   const ToyDataset& data, const SweepOptions& options,
                                   const NoiseSchedule& sched);

struct BenchSize {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  Eigen::Index batch = 0;
};

/// Parses "ROWSxCOLSxBATCH[,...]".
std::vector<BenchSize> parse_bench_sizes(const std::string& text);
std::vector<BenchSize> default_bench_sizes();

struct BenchRecord {
  BenchSize size;
  int reps = 0;
  std::int64_t t_dense_ns = 0;  // median
  std::int64_t t_spmm_ns = 0;   // median
  std::uint64_t macs_dense = 0;
  std::uint64_t macs_spmm = 0;
  double max_rel_err = 0.0;

  double macs_ratio() const { return static_cast<double>(macs_spmm) / static_cast<double>(macs_dense); }
};

/// Relative divergence max|a - b| / max(max|b|, 1e-30).
double max_relative_error(const Tensor& a, const Tensor& b);

/// Times dense_matmul_nt on the masked weight against spmm on its compressed
/// form, on identical random data. Reports timings only; no speedup is implied.
std::vector<BenchRecord> bench_spmm(const std::vector<BenchSize>& sizes, int reps, std::uint64_t seed);

}  // namespace sparsedm
