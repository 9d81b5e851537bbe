#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "sparsedm/bench.hpp"
#include "sparsedm/metrics.hpp"
#include "sparsedm/trainer.hpp"

namespace sparsedm {

inline constexpr const char* kSweepHeader = "pattern,sparsity,macs_sparse,macs_dense,energy_distance";
inline constexpr const char* kBenchHeader =
    "rows,cols,batch,reps,t_dense_ns,t_spmm_ns,macs_ratio,max_rel_err";
inline constexpr const char* kSamplesHeader = "x,y";
inline constexpr const char* kQualityMetric = "energy_distance(FID proxy)";

/// One JSON object per line: step, loss_total, loss_diff, loss_dense,
/// active_pattern, sparsity.
std::string trace_jsonl(const std::vector<TraceRecord>& trace);

std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string bench_csv(const std::vector<BenchRecord>& records);
std::string samples_csv(const Tensor& samples);
/// Minimal scatter plot.
std::string samples_svg(const Tensor& samples);

nlohmann::ordered_json eval_report(const QualityReport& quality, const MacsReport& macs);

std::string format_number(double v);

}  // namespace sparsedm
