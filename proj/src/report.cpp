#include "sparsedm/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace sparsedm {

std::string format_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string trace_jsonl(const std::vector<TraceRecord>& trace) {
  std::string out;
  for (const auto& r : trace) {
    nlohmann::ordered_json j;
    j["step"] = r.step;
    j["loss_total"] = r.loss_total;
    j["loss_diff"] = r.loss_diff;
    j["loss_dense"] = r.loss_dense;
    j["active_pattern"] = r.active_pattern;
    j["sparsity"] = r.sparsity;
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = std::string(kSweepHeader) + "\n";
  for (const auto& r : rows) {
    out += r.pattern.to_string() + "," + format_number(r.sparsity) + "," + std::to_string(r.macs_sparse) +
           "," + std::to_string(r.macs_dense) + "," + format_number(r.energy_distance) + "\n";
  }
  return out;
}

std::string bench_csv(const std::vector<BenchRecord>& records) {
  std::string out = std::string(kBenchHeader) + "\n";
  for (const auto& r : records) {
    out += std::to_string(r.size.rows) + "," + std::to_string(r.size.cols) + "," +
           std::to_string(r.size.batch) + "," + std::to_string(r.reps) + "," +
           std::to_string(r.t_dense_ns) + "," + std::to_string(r.t_spmm_ns) + "," +
           format_number(r.macs_ratio()) + "," + format_number(r.max_rel_err) + "\n";
  }
  return out;
}

std::string samples_csv(const Tensor& samples) {
  std::string out = std::string(kSamplesHeader) + "\n";
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    out += format_number(samples(i, 0)) + "," + format_number(samples(i, 1)) + "\n";
  }
  return out;
}

std::string samples_svg(const Tensor& samples) {
  constexpr double size = 480.0;
  constexpr double extent = 3.0;  // data window is [-extent, extent]^2
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
     << "\" viewBox=\"0 0 " << size << ' ' << size << "\">\n"
     << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (Eigen::Index i = 0; i < samples.rows(); ++i) {
    const double x = std::clamp((samples(i, 0) + extent) / (2 * extent), 0.0, 1.0) * size;
    const double y = (1.0 - std::clamp((samples(i, 1) + extent) / (2 * extent), 0.0, 1.0)) * size;
    os << "<circle cx=\"" << format_number(x) << "\" cy=\"" << format_number(y)
       << "\" r=\"1.5\" fill=\"steelblue\" fill-opacity=\"0.6\"/>\n";
  }
  os << "</svg>\n";
  return os.str();
}

nlohmann::ordered_json eval_report(const QualityReport& quality, const MacsReport& macs) {
  nlohmann::ordered_json j;
  j["energy_distance"] = quality.energy_distance;
  j["macs_dense"] = macs.dense_total;
  j["macs_sparse"] = macs.sparse_total;
  j["reduction"] = macs.reduction();
  j["n"] = quality.n_generated;
  j["seed"] = quality.seed;
  j["metric"] = kQualityMetric;
  return j;
}

}  // namespace sparsedm
