#include "sparsedm/bench.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <sstream>
#include <thread>

#include "sparsedm/compressed.hpp"

namespace sparsedm {

QualityReport evaluate_quality(const NoisePredictor& model, const ToyDataset& data, Eigen::Index n,
                               const NoiseSchedule& sched, std::uint64_t seed) {
  if (n < 1) throw ContractError("evaluate_quality: n must be positive");
  Rng sample_rng(seed, Stream::sample);
  Rng eval_rng(seed, Stream::eval);
  const Tensor generated = ddpm_sample(model, n, sched, sample_rng);
  const Tensor reference = toy_batch(data, n, eval_rng);
  QualityReport report;
  report.energy_distance = energy_distance(generated, reference);
  report.n_generated = n;
  report.n_reference = n;
  report.seed = seed;
  return report;
}

std::vector<NMPattern> default_sweep_patterns() {
  return {{32, 32}, {31, 32}, {15, 16}, {7, 8}, {3, 4}, {2, 4}, {1, 4}, {1, 8}, {1, 16}, {1, 32}};
}

std::vector<SweepRow> sweep_ratios(const NoisePredictor& dense, const std::vector<NMPattern>& patterns,
                                   const ToyDataset& data, const SweepOptions& options,
                                   const NoiseSchedule& sched) {
  options.train.validate();
  for (const auto& p : patterns) {
    // fail fast on divisibility before any training starts
    (void)prune_one_shot(dense, p);
  }
  const TeacherHandle teacher(dense);
  std::vector<SweepRow> rows(patterns.size());

  auto run_entry = [&](std::size_t i) {
    const NMPattern& pattern = patterns[i];
    NoisePredictor student = prune_one_shot(dense, pattern);
    transfer_train(student, teacher, data, options.train,
                   MaskSchedule::fixed(pattern, options.train.steps), sched);
    const MacsReport macs = macs_count(student, 1);
    const QualityReport quality =
        evaluate_quality(student, data, options.eval_samples, sched, options.train.seed);
    rows[i] = SweepRow{pattern, pattern.sparsity(), macs.sparse_total, macs.dense_total,
                       quality.energy_distance};
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(options.threads,
                                                           static_cast<unsigned>(patterns.size())));
  if (workers == 1) {
    for (std::size_t i = 0; i < patterns.size(); ++i) run_entry(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t i = next++; i < patterns.size(); i = next++) run_entry(i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  std::stable_sort(rows.begin(), rows.end(),
                   [](const SweepRow& a, const SweepRow& b) { return a.sparsity < b.sparsity; });
  return rows;
}

std::vector<BenchSize> parse_bench_sizes(const std::string& text) {
  std::vector<BenchSize> out;
  std::stringstream list(text);
  std::string item;
  while (std::getline(list, item, ',')) {
    BenchSize s;
    char x1 = 0, x2 = 0;
    std::istringstream in(item);
    if (!(in >> s.rows >> x1 >> s.cols >> x2 >> s.batch) || x1 != 'x' || x2 != 'x' || !in.eof() ||
        s.rows < 1 || s.cols < 1 || s.batch < 1) {
      throw ConfigError("bench size must look like ROWSxCOLSxBATCH, got '" + item + "'");
    }
    if (s.cols % 4 != 0) throw ConfigError("bench size '" + item + "': cols must be a multiple of 4");
    out.push_back(s);
  }
  if (out.empty()) throw ConfigError("no bench sizes given");
  if (text.back() == ',') throw ConfigError("trailing comma in bench sizes");
  return out;
}

std::vector<BenchSize> default_bench_sizes() {
  return {{128, 128, 16}, {256, 256, 32}, {512, 512, 64}, {1024, 1024, 64}};
}

double max_relative_error(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("max_relative_error: shape mismatch");
  }
  if (a.size() == 0) return 0.0;
  const double diff = (a.cast<double>() - b.cast<double>()).cwiseAbs().maxCoeff();
  const double scale = std::max(b.cast<double>().cwiseAbs().maxCoeff(), 1e-30);
  return diff / scale;
}

std::vector<BenchRecord> bench_spmm(const std::vector<BenchSize>& sizes, int reps, std::uint64_t seed) {
  if (reps < 1) throw ConfigError("bench needs at least one repetition");
  for (const auto& s : sizes) {
    if (s.cols % 4 != 0) {
      throw PatternError("bench: cols " + std::to_string(s.cols) + " not divisible by 4");
    }
  }
  Rng rng(seed, Stream::bench);
  std::vector<BenchRecord> records;
  using clock = std::chrono::steady_clock;
  auto median = [](std::vector<std::int64_t> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };

  for (const auto& s : sizes) {
    const Tensor w = rng.normal_tensor(s.rows, s.cols);
    const Tensor x = rng.normal_tensor(s.batch, s.cols);
    const SparseMask mask = project_mask(w, NMPattern(2, 4));
    const Tensor masked = apply_mask(w, mask);
    const Compressed24 packed = compress_2_4(masked, mask);

    BenchRecord rec;
    rec.size = s;
    rec.reps = reps;
    std::vector<std::int64_t> dense_ns, spmm_ns;
    Tensor y_dense, y_spmm;
    for (int r = 0; r < reps; ++r) {
      std::uint64_t macs = 0;
      auto t0 = clock::now();
      y_dense = dense_matmul_nt(masked, x, macs);
      auto t1 = clock::now();
      dense_ns.push_back(std::max<std::int64_t>(1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
      rec.macs_dense = macs;

      macs = 0;
      t0 = clock::now();
      y_spmm = spmm(packed, x, macs);
      t1 = clock::now();
      spmm_ns.push_back(std::max<std::int64_t>(1, std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count()));
      rec.macs_spmm = macs;
    }
    rec.t_dense_ns = median(dense_ns);
    rec.t_spmm_ns = median(spmm_ns);
    rec.max_rel_err = max_relative_error(y_spmm, y_dense);
    records.push_back(rec);
  }
  return records;
}

}  // namespace sparsedm
