// Acceptance suite: one line per criterion, nonzero exit if any fails.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "sparsedm/bench.hpp"
#include "sparsedm/checkpoint.hpp"
#include "sparsedm/cli.hpp"
#include "sparsedm/compressed.hpp"
#include "sparsedm/config.hpp"
#include "sparsedm/diffusion.hpp"
#include "sparsedm/metrics.hpp"
#include "sparsedm/model.hpp"
#include "sparsedm/trainer.hpp"
#include "support.hpp"

using namespace sparsedm;
namespace fs = std::filesystem;
using sparsedm::testing::ScratchDir;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

const NoiseSchedule& default_schedule() {
  static const NoiseSchedule s = make_schedule(kDefaultSteps, kDefaultBetaStart, kDefaultBetaEnd);
  return s;
}

NoisePredictor initial_model(std::uint64_t seed) {
  Rng rng(seed, Stream::init);
  return NoisePredictor::init(Architecture{}, rng);
}

/// Dense teachers trained with the default 2,000-step recipe, cached per seed.
const NoisePredictor& dense_teacher(std::uint64_t seed) {
  static std::map<std::uint64_t, NoisePredictor> cache;
  auto it = cache.find(seed);
  if (it == cache.end()) {
    NoisePredictor model = initial_model(seed);
    TrainConfig cfg;
    cfg.seed = seed;
    train_dense(model, ToyDataset::parse("gauss8"), cfg, default_schedule());
    it = cache.emplace(seed, std::move(model)).first;
  }
  return it->second;
}

// 1 -------------------------------------------------------------------------
Outcome macs_reduction() {
  NoisePredictor model = initial_model(1);
  model.prune(NMPattern(2, 4));
  bool exact = true;
  std::uint64_t dense = 0, sparse = 0;
  for (Eigen::Index batch : {1, 7, 256}) {
    const MacsReport r = macs_count(model, batch);
    exact = exact && r.sparse_total * 2 == r.dense_total && r.reduction() == 0.5;
    for (const auto& layer : r.layers) exact = exact && layer.sparse * 2 == layer.dense;
    if (batch == 1) {
      dense = r.dense_total;
      sparse = r.sparse_total;
    }
  }
  return {exact, "dense " + std::to_string(dense) + " sparse " + std::to_string(sparse) + " per sample"};
}

// 2 -------------------------------------------------------------------------
Outcome projection_optimality() {
  Rng rng(2, Stream::eval);
  constexpr int kGroups = 10000;
  std::int64_t checked = 0, optimal = 0;
  for (int m : {4, 8}) {
    for (int g = 0; g < kGroups; ++g) {
      const Tensor w = sparsedm::testing::uniform_tensor(rng, 1, m);
      std::vector<float> group(w.data(), w.data() + m);
      for (int n = 1; n < m; ++n) {
        const SparseMask mask = project_mask(w, NMPattern(n, m));
        double kept = 0.0;
        for (int k = 0; k < m; ++k) {
          if (mask(0, k)) kept += std::abs(static_cast<double>(group[k]));
        }
        ++checked;
        if (mask.count_ones() == n && kept == sparsedm::testing::brute_force_best(group, n)) ++optimal;
      }
    }
  }
  return {optimal == checked, std::to_string(optimal) + "/" + std::to_string(checked) + " (group, n) cases optimal"};
}

// 3 -------------------------------------------------------------------------
Outcome compressed_equivalence() {
  Rng rng(3, Stream::eval);
  double worst_spmm = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const Eigen::Index rows = 1 + static_cast<Eigen::Index>(rng.uniform_int(512));
    const Eigen::Index cols = 4 * (1 + static_cast<Eigen::Index>(rng.uniform_int(128)));
    const Eigen::Index batch = 1 + static_cast<Eigen::Index>(rng.uniform_int(64));
    const Tensor w = rng.normal_tensor(rows, cols);
    const SparseMask mask = project_mask(w, NMPattern(2, 4));
    const Tensor masked = apply_mask(w, mask);
    const Tensor x = rng.normal_tensor(batch, cols);
    const Tensor reference = (x.cast<double>() * masked.cast<double>().transpose()).cast<float>();
    worst_spmm = std::max(worst_spmm, max_relative_error(spmm(compress_2_4(masked, mask), x), reference));
  }

  ScratchDir dir("acc3");
  NoisePredictor pruned = initial_model(3);
  TrainConfig cfg_dense;
  cfg_dense.steps = 300;
  train_dense(pruned, ToyDataset::parse("gauss8"), cfg_dense, default_schedule());
  pruned.prune(NMPattern(2, 4));
  save_model(dir / "pruned", pruned, nlohmann::ordered_json{{"label", "pruned"},
                                                             {"noise_schedule",
                                                              {{"time_steps", kDefaultSteps},
                                                               {"beta_start", kDefaultBetaStart},
                                                               {"beta_end", kDefaultBetaEnd}}}});
  RunConfig cfg;
  cfg.n = 2000;
  std::ostringstream log;
  cli::cmd_sample(cfg, {dir / "pruned" / "model.ckpt", false, false}, dir / "masked", log);
  cli::cmd_sample(cfg, {dir / "pruned" / "model.ckpt", true, false}, dir / "compressed", log);
  auto read_csv = [](const fs::path& p) {
    std::istringstream in(read_text(p));
    std::string line;
    std::getline(in, line);
    std::vector<double> values;
    while (std::getline(in, line)) {
      std::istringstream cells(line);
      std::string cell;
      while (std::getline(cells, cell, ',')) values.push_back(std::stod(cell));
    }
    return values;
  };
  const auto a = read_csv(dir / "masked" / "samples.csv");
  const auto b = read_csv(dir / "compressed" / "samples.csv");
  double worst_sample = a.size() == b.size() && !a.empty() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) {
    worst_sample = std::max(worst_sample, std::abs(a[i] - b[i]));
  }
  return {worst_spmm <= 1e-5 && worst_sample <= 1e-4,
          "spmm max rel err " + fmt(worst_spmm) + ", sampling max coord diff " + fmt(worst_sample)};
}

// 4 -------------------------------------------------------------------------
// Independent double-precision plain MLP evaluated at the sparse weights.
double plain_loss(const std::vector<Eigen::MatrixXd>& w, const std::vector<Eigen::MatrixXd>& b,
                  const Eigen::MatrixXd& x, const Eigen::MatrixXd& target) {
  Eigen::MatrixXd h = x;
  for (std::size_t i = 0; i < w.size(); ++i) {
    h = h * w[i].transpose();
    h.rowwise() += b[i].row(0);
    if (i + 1 < w.size()) h = h.unaryExpr([](double v) { return v / (1.0 + std::exp(-v)); });
  }
  return (h - target).squaredNorm() / static_cast<double>(h.size());
}

Outcome ste_gradient_contract() {
  Rng rng(4, Stream::eval);
  const std::vector<std::pair<int, int>> shapes = {{16, 12}, {16, 16}, {4, 16}};
  std::vector<MaskedLinear> layers;
  for (auto [out, in] : shapes) {
    MaskedLinear layer(rng.normal_tensor(out, in), sparsedm::testing::uniform_tensor(rng, 1, out, -0.1, 0.1));
    layer.prune(NMPattern(2, 4));
    layers.push_back(layer);
  }
  const Tensor x = rng.normal_tensor(8, 12);
  const Tensor target = rng.normal_tensor(8, 4);

  Tape tape;
  std::vector<LinearBinding> bindings;
  for (const auto& layer : layers) bindings.push_back(bind(tape, layer));
  Var h = tape.constant(x);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = masked_linear_forward(tape, h, layers[i], bindings[i]);
    if (i + 1 < layers.size()) h = silu(tape, h);
  }
  tape.backward(mse_loss(tape, h, tape.constant(target)));

  std::vector<Eigen::MatrixXd> w, b;
  for (const auto& layer : layers) {
    w.push_back(layer.effective_weight().cast<double>());
    b.push_back(layer.bias.cast<double>());
  }
  const Eigen::MatrixXd xd = x.cast<double>(), td = target.cast<double>();
  double worst = 0.0;
  std::int64_t pruned_nonzero = 0, pruned_total = 0;
  constexpr double h_fd = 1e-5;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Tensor& ste = tape.grad(bindings[i].weight);
    Eigen::MatrixXd fd(ste.rows(), ste.cols());
    for (Eigen::Index r = 0; r < ste.rows(); ++r) {
      for (Eigen::Index c = 0; c < ste.cols(); ++c) {
        const double keep = w[i](r, c);
        w[i](r, c) = keep + h_fd;
        const double up = plain_loss(w, b, xd, td);
        w[i](r, c) = keep - h_fd;
        const double down = plain_loss(w, b, xd, td);
        w[i](r, c) = keep;
        fd(r, c) = (up - down) / (2 * h_fd);
        if (!layers[i].mask(r, c)) {
          ++pruned_total;
          if (std::abs(ste(r, c)) > 1e-6) ++pruned_nonzero;
        }
      }
    }
    const double err = (ste.cast<double>() - fd).cwiseAbs().maxCoeff() / fd.cwiseAbs().maxCoeff();
    worst = std::max(worst, err);
  }
  return {worst <= 1e-3 && pruned_nonzero > 0,
          "max rel err vs finite differences " + fmt(worst) + ", nonzero grads at " +
              std::to_string(pruned_nonzero) + "/" + std::to_string(pruned_total) + " pruned positions"};
}

// 5 -------------------------------------------------------------------------
Outcome regularized_update_law() {
  Rng rng(5, Stream::eval);
  const Tensor w0 = sparsedm::testing::uniform_tensor(rng, 32, 64);
  const SparseMask mask = project_mask(w0, NMPattern(2, 4));
  const Tensor zero = Tensor::Zero(w0.rows(), w0.cols());
  const double lr = 0.1, lambda = 0.5;
  Tensor w = w0;
  double worst_pruned = 0.0;
  bool kept_invariant = true;
  for (int step = 1; step <= 100; ++step) {
    w = ste_update(w, zero, mask, lr, lambda);
    const double factor = std::pow(1.0 - lr * lambda, step);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        if (mask(r, c)) {
          kept_invariant = kept_invariant && w(r, c) == w0(r, c);
        } else {
          worst_pruned = std::max(worst_pruned, std::abs(w(r, c) - w0(r, c) * factor));
        }
      }
    }
  }
  return {kept_invariant && worst_pruned <= 1e-6,
          std::string("kept entries ") + (kept_invariant ? "invariant" : "CHANGED") +
              ", pruned max deviation from (1-lr*lambda)^k " + fmt(worst_pruned)};
}

// 6 -------------------------------------------------------------------------
Outcome parameter_halving() {
  NoisePredictor model = prune_one_shot(initial_model(6), NMPattern(2, 4));
  bool exact = true;
  std::string detail;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    const std::int64_t dense = layer.weight.size();
    const std::int64_t kept = layer.mask.count_ones();
    const std::int64_t nonzero = (layer.effective_weight().array() != 0.0f).count();
    exact = exact && kept * 2 == dense && nonzero <= kept;
    detail += NoisePredictor::layer_name(i) + " " + std::to_string(kept) + "/" + std::to_string(dense) + " ";
  }
  return {exact, detail};
}

// 7 -------------------------------------------------------------------------
Outcome transfer_quality() {
  const ToyDataset data = ToyDataset::parse("gauss8");
  double teacher_sum = 0.0, student_sum = 0.0;
  bool ordering = true;
  std::string detail;
  for (std::uint64_t seed : {0, 1, 2}) {
    const NoisePredictor& teacher = dense_teacher(seed);
    const NoisePredictor untrained = prune_one_shot(teacher, NMPattern(2, 4));
    NoisePredictor student = untrained;
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.steps = 4000;
    transfer_train(student, TeacherHandle(teacher), data, cfg, MaskSchedule::fixed(NMPattern(2, 4), cfg.steps),
                   default_schedule());
    const double ed_teacher = evaluate_quality(teacher, data, 2000, default_schedule(), seed).energy_distance;
    const double ed_untrained = evaluate_quality(untrained, data, 2000, default_schedule(), seed).energy_distance;
    const double ed_student = evaluate_quality(student, data, 2000, default_schedule(), seed).energy_distance;
    teacher_sum += ed_teacher;
    student_sum += ed_student;
    ordering = ordering && ed_student <= ed_untrained;
    detail += "seed " + std::to_string(seed) + ": teacher " + fmt(ed_teacher) + " student " + fmt(ed_student) +
              " untrained " + fmt(ed_untrained) + "; ";
  }
  const double ratio = student_sum / teacher_sum;
  return {ratio <= 1.5 && ordering, detail + "mean ratio " + fmt(ratio)};
}

// 8 -------------------------------------------------------------------------
Outcome ten_ratio_sweep() {
  ScratchDir dir("acc8");
  save_model(dir / "dense", dense_teacher(0), nlohmann::ordered_json{{"label", "dense"},
                                                                      {"noise_schedule",
                                                                       {{"time_steps", kDefaultSteps},
                                                                        {"beta_start", kDefaultBetaStart},
                                                                        {"beta_end", kDefaultBetaEnd}}}});
  std::ostringstream log;
  cli::cmd_sweep(RunConfig{}, dir / "dense" / "model.ckpt", dir / "sweep", log);
  std::istringstream in(read_text(dir / "sweep" / "sweep.csv"));
  std::string line;
  std::getline(in, line);
  std::vector<std::string> patterns;
  std::vector<std::uint64_t> macs;
  while (std::getline(in, line)) {
    std::istringstream cells(line);
    std::string pattern, sparsity, sparse;
    std::getline(cells, pattern, ',');
    std::getline(cells, sparsity, ',');
    std::getline(cells, sparse, ',');
    patterns.push_back(pattern);
    macs.push_back(std::stoull(sparse));
  }
  const std::vector<std::string> expected = {"32:32", "31:32", "15:16", "7:8", "3:4",
                                             "2:4",   "1:4",   "1:8",   "1:16", "1:32"};
  bool decreasing = !macs.empty();
  for (std::size_t i = 1; i < macs.size(); ++i) decreasing = decreasing && macs[i] < macs[i - 1];
  std::string listed;
  for (std::size_t i = 0; i < patterns.size(); ++i) listed += patterns[i] + "=" + std::to_string(macs[i]) + " ";
  return {patterns == expected && decreasing, listed};
}

// 9 -------------------------------------------------------------------------
Outcome transposable_masks() {
  Rng rng(9, Stream::eval);
  const auto supports = sparsedm::testing::enumerate_doubly_2_4_blocks();
  int valid = 0, optimal_blocks = 0, blocks = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Eigen::Index rows = 4 * (1 + static_cast<Eigen::Index>(rng.uniform_int(8)));
    const Eigen::Index cols = 4 * (1 + static_cast<Eigen::Index>(rng.uniform_int(8)));
    const Tensor w = rng.normal_tensor(rows, cols);
    const SparseMask mask = make_transposable(w);
    if (is_transposable(mask, NMPattern(2, 4))) ++valid;
    for (Eigen::Index br = 0; br < rows; br += 4) {
      for (Eigen::Index bc = 0; bc < cols; bc += 4) {
        double got = 0.0, best = 0.0;
        for (int k = 0; k < 16; ++k) {
          if (mask(br + k / 4, bc + k % 4)) got += std::abs(static_cast<double>(w(br + k / 4, bc + k % 4)));
        }
        for (std::uint16_t s : supports) {
          double v = 0.0;
          for (int k = 0; k < 16; ++k) {
            if (s & (1u << k)) v += std::abs(static_cast<double>(w(br + k / 4, bc + k % 4)));
          }
          best = std::max(best, v);
        }
        ++blocks;
        if (std::abs(got - best) <= 1e-12 * std::max(1.0, best)) ++optimal_blocks;
      }
    }
  }
  return {supports.size() == 90 && valid == 100 && optimal_blocks == blocks,
          std::to_string(valid) + "/100 transposable, " + std::to_string(optimal_blocks) + "/" +
              std::to_string(blocks) + " blocks optimal over " + std::to_string(supports.size()) + " supports"};
}

// 10 ------------------------------------------------------------------------
Outcome reproducibility() {
  std::vector<std::string> mismatches;
  auto run_both = [&](const std::string& tag, const std::vector<std::string>& args_template,
                      const std::vector<std::string>& files, const ScratchDir& a, const ScratchDir& b) {
    for (const ScratchDir* d : {&a, &b}) {
      std::vector<std::string> args;
      for (const auto& arg : args_template) {
        std::string s = arg;
        const auto pos = s.find("@");
        if (pos != std::string::npos) s = (d->path() / s.substr(pos + 1)).string();
        args.push_back(s);
      }
      std::ostringstream out, err;
      if (cli::run(args, out, err) != 0) mismatches.push_back(tag + " failed: " + err.str());
    }
    for (const auto& f : files) {
      const auto x = sparsedm::testing::file_bytes(a / f);
      const auto y = sparsedm::testing::file_bytes(b / f);
      if (x.empty() || x != y) mismatches.push_back(f);
    }
  };
  ScratchDir a("acc10a"), b("acc10b");
  run_both("train-dense", {"train-dense", "--steps", "60", "--seed", "3", "--out", "@dense"},
           {"dense/model.ckpt", "dense/meta.json", "dense/trace.jsonl"}, a, b);
  run_both("prune", {"prune", "--ckpt", "@dense/model.ckpt", "--pattern", "2:4", "--out", "@pruned"},
           {"pruned/model.ckpt", "pruned/meta.json"}, a, b);
  run_both("train-sparse",
           {"train-sparse", "--student", "@pruned/model.ckpt", "--teacher", "@dense/model.ckpt", "--steps", "30",
            "--teacher-pool", "256", "--seed", "3", "--out", "@student"},
           {"student/model.ckpt", "student/meta.json", "student/trace.jsonl"}, a, b);
  run_both("sample", {"sample", "--ckpt", "@student/model.ckpt", "--n", "300", "--svg", "--out", "@samples"},
           {"samples/samples.csv", "samples/samples.svg"}, a, b);
  run_both("eval", {"eval", "--ckpt", "@student/model.ckpt", "--n", "300", "--out", "@eval"},
           {"eval/report.json"}, a, b);
  run_both("sweep",
           {"sweep", "--ckpt", "@dense/model.ckpt", "--patterns", "2:4,1:4", "--steps", "20", "--n", "200",
            "--teacher-pool", "128", "--out", "@sweep"},
           {"sweep/sweep.csv"}, a, b);

  // bench timings are wall-clock; only the numeric columns are compared
  std::ostringstream log;
  RunConfig bench_cfg;
  bench_cfg.bench_sizes = "64x64x8";
  bench_cfg.bench_reps = 3;
  cli::cmd_bench(bench_cfg, a / "bench", log);
  cli::cmd_bench(bench_cfg, b / "bench", log);
  auto numeric = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string line, kept;
    while (std::getline(in, line)) {
      std::vector<std::string> cells;
      std::istringstream row(line);
      std::string cell;
      while (std::getline(row, cell, ',')) cells.push_back(cell);
      for (std::size_t i = 0; i < cells.size(); ++i) {
        if (i != 4 && i != 5) kept += cells[i] + ",";
      }
      kept += "\n";
    }
    return kept;
  };
  if (numeric(read_text(a / "bench" / "bench.csv")) != numeric(read_text(b / "bench" / "bench.csv"))) {
    mismatches.push_back("bench/bench.csv numeric columns");
  }

  // checkpoint roundtrip: load then save reproduces both files byte for byte
  const StoredModel loaded = load_model(a / "student" / "model.ckpt");
  save_model(a / "roundtrip", loaded.model, loaded.meta);
  for (const std::string f : {"model.ckpt", "meta.json"}) {
    if (sparsedm::testing::file_bytes(a / ("student/" + f)) != sparsedm::testing::file_bytes(a / ("roundtrip/" + f))) {
      mismatches.push_back("roundtrip " + f);
    }
  }
  std::string detail = mismatches.empty() ? "7 commands and checkpoint roundtrip byte-identical" : "mismatch:";
  for (const auto& m : mismatches) detail += " " + m;
  return {mismatches.empty(), detail};
}

// 11 ------------------------------------------------------------------------
// Vanilla STE loop written directly against Eigen: hand-coded 2:4 magnitude
// masks, forward, backward and SGD, with the same float/double conventions.
Outcome baseline_reduction() {
  const std::uint64_t seed = 11;
  const int steps = 100, batch = 256;
  const double lr = 0.1;
  const NoiseSchedule& sched = default_schedule();
  const ToyDataset data = ToyDataset::parse("gauss8");
  const NoisePredictor start = prune_one_shot(initial_model(seed), NMPattern(2, 4));

  NoisePredictor library_model = start;
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.steps = steps;
  cfg.batch_size = batch;
  cfg.lr = lr;
  cfg.lambda_w = 0.0;
  cfg.lambda_dense = 0.0;
  cfg.lambda_diff = 1.0;
  const TrainResult trace = transfer_train(library_model, TeacherHandle(start), data, cfg,
                                           MaskSchedule::fixed(NMPattern(2, 4), steps), sched);

  std::vector<Tensor> W, B;
  for (const auto& layer : start.layers()) {
    W.push_back(layer.weight);
    B.push_back(layer.bias);
  }
  auto top2 = [](const Tensor& w) {
    Tensor sparse = Tensor::Zero(w.rows(), w.cols());
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index g = 0; g < w.cols(); g += 4) {
        int order[4] = {0, 1, 2, 3};
        std::stable_sort(order, order + 4, [&](int p, int q) { return std::abs(w(r, g + p)) > std::abs(w(r, g + q)); });
        for (int k = 0; k < 2; ++k) sparse(r, g + order[k]) = w(r, g + order[k]);
      }
    }
    return sparse;
  };
  auto act = [](float v) { return static_cast<float>(v / (1.0 + std::exp(-static_cast<double>(v)))); };
  auto act_grad = [](float v) {
    const double s = 1.0 / (1.0 + std::exp(-static_cast<double>(v)));
    return static_cast<float>(s * (1.0 + v * (1.0 - s)));
  };

  Rng data_rng(seed, Stream::data), noise_rng(seed, Stream::noise);
  const Architecture arch;
  bool losses_match = true;
  for (int step = 0; step < steps; ++step) {
    std::vector<Tensor> Ws;
    for (const auto& w : W) Ws.push_back(top2(w));
    const Tensor x0 = toy_batch(data, batch, data_rng);
    const NoisyBatch noisy = make_noisy_batch(x0, sched, noise_rng);
    const Tensor emb = time_embedding(noisy.t, sched.steps(), arch.embed_dim);
    Tensor in = Tensor::Zero(batch, arch.input_width());
    in.leftCols(2) = noisy.x_t;
    in.middleCols(2, arch.embed_dim) = emb;

    std::vector<Tensor> inputs{in}, pre;
    for (std::size_t i = 0; i < 3; ++i) {
      Tensor z = (inputs.back().cast<double>() * Ws[i].cast<double>().transpose()).cast<float>();
      z.rowwise() += B[i].row(0);
      pre.push_back(z);
      if (i < 2) inputs.push_back(z.unaryExpr(act));
    }
    const Tensor pred = pre[2].leftCols(2);
    const double count = static_cast<double>(pred.size());
    const Eigen::MatrixXd diff = pred.cast<double>() - noisy.eps.cast<double>();
    const double loss = diff.squaredNorm() / count;
    losses_match = losses_match && static_cast<float>(loss) == static_cast<float>(trace.trace[step].loss_total);

    Tensor g = Tensor::Zero(batch, 4);
    g.leftCols(2) = ((2.0 / count) * diff).cast<float>();
    for (int i = 2; i >= 0; --i) {
      const Eigen::MatrixXd gd = g.cast<double>();
      const Tensor gw = (gd.transpose() * inputs[i].cast<double>()).cast<float>();
      const Tensor gb = gd.colwise().sum().cast<float>();
      if (i > 0) {
        const Tensor gx = (gd * Ws[i].cast<double>()).cast<float>();
        g = gx.cwiseProduct(pre[i - 1].unaryExpr(act_grad));
      }
      W[i] = (W[i].cast<double>() - lr * gw.cast<double>()).cast<float>();
      B[i] = (B[i].cast<double>() - lr * gb.cast<double>()).cast<float>();
    }
  }
  bool bitwise = true;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto& layer = library_model.layers()[i];
    bitwise = bitwise && std::memcmp(layer.weight.data(), W[i].data(), sizeof(float) * W[i].size()) == 0 &&
              std::memcmp(layer.bias.data(), B[i].data(), sizeof(float) * B[i].size()) == 0;
  }
  return {bitwise && losses_match, std::string("weights and biases ") + (bitwise ? "bit-identical" : "DIFFER") +
                                       ", losses " + (losses_match ? "identical" : "DIFFER") + " over 100 steps"};
}

struct Criterion {
  int id;
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {1, "macs_reduction", 1, macs_reduction},
      {2, "projection_optimality", 10, projection_optimality},
      {3, "compressed_path_equivalence", 30, compressed_equivalence},
      {4, "ste_gradient_contract", 30, ste_gradient_contract},
      {5, "regularized_update_law", 1, regularized_update_law},
      {6, "per_layer_parameter_halving", 1, parameter_halving},
      {7, "end_to_end_transfer_quality", 600, transfer_quality},
      {8, "ten_ratio_sweep", 900, ten_ratio_sweep},
      {9, "transposable_masks", 10, transposable_masks},
      {10, "reproducibility", 60, reproducibility},
      {11, "baseline_reduction", 30, baseline_reduction},
  };
  std::set<int> selected;
  for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));

  int failures = 0;
  for (const auto& c : criteria) {
    if (!selected.empty() && !selected.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome outcome;
    try {
      outcome = c.run();
    } catch (const std::exception& e) {
      outcome = {false, std::string("exception: ") + e.what()};
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const bool in_budget = elapsed < c.budget_s;
    const bool pass = outcome.pass && in_budget;
    if (!pass) ++failures;
    std::cout << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " " << c.name << " (" << fmt(elapsed)
              << " s, budget " << c.budget_s << " s" << (in_budget ? "" : " EXCEEDED") << "): " << outcome.detail
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
