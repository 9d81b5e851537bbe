#include "sparsedm/cli.hpp"

#include <algorithm>
#include <functional>
#include <iostream>
#include <memory>

#include <CLI11.hpp>

#include "sparsedm/bench.hpp"
#include "sparsedm/checkpoint.hpp"
#include "sparsedm/errors.hpp"
#include "sparsedm/metrics.hpp"
#include "sparsedm/report.hpp"

namespace sparsedm::cli {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

void prepare_out_dir(const fs::path& dir, const RunConfig& config, const std::string& command) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw ConfigError("cannot create output directory " + dir.string());
  ordered_json echo = config.to_json();
  echo["command"] = command;
  write_text(dir / "config.json", echo.dump(2) + "\n");
}

ordered_json schedule_json(const NoiseSchedule& s, const RunConfig& config) {
  ordered_json j;
  j["time_steps"] = s.steps();
  j["beta_start"] = config.beta_start;
  j["beta_end"] = config.beta_end;
  return j;
}

NoiseSchedule schedule_from_meta(const ordered_json& meta) {
  try {
    const auto& j = meta.at("noise_schedule");
    return make_schedule(j.at("time_steps").get<int>(), j.at("beta_start").get<double>(),
                         j.at("beta_end").get<double>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("meta.json lacks a noise schedule: ") + e.what());
  }
}

ordered_json mask_schedule_json(const MaskSchedule& s) {
  ordered_json j;
  j["mode"] = s.mode() == ScheduleMode::fixed ? "fixed" : "progressive";
  ordered_json stages = ordered_json::array();
  for (const auto& st : s.stages()) {
    stages.push_back({{"pattern", st.pattern.to_string()}, {"begin", st.begin}, {"end", st.end}});
  }
  j["stages"] = stages;
  return j;
}

/// Pattern shared by every layer, or nullopt when layers differ.
std::optional<NMPattern> common_pattern(const NoisePredictor& model) {
  const NMPattern first = model.layers().front().pattern;
  for (const auto& layer : model.layers()) {
    if (!(layer.pattern == first)) return std::nullopt;
  }
  return first;
}

std::string pattern_label(const NoisePredictor& model) {
  const auto p = common_pattern(model);
  return p ? p->to_string() : "mixed";
}

void log_sparsity(const NoisePredictor& model, std::ostream& log) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const auto& layer = model.layers()[i];
    log << NoisePredictor::layer_name(i) << " " << shape_string(layer.weight) << " pattern "
        << layer.pattern.to_string() << " sparsity " << format_number(sparsity_ratio(layer.mask)) << "\n";
  }
}

/// Flags that override RunConfig fields.
class Overrides {
 public:
  template <typename T>
  void add(CLI::App* app, const std::string& flag, T RunConfig::*field, const std::string& help) {
    CLI::Option* opt = app->add_option(flag, flags_.*field, help);
    items_.emplace_back(opt, [field](RunConfig& dst, const RunConfig& src) { dst.*field = src.*field; });
  }
  template <typename T>
  CLI::Option* add_list(CLI::App* app, const std::string& flag, std::vector<T> RunConfig::*field,
                        const std::string& help) {
    CLI::Option* opt = app->add_option(flag, flags_.*field, help)->delimiter(',');
    items_.emplace_back(opt, [field](RunConfig& dst, const RunConfig& src) { dst.*field = src.*field; });
    return opt;
  }
  void apply(RunConfig& config) const {
    for (const auto& [opt, copy] : items_) {
      if (opt->count() > 0) copy(config, flags_);
    }
  }

 private:
  RunConfig flags_;
  std::vector<std::pair<CLI::Option*, std::function<void(RunConfig&, const RunConfig&)>>> items_;
};

struct Command {
  CLI::App* app = nullptr;
  Overrides overrides;
  std::string config_path;
  std::string out_dir;
};

void add_common(Command& c) {
  c.app->add_option("--config", c.config_path, "JSON run configuration");
  c.overrides.add(c.app, "--seed", &RunConfig::seed, "Run seed");
  c.app->add_option("--out", c.out_dir, "Output directory")->required();
}

void add_training(Command& c) {
  c.overrides.add(c.app, "--data", &RunConfig::data, "gauss8 | swiss_roll | checkerboard");
  c.overrides.add(c.app, "--steps", &RunConfig::steps, "Training steps");
  c.overrides.add(c.app, "--batch-size", &RunConfig::batch_size, "Batch size");
  c.overrides.add(c.app, "--lr", &RunConfig::lr, "Learning rate");
  c.overrides.add(c.app, "--lr-schedule", &RunConfig::lr_schedule, "constant | cosine");
}

void add_diffusion(Command& c) {
  c.overrides.add(c.app, "--time-steps", &RunConfig::time_steps, "Diffusion steps T");
  c.overrides.add(c.app, "--beta-start", &RunConfig::beta_start, "First beta");
  c.overrides.add(c.app, "--beta-end", &RunConfig::beta_end, "Last beta");
  c.overrides.add(c.app, "--hidden", &RunConfig::hidden, "Hidden width");
  c.overrides.add(c.app, "--embed-dim", &RunConfig::embed_dim, "Time embedding width");
}

void add_sparse_training(Command& c) {
  c.overrides.add(c.app, "--lambda-w", &RunConfig::lambda_w, "Sparse-mask regularization weight");
  c.overrides.add(c.app, "--lambda-dense", &RunConfig::lambda_dense, "Distillation loss weight");
  c.overrides.add(c.app, "--lambda-diff", &RunConfig::lambda_diff, "Diffusion loss weight");
  c.overrides.add(c.app, "--mask-refresh", &RunConfig::mask_refresh, "Mask re-projection interval (0 = frozen)");
  c.overrides.add(c.app, "--teacher-pool", &RunConfig::teacher_pool, "Teacher samples for distillation");
}

RunConfig resolve(const Command& c) {
  RunConfig config = c.config_path.empty() ? RunConfig{} : RunConfig::from_file(c.config_path);
  c.overrides.apply(config);
  config.validate();
  return config;
}

void check_compatible(const StoredModel& a, const StoredModel& b) {
  if (!(a.model.architecture() == b.model.architecture())) {
    throw ArchitectureError("student and teacher architectures differ");
  }
  if (a.meta.value("noise_schedule", ordered_json()) != b.meta.value("noise_schedule", ordered_json())) {
    throw ArchitectureError("student and teacher were built for different noise schedules");
  }
}

}  // namespace

void cmd_train_dense(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  prepare_out_dir(out_dir, config, "train-dense");
  const NoiseSchedule sched = config.noise_schedule();
  Rng init_rng(config.seed, Stream::init);
  NoisePredictor model = NoisePredictor::init(config.architecture(), init_rng);
  const TrainResult result = train_dense(model, config.dataset(), config.train_config(), sched);

  ordered_json meta;
  meta["label"] = "dense";
  meta["data"] = config.data;
  meta["seed"] = config.seed;
  meta["pattern"] = pattern_label(model);
  meta["noise_schedule"] = schedule_json(sched, config);
  meta["mask_schedule"] = nullptr;
  meta["steps"] = config.steps;
  save_model(out_dir, model, meta);
  write_text(out_dir / "trace.jsonl", trace_jsonl(result.trace));
  if (!result.trace.empty()) {
    log << "trained " << result.trace.size() << " steps, final loss "
        << format_number(result.trace.back().loss_total) << "\n";
  }
}

void cmd_prune(const RunConfig& config, const PruneOptions& opts, const fs::path& out_dir, std::ostream& log) {
  const NMPattern pattern = NMPattern::parse(opts.pattern);
  if (opts.transposable && !pattern.is_2_4()) {
    throw PatternError("--transposable supports only the 2:4 pattern");
  }
  StoredModel stored = load_model(opts.ckpt);
  if (opts.transposable) {
    stored.model.prune_transposable();
  } else {
    stored.model.prune(pattern);
  }
  prepare_out_dir(out_dir, config, "prune");
  ordered_json meta = stored.meta;
  meta["label"] = "pruned";
  meta["pattern"] = pattern_label(stored.model);
  meta["transposable"] = opts.transposable;
  save_model(out_dir, stored.model, meta);
  log_sparsity(stored.model, log);
}

void cmd_train_sparse(const RunConfig& config, const SparseOptions& opts, const fs::path& out_dir,
                      std::ostream& log) {
  StoredModel student = load_model(opts.student);
  const StoredModel teacher = load_model(opts.teacher);
  check_compatible(student, teacher);
  const NoiseSchedule sched = schedule_from_meta(teacher.meta);
  const auto own = common_pattern(student.model);
  const MaskSchedule schedule = config.mask_schedule(own.value_or(NMPattern(2, 4)));
  prepare_out_dir(out_dir, config, "train-sparse");

  const TrainResult result = transfer_train(student.model, TeacherHandle(teacher.model), config.dataset(),
                                            config.train_config(), schedule, sched);

  ordered_json meta = student.meta;
  meta["label"] = config.lambda_dense == 0.0 ? "ste-baseline" : "transfer";
  meta["data"] = config.data;
  meta["seed"] = config.seed;
  meta["pattern"] = pattern_label(student.model);
  meta["mask_schedule"] = mask_schedule_json(schedule);
  meta["steps"] = config.steps;
  meta["lambda_w"] = config.lambda_w;
  meta["lambda_dense"] = config.lambda_dense;
  meta["lambda_diff"] = config.lambda_diff;
  save_model(out_dir, student.model, meta);
  write_text(out_dir / "trace.jsonl", trace_jsonl(result.trace));
  log_sparsity(student.model, log);
}

void cmd_sample(const RunConfig& config, const SampleOptions& opts, const fs::path& out_dir, std::ostream& log) {
  const StoredModel stored = load_model(opts.ckpt);
  const NoiseSchedule sched = schedule_from_meta(stored.meta);
  Rng rng(config.seed, Stream::sample);
  Tensor samples;
  if (opts.compressed) {
    for (std::size_t i = 0; i < stored.model.layers().size(); ++i) {
      if (!stored.model.layers()[i].pattern.is_2_4()) {
        throw CompressedPathError(NoisePredictor::layer_name(i) + " is " +
                                  stored.model.layers()[i].pattern.to_string() +
                                  "; --compressed needs a 2:4 checkpoint");
      }
    }
    const CompressedPredictor compressed = compressed_from_checkpoint(stored.checkpoint, stored.model.architecture());
    samples = ddpm_sample(compressed, config.n, sched, rng);
    log << "compressed path: " << compressed.macs_executed() << " MACs\n";
  } else {
    samples = ddpm_sample(stored.model, config.n, sched, rng);
  }
  prepare_out_dir(out_dir, config, "sample");
  write_text(out_dir / "samples.csv", samples_csv(samples));
  if (opts.svg) write_text(out_dir / "samples.svg", samples_svg(samples));
  log << "wrote " << samples.rows() << " samples\n";
}

void cmd_eval(const RunConfig& config, const fs::path& ckpt, const fs::path& out_dir, std::ostream& log) {
  const StoredModel stored = load_model(ckpt);
  const NoiseSchedule sched = schedule_from_meta(stored.meta);
  const QualityReport quality = evaluate_quality(stored.model, config.dataset(), config.n, sched, config.seed);
  const MacsReport macs = macs_count(stored.model, 1);
  prepare_out_dir(out_dir, config, "eval");
  const std::string report = eval_report(quality, macs).dump(2) + "\n";
  write_text(out_dir / "report.json", report);
  log << report;
}

void cmd_sweep(const RunConfig& config, const fs::path& ckpt, const fs::path& out_dir, std::ostream& log) {
  const StoredModel stored = load_model(ckpt);
  const NoiseSchedule sched = schedule_from_meta(stored.meta);
  std::vector<NMPattern> patterns = config.parsed_sweep_patterns();
  if (patterns.empty()) patterns = default_sweep_patterns();
  SweepOptions options;
  options.train = config.train_config();
  options.eval_samples = config.n;
  options.threads = worker_threads();
  prepare_out_dir(out_dir, config, "sweep");
  const auto rows = sweep_ratios(stored.model, patterns, config.dataset(), options, sched);
  const std::string csv = sweep_csv(rows);
  write_text(out_dir / "sweep.csv", csv);
  log << "# quality metric: " << kQualityMetric << "\n" << csv;
}

void cmd_bench(const RunConfig& config, const fs::path& out_dir, std::ostream& log) {
  const auto sizes = config.bench_sizes.empty() ? default_bench_sizes() : parse_bench_sizes(config.bench_sizes);
  prepare_out_dir(out_dir, config, "bench");
  const auto records = bench_spmm(sizes, config.bench_reps, config.seed);
  const std::string csv = bench_csv(records);
  write_text(out_dir / "bench.csv", csv);
  log << csv;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"N:M structured-sparse diffusion toolkit"};
  app.require_subcommand(1);

  Command train_dense_cmd, prune_cmd, train_sparse_cmd, sample_cmd, eval_cmd, sweep_cmd, bench_cmd;
  PruneOptions prune_opts;
  SparseOptions sparse_opts;
  SampleOptions sample_opts;
  std::string eval_ckpt, sweep_ckpt, prune_ckpt, student, teacher, sample_ckpt;

  train_dense_cmd.app = app.add_subcommand("train-dense", "Train a dense noise predictor");
  add_common(train_dense_cmd);
  add_training(train_dense_cmd);
  add_diffusion(train_dense_cmd);

  prune_cmd.app = app.add_subcommand("prune", "Mask a checkpoint with an N:M pattern");
  add_common(prune_cmd);
  prune_cmd.app->add_option("--ckpt", prune_ckpt, "Input model.ckpt")->required();
  prune_cmd.app->add_option("--pattern", prune_opts.pattern, "N:M pattern, e.g. 2:4")->required();
  prune_cmd.app->add_flag("--transposable", prune_opts.transposable, "Transposable 2:4 masks");

  train_sparse_cmd.app = app.add_subcommand("train-sparse", "Transfer-train a sparse student");
  add_common(train_sparse_cmd);
  train_sparse_cmd.app->add_option("--student", student, "Pruned student model.ckpt")->required();
  train_sparse_cmd.app->add_option("--teacher", teacher, "Dense teacher model.ckpt")->required();
  add_training(train_sparse_cmd);
  add_sparse_training(train_sparse_cmd);
  train_sparse_cmd.overrides.add(train_sparse_cmd.app, "--schedule", &RunConfig::schedule, "fixed | progressive");
  train_sparse_cmd.overrides.add_list(train_sparse_cmd.app, "--patterns", &RunConfig::patterns,
                                      "Mask patterns, comma separated (progressive: in order)");
  train_sparse_cmd.overrides.add(train_sparse_cmd.app, "--switch-interval", &RunConfig::switch_interval,
                                 "Steps per progressive stage");

  sample_cmd.app = app.add_subcommand("sample", "Draw samples from a checkpoint");
  add_common(sample_cmd);
  sample_cmd.app->add_option("--ckpt", sample_ckpt, "model.ckpt")->required();
  sample_cmd.overrides.add(sample_cmd.app, "--n", &RunConfig::n, "Number of samples");
  sample_cmd.app->add_flag("--compressed", sample_opts.compressed, "Run 2:4 layers through the compressed kernel");
  sample_cmd.app->add_flag("--svg", sample_opts.svg, "Also write samples.svg");

  eval_cmd.app = app.add_subcommand("eval", "Quality and MACs report");
  add_common(eval_cmd);
  eval_cmd.app->add_option("--ckpt", eval_ckpt, "model.ckpt")->required();
  eval_cmd.overrides.add(eval_cmd.app, "--data", &RunConfig::data, "Reference dataset");
  eval_cmd.overrides.add(eval_cmd.app, "--n", &RunConfig::n, "Samples per set");

  sweep_cmd.app = app.add_subcommand("sweep", "Prune, transfer-train and evaluate across patterns");
  add_common(sweep_cmd);
  sweep_cmd.app->add_option("--ckpt", sweep_ckpt, "Dense model.ckpt")->required();
  add_training(sweep_cmd);
  add_sparse_training(sweep_cmd);
  sweep_cmd.overrides.add_list(sweep_cmd.app, "--patterns", &RunConfig::sweep_patterns, "Patterns to sweep");
  sweep_cmd.overrides.add(sweep_cmd.app, "--n", &RunConfig::n, "Evaluation samples");

  bench_cmd.app = app.add_subcommand("bench", "Dense vs 2:4 compressed kernel timings");
  add_common(bench_cmd);
  bench_cmd.overrides.add(bench_cmd.app, "--sizes", &RunConfig::bench_sizes, "ROWSxCOLSxBATCH list");
  bench_cmd.overrides.add(bench_cmd.app, "--reps", &RunConfig::bench_reps, "Repetitions per size");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return ok;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return config_error;
  }

  try {
    if (train_dense_cmd.app->parsed()) {
      cmd_train_dense(resolve(train_dense_cmd), train_dense_cmd.out_dir, out);
    } else if (prune_cmd.app->parsed()) {
      prune_opts.ckpt = prune_ckpt;
      cmd_prune(resolve(prune_cmd), prune_opts, prune_cmd.out_dir, out);
    } else if (train_sparse_cmd.app->parsed()) {
      sparse_opts.student = student;
      sparse_opts.teacher = teacher;
      cmd_train_sparse(resolve(train_sparse_cmd), sparse_opts, train_sparse_cmd.out_dir, out);
    } else if (sample_cmd.app->parsed()) {
      sample_opts.ckpt = sample_ckpt;
      cmd_sample(resolve(sample_cmd), sample_opts, sample_cmd.out_dir, out);
    } else if (eval_cmd.app->parsed()) {
      cmd_eval(resolve(eval_cmd), eval_ckpt, eval_cmd.out_dir, out);
    } else if (sweep_cmd.app->parsed()) {
      cmd_sweep(resolve(sweep_cmd), sweep_ckpt, sweep_cmd.out_dir, out);
    } else if (bench_cmd.app->parsed()) {
      cmd_bench(resolve(bench_cmd), bench_cmd.out_dir, out);
    }
  } catch (const ArchitectureError& e) {
    err << "architecture error: " << e.what() << "\n";
    return architecture_error;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return config_error;
  } catch (const PatternError& e) {
    err << "pattern error: " << e.what() << "\n";
    return pattern_error;
  } catch (const CompressedPathError& e) {
    err << "compressed path error: " << e.what() << "\n";
    return compressed_path_error;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return failure;
  }
  return ok;
}

}  // namespace sparsedm::cli
