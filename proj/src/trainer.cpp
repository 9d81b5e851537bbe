#include "sparsedm/trainer.hpp"

#include <cmath>
#include <numbers>

#include "sparsedm/errors.hpp"

namespace sparsedm {

namespace {

void check_loss(double loss, int step) {
  if (!std::isfinite(loss)) {
    throw TrainingError("training diverged at step " + std::to_string(step) + " (loss " +
                        std::to_string(loss) + ")");
  }
}

void sgd_bias(Tensor& bias, const Tensor& grad, double lr) {
  bias = (bias.cast<double>() - lr * grad.cast<double>()).cast<float>();
}

Tensor gather_rows(const Tensor& pool, Eigen::Index count, Rng& rng) {
  Tensor out(count, pool.cols());
  for (Eigen::Index i = 0; i < count; ++i) {
    out.row(i) = pool.row(static_cast<Eigen::Index>(rng.uniform_int(static_cast<std::uint64_t>(pool.rows()))));
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be nonnegative");
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive");
  if (!(lambda_w >= 0.0)) throw ConfigError("lambda_w must be nonnegative");
  if (!(lambda_dense >= 0.0 && lambda_dense <= 1.0) || !(lambda_diff >= 0.0 && lambda_diff <= 1.0)) {
    throw ConfigError("lambda_dense and lambda_diff must lie in [0, 1]");
  }
  if (!(lambda_dense + lambda_diff > 0.0)) throw ConfigError("lambda_dense + lambda_diff must be positive");
  if (mask_refresh < 0) throw ConfigError("mask_refresh must be nonnegative");
  if (teacher_pool < 1) throw ConfigError("teacher_pool must be positive");
}

double TrainConfig::lr_at(int step) const {
  if (lr_schedule == LrSchedule::constant || steps == 0) return lr;
  return lr * 0.5 * (1.0 + std::cos(std::numbers::pi * step / steps));
}

MaskSchedule::MaskSchedule(ScheduleMode mode, std::vector<MaskStage> stages)
    : mode_(mode), stages_(std::move(stages)) {
  if (stages_.empty()) throw ConfigError("mask schedule needs at least one stage");
  if (mode_ == ScheduleMode::fixed && stages_.size() != 1) {
    throw ConfigError("fixed mask schedule has exactly one pattern");
  }
  int expected = 0;
  for (const auto& s : stages_) {
    if (s.begin != expected || s.end < s.begin) {
      throw ConfigError("mask schedule stages must partition [0, steps) in order");
    }
    expected = s.end;
  }
}

MaskSchedule MaskSchedule::fixed(NMPattern pattern, int steps) {
  return MaskSchedule(ScheduleMode::fixed, {MaskStage{pattern, 0, steps}});
}

MaskSchedule MaskSchedule::progressive(std::vector<NMPattern> patterns, int interval, int steps) {
  if (patterns.empty()) throw ConfigError("progressive schedule needs patterns");
  if (interval < 1) throw ConfigError("progressive switch interval must be positive");
  std::vector<MaskStage> stages;
  int begin = 0;
  for (std::size_t i = 0; i < patterns.size(); ++i) {
    const bool last = i + 1 == patterns.size();
    const int end = last ? steps : std::min(steps, begin + interval);
    stages.push_back(MaskStage{patterns[i], begin, std::max(begin, end)});
    begin = stages.back().end;
  }
  return MaskSchedule(ScheduleMode::progressive, std::move(stages));
}

const MaskStage& MaskSchedule::stage_at(int step) const {
  for (const auto& s : stages_) {
    if (step >= s.begin && step < s.end) return s;
  }
  throw ContractError("step " + std::to_string(step) + " outside mask schedule [0, " +
                      std::to_string(steps()) + ")");
}

bool MaskSchedule::switches_at(int step) const { return stage_at(step).begin == step; }

double model_sparsity(const NoisePredictor& model) {
  double zeros = 0, total = 0;
  for (const auto& layer : model.layers()) {
    const double n = static_cast<double>(layer.mask.rows() * layer.mask.cols());
    total += n;
    zeros += n - static_cast<double>(layer.mask.count_ones());
  }
  return total == 0 ? 0.0 : zeros / total;
}

TrainResult train_dense(NoisePredictor& model, const ToyDataset& data, const TrainConfig& config,
                        const NoiseSchedule& sched) {
  config.validate();
  for (const auto& layer : model.layers()) {
    if (layer.mask.count_ones() != layer.mask.rows() * layer.mask.cols()) {
      throw ContractError("train_dense: model must be dense (all-ones masks)");
    }
  }
  Rng data_rng(config.seed, Stream::data);
  Rng noise_rng(config.seed, Stream::noise);
  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    Tape tape;
    const ModelBinding binding = model.bind(tape);
    const Tensor batch = toy_batch(data, config.batch_size, data_rng);
    const Var loss = loss_diff(
        tape, [&](Tape& tp, const Tensor& x, std::span<const int> t) { return model.forward(tp, binding, x, t); },
        batch, sched, noise_rng);
    const double value = tape.value(loss)(0, 0);
    check_loss(value, step);
    tape.backward(loss);

    const double lr = config.lr_at(step);
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
      MaskedLinear& layer = model.layers()[i];
      layer.weight = (layer.weight.cast<double>() - lr * tape.grad(binding.layers[i].weight).cast<double>())
                         .cast<float>();
      sgd_bias(layer.bias, tape.grad(binding.layers[i].bias), lr);
    }
    result.trace.push_back(TraceRecord{step, value, value, 0.0, NMPattern::dense().to_string(), 0.0});
  }
  return result;
}

Tensor ste_update(const Tensor& w, const Tensor& grad_at_sparse, const SparseMask& mask, double lr,
                  double lambda_w) {
  if (w.rows() != grad_at_sparse.rows() || w.cols() != grad_at_sparse.cols()) {
    throw DimensionError("ste_update: weight " + shape_string(w) + " vs gradient " +
                         shape_string(grad_at_sparse));
  }
  if (!(lambda_w >= 0.0)) throw ConfigError("ste_update: lambda_w must be nonnegative");
  const Eigen::MatrixXd wd = w.cast<double>();
  const Eigen::MatrixXd sparse = apply_mask(w, mask).cast<double>();
  return (wd - lr * (grad_at_sparse.cast<double>() + lambda_w * (wd - sparse))).cast<float>();
}

Tensor progressive_step(const Tensor& w, const Tensor& grad, SparseMask& mask,
                        const MaskSchedule& schedule, int step, double lr, double lambda_w) {
  const MaskStage& stage = schedule.stage_at(step);
  if (schedule.switches_at(step) || mask.rows() != w.rows() || mask.cols() != w.cols() ||
      !mask.satisfies(stage.pattern)) {
    mask = project_mask(w, stage.pattern);
  }
  return ste_update(w, grad, mask, lr, lambda_w);
}

Var dense_loss(Tape& tape, const NoisePredictor& student, const ModelBinding& binding,
               const NoisePredictor& teacher, const Tensor& x_t, std::span<const int> t) {
  const Var pred = student.forward(tape, binding, x_t, t);
  const Var target = tape.constant(teacher.predict(x_t, t));
  return mse_loss(tape, pred, target);
}

TrainResult transfer_train(NoisePredictor& student, const TeacherHandle& teacher,
                           const ToyDataset& data, const TrainConfig& config,
                           const MaskSchedule& schedule, const NoiseSchedule& sched) {
  config.validate();
  if (!(student.architecture() == teacher.model.architecture())) {
    throw ArchitectureError("student and teacher architectures differ");
  }
  if (schedule.steps() != config.steps) {
    throw ConfigError("mask schedule covers " + std::to_string(schedule.steps()) +
                      " steps but training runs " + std::to_string(config.steps));
  }
  for (const auto& stage : schedule.stages()) {
    for (std::size_t i = 0; i < student.layers().size(); ++i) {
      if (student.layers()[i].in_features() % stage.pattern.m != 0) {
        throw PatternError(NoisePredictor::layer_name(i) + " " +
                           shape_string(student.layers()[i].weight) +
                           ": input width not divisible by pattern " + stage.pattern.to_string());
      }
    }
  }

  Rng data_rng(config.seed, Stream::data);
  Rng noise_rng(config.seed, Stream::noise);
  Rng teacher_rng(config.seed, Stream::teacher);
  Tensor pool;
  if (config.lambda_dense > 0.0 && config.steps > 0) {
    pool = ddpm_sample(teacher.model, config.teacher_pool, sched, teacher_rng);
  }

  TrainResult result;
  result.trace.reserve(static_cast<std::size_t>(config.steps));
  for (int step = 0; step < config.steps; ++step) {
    const MaskStage& stage = schedule.stage_at(step);
    const bool refresh = config.mask_refresh > 0 && step % config.mask_refresh == 0;
    for (auto& layer : student.layers()) {
      if (refresh || schedule.switches_at(step) || !(layer.pattern == stage.pattern)) {
        layer.prune(stage.pattern);
      }
    }

    Tape tape;
    const ModelBinding binding = student.bind(tape);
    auto forward = [&](Tape& tp, const Tensor& x, std::span<const int> t) {
      return student.forward(tp, binding, x, t);
    };

    Var total{};
    bool has_total = false;
    auto accumulate = [&](Var term, double weight) {
      const Var scaled = scale(tape, term, weight);
      total = has_total ? add(tape, total, scaled) : scaled;
      has_total = true;
    };

    double diff_value = 0.0;
    if (config.lambda_diff > 0.0) {
      const Tensor batch = toy_batch(data, config.batch_size, data_rng);
      const Var diff = loss_diff(tape, forward, batch, sched, noise_rng);
      diff_value = tape.value(diff)(0, 0);
      accumulate(diff, config.lambda_diff);
    }
    double dense_value = 0.0;
    if (config.lambda_dense > 0.0) {
      const Tensor x0 = gather_rows(pool, config.batch_size, teacher_rng);
      const NoisyBatch noisy = make_noisy_batch(x0, sched, teacher_rng);
      const Var dense = dense_loss(tape, student, binding, teacher.model, noisy.x_t,
                                   std::span<const int>(noisy.t));
      dense_value = tape.value(dense)(0, 0);
      accumulate(dense, config.lambda_dense);
    }
    const double total_value = tape.value(total)(0, 0);
    check_loss(total_value, step);
    tape.backward(total);

    const double lr = config.lr_at(step);
    for (std::size_t i = 0; i < student.layers().size(); ++i) {
      MaskedLinear& layer = student.layers()[i];
      layer.weight = ste_update(layer.weight, tape.grad(binding.layers[i].weight), layer.mask, lr,
                                config.lambda_w);
      sgd_bias(layer.bias, tape.grad(binding.layers[i].bias), lr);
    }
    result.trace.push_back(TraceRecord{step, total_value, diff_value, dense_value,
                                       stage.pattern.to_string(), model_sparsity(student)});
  }
  if (teacher.model.checksum() != teacher.checksum) {
    throw ContractError("teacher parameters changed during transfer training");
  }
  return result;
}

NoisePredictor prune_one_shot(const NoisePredictor& model, const NMPattern& pattern) {
  NoisePredictor pruned = model;
  pruned.prune(pattern);
  return pruned;
}

}  // namespace sparsedm
