#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sparsedm/diffusion.hpp"
#include "sparsedm/model.hpp"
#include "sparsedm/sparsity.hpp"

namespace sparsedm {

enum class LrSchedule { constant, cosine };

struct TrainConfig {
  int steps = 2000;
  int batch_size = 256;
  double lr = 0.1;
  LrSchedule lr_schedule = LrSchedule::constant;
  /// Weight of the sparse-mask regularizer lambda_W (W - W~).
  double lambda_w = 1e-4;
  /// Balance between distillation (dense) and diffusion losses.
  double lambda_dense = 0.5;
  double lambda_diff = 0.5;
  std::uint64_t seed = 0;
  /// Re-project masks from |W| every this many steps; 0 freezes them between
  /// schedule switches.
  int mask_refresh = 1;
  /// Teacher samples drawn once for distillation inputs.
  int teacher_pool = 2048;

  void validate() const;
  /// gamma_t; cosine decays from lr towards zero over `steps`.
  double lr_at(int step) const;
};

enum class ScheduleMode { fixed, progressive };

struct MaskStage {
  NMPattern pattern;
  int begin = 0;  // inclusive
  int end = 0;    // exclusive
};

/// Ordered mask patterns M_1..M_k with the step ranges they are active for.
class MaskSchedule {
 public:
  MaskSchedule() = default;
  MaskSchedule(ScheduleMode mode, std::vector<MaskStage> stages);

  static MaskSchedule fixed(NMPattern pattern, int steps);
  /// One stage per pattern, `interval` steps each; the last stage runs to `steps`.
  static MaskSchedule progressive(std::vector<NMPattern> patterns, int interval, int steps);

  ScheduleMode mode() const { return mode_; }
  const std::vector<MaskStage>& stages() const { return stages_; }
  int steps() const { return stages_.empty() ? 0 : stages_.back().end; }

  const MaskStage& stage_at(int step) const;
  /// True on the first step of every stage.
  bool switches_at(int step) const;

 private:
  ScheduleMode mode_ = ScheduleMode::fixed;
  std::vector<MaskStage> stages_;
};

struct TraceRecord {
  int step = 0;
  double loss_total = 0.0;
  double loss_diff = 0.0;
  double loss_dense = 0.0;
  std::string active_pattern;
  double sparsity = 0.0;
};

struct TrainResult {
  std::vector<TraceRecord> trace;
};

/// Frozen model used as the distillation target.
struct TeacherHandle {
  explicit TeacherHandle(const NoisePredictor& m) : model(m), checksum(m.checksum()) {}
  const NoisePredictor& model;
  std::uint64_t checksum;
};

/// Plain gradient descent on the diffusion loss. Model masks must be all ones.
TrainResult train_dense(NoisePredictor& model, const ToyDataset& data, const TrainConfig& config,
                        const NoiseSchedule& sched);

/// W_{t+1} = W_t - lr * (g(W~) + lambda_w * (W_t - W~)), evaluated in double.
/// lambda_w = 0 is the vanilla straight-through update.
Tensor ste_update(const Tensor& w, const Tensor& grad_at_sparse, const SparseMask& mask, double lr,
                  double lambda_w);

/// Selects the stage active at `step`, re-projects `mask` from |w| when the
/// stage starts or the mask does not carry that stage's pattern, then applies
/// ste_update with it.
Tensor progressive_step(const Tensor& w, const Tensor& grad, SparseMask& mask,
                        const MaskSchedule& schedule, int step, double lr, double lambda_w);

/// Distillation term: MSE between student and teacher noise estimates on the
/// same noisy inputs.
Var dense_loss(Tape& tape, const NoisePredictor& student, const ModelBinding& binding,
               const NoisePredictor& teacher, const Tensor& x_t, std::span<const int> t);

/// Sparse fine-tuning with knowledge transfer:
/// lambda_dense * L_dense + lambda_diff * L_diff under the mask schedule,
/// parameters updated with ste_update. L_dense inputs are noised teacher samples.
TrainResult transfer_train(NoisePredictor& student, const TeacherHandle& teacher,
                           const ToyDataset& data, const TrainConfig& config,
                           const MaskSchedule& schedule, const NoiseSchedule& sched);

/// Copy of `model` with every layer masked by magnitude; weights unchanged.
NoisePredictor prune_one_shot(const NoisePredictor& model, const NMPattern& pattern);

/// Fraction of pruned weights over all layers of the model.
double model_sparsity(const NoisePredictor& model);

}  // namespace sparsedm
