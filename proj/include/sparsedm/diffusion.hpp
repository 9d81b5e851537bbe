#pragma once

#include <cmath>
#include <concepts>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sparsedm/autodiff.hpp"
#include "sparsedm/errors.hpp"
#include "sparsedm/rng.hpp"
#include "sparsedm/tensor.hpp"

namespace sparsedm {

/// Linear-beta DDPM schedule, indexed t = 0..T-1. Kept in double.
struct NoiseSchedule {
  std::vector<double> beta;
  std::vector<double> alpha;      // 1 - beta
  std::vector<double> alpha_bar;  // running product of alpha

  int steps() const { return static_cast<int>(beta.size()); }
};

/// Default step count and beta range of the toy setup.
inline constexpr int kDefaultSteps = 100;
inline constexpr double kDefaultBetaStart = 1e-3;
inline constexpr double kDefaultBetaEnd = 0.2;

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps, one t for all rows.
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched);
/// Per-row timesteps.
Tensor q_sample(const Tensor& x0, std::span<const int> t, const Tensor& eps,
                const NoiseSchedule& sched);

/// mu = (x_t - beta_t / sqrt(1 - abar_t) * eps_hat) / sqrt(alpha_t)
Tensor posterior_mean(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched);

/// Sinusoidal embedding of t/T: [sin(s w_k) | cos(s w_k)], w_k geometric in [1, 1000].
Tensor time_embedding(std::span<const int> t, int steps, int dim);

enum class DatasetKind { gauss8, swiss_roll, checkerboard };

/// 2-D toy distribution, normalized to zero mean and unit isotropic scale.
struct ToyDataset {
  DatasetKind kind = DatasetKind::gauss8;

  static ToyDataset parse(std::string_view name);
  std::string name() const;
};

Tensor toy_batch(const ToyDataset& dataset, Eigen::Index n, Rng& rng);

/// Normalized positions of the eight gauss8 modes.
Tensor gauss8_modes();

/// Noisy training inputs for one batch: t drawn uniformly, eps ~ N(0, I).
struct NoisyBatch {
  Tensor x_t;
  Tensor eps;
  std::vector<int> t;
};

NoisyBatch make_noisy_batch(const Tensor& x0, const NoiseSchedule& sched, Rng& rng);

/// Records the noise-prediction model on a tape.
template <typename F>
concept TapeForward = requires(F f, Tape& tape, const Tensor& x, std::span<const int> t) {
  { f(tape, x, t) } -> std::same_as<Var>;
};

/// Tape-free epsilon predictor for sampling.
template <typename P>
concept EpsilonPredictor = requires(const P& p, const Tensor& x, std::span<const int> t) {
  { p.predict(x, t) } -> std::same_as<Tensor>;
  { p.data_dim() } -> std::convertible_to<Eigen::Index>;
};

/// Diffusion loss: mean squared error between eps and the model's estimate
/// at x_t. Call tape.backward on the result for gradients.
template <TapeForward F>
Var loss_diff(Tape& tape, F&& forward, const Tensor& x0, const NoiseSchedule& sched, Rng& rng) {
  if (x0.rows() == 0) throw ContractError("loss_diff: empty batch");
  NoisyBatch noisy = make_noisy_batch(x0, sched, rng);
  const Var pred = forward(tape, noisy.x_t, std::span<const int>(noisy.t));
  const Var target = tape.constant(std::move(noisy.eps));
  return mse_loss(tape, pred, target);
}

/// Ancestral sampling from x_T ~ N(0, I) with sigma_t^2 = beta_t and no noise
/// on the last step.
template <EpsilonPredictor P>
Tensor ddpm_sample(const P& model, Eigen::Index n, const NoiseSchedule& sched, Rng& rng) {
  const Eigen::Index dim = model.data_dim();
  Tensor x = rng.normal_tensor(n, dim);
  if (n == 0) return x;
  std::vector<int> t(static_cast<std::size_t>(n));
  for (int step = sched.steps() - 1; step >= 0; --step) {
    std::fill(t.begin(), t.end(), step);
    const Tensor eps_hat = model.predict(x, std::span<const int>(t));
    x = posterior_mean(x, eps_hat, step, sched);
    if (step > 0) {
      const float sigma = static_cast<float>(std::sqrt(sched.beta[static_cast<std::size_t>(step)]));
      x += sigma * rng.normal_tensor(n, dim);
    }
  }
  return x;
}

}  // namespace sparsedm
