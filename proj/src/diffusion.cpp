#include "sparsedm/diffusion.hpp"

#include <numbers>

namespace sparsedm {

namespace {

void require_step(int t, const NoiseSchedule& sched, const char* op) {
  if (t < 0 || t >= sched.steps()) {
    throw ContractError(std::string(op) + ": timestep " + std::to_string(t) + " outside [0, " +
                        std::to_string(sched.steps()) + ")");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a) + " vs " +
                         shape_string(b));
  }
}

struct Normalization {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double scale = 1.0;
};

void raw_point(DatasetKind kind, Rng& rng, double& x, double& y) {
  switch (kind) {
    case DatasetKind::gauss8: {
      const auto k = static_cast<double>(rng.uniform_int(8));
      const double angle = 2.0 * std::numbers::pi * k / 8.0;
      x = std::cos(angle) + 0.1 * rng.normal();
      y = std::sin(angle) + 0.1 * rng.normal();
      return;
    }
    case DatasetKind::swiss_roll: {
      const double s = 1.5 * std::numbers::pi * (1.0 + 2.0 * rng.uniform());
      x = s * std::cos(s) + 0.5 * rng.normal();
      y = s * std::sin(s) + 0.5 * rng.normal();
      return;
    }
    case DatasetKind::checkerboard: {
      const double u = rng.uniform() * 4.0 - 2.0;
      const double v = rng.uniform() - 2.0 * static_cast<double>(rng.uniform_int(2));
      x = u;
      y = v + std::fmod(std::floor(u) + 4.0, 2.0);
      return;
    }
  }
}

// Estimated once from a fixed-seed reference sample so normalization does not
// depend on the caller's batch.
Normalization normalization(DatasetKind kind) {
  auto estimate = [](DatasetKind k) {
    constexpr int count = 200000;
    Rng rng(0x5eed'daf0'0000'0001ULL + static_cast<std::uint64_t>(k), Stream::data);
    double sx = 0, sy = 0, sxx = 0, syy = 0;
    for (int i = 0; i < count; ++i) {
      double x = 0, y = 0;
      raw_point(k, rng, x, y);
      sx += x;
      sy += y;
      sxx += x * x;
      syy += y * y;
    }
    Normalization n;
    n.mean_x = sx / count;
    n.mean_y = sy / count;
    const double var = 0.5 * ((sxx / count - n.mean_x * n.mean_x) + (syy / count - n.mean_y * n.mean_y));
    n.scale = std::sqrt(var);
    return n;
  };
  static const Normalization table[3] = {estimate(DatasetKind::gauss8),
                                         estimate(DatasetKind::swiss_roll),
                                         estimate(DatasetKind::checkerboard)};
  return table[static_cast<int>(kind)];
}

}  // namespace

NoiseSchedule make_schedule(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw ConfigError("noise schedule needs at least one step");
  if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0)) {
    throw ConfigError("noise schedule needs 0 < beta_start <= beta_end < 1");
  }
  NoiseSchedule s;
  s.beta.resize(static_cast<std::size_t>(steps));
  s.alpha.resize(s.beta.size());
  s.alpha_bar.resize(s.beta.size());
  double running = 1.0;
  for (int t = 0; t < steps; ++t) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(t) / (steps - 1);
    const auto i = static_cast<std::size_t>(t);
    s.beta[i] = beta_start + (beta_end - beta_start) * frac;
    s.alpha[i] = 1.0 - s.beta[i];
    running *= s.alpha[i];
    s.alpha_bar[i] = running;
  }
  return s;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& sched) {
  std::vector<int> ts(static_cast<std::size_t>(x0.rows()), t);
  require_step(t, sched, "q_sample");
  return q_sample(x0, std::span<const int>(ts), eps, sched);
}

Tensor q_sample(const Tensor& x0, std::span<const int> t, const Tensor& eps,
                const NoiseSchedule& sched) {
  require_same_shape(x0, eps, "q_sample");
  if (static_cast<Eigen::Index>(t.size()) != x0.rows()) {
    throw DimensionError("q_sample: one timestep per row required");
  }
  Tensor out(x0.rows(), x0.cols());
  for (Eigen::Index r = 0; r < x0.rows(); ++r) {
    const int step = t[static_cast<std::size_t>(r)];
    require_step(step, sched, "q_sample");
    const double abar = sched.alpha_bar[static_cast<std::size_t>(step)];
    const double signal = std::sqrt(abar);
    const double noise = std::sqrt(1.0 - abar);
    for (Eigen::Index c = 0; c < x0.cols(); ++c) {
      out(r, c) = static_cast<float>(signal * x0(r, c) + noise * eps(r, c));
    }
  }
  return out;
}

Tensor posterior_mean(const Tensor& x_t, const Tensor& eps_hat, int t, const NoiseSchedule& sched) {
  require_same_shape(x_t, eps_hat, "posterior_mean");
  require_step(t, sched, "posterior_mean");
  const auto i = static_cast<std::size_t>(t);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha[i]);
  const double eps_coef = sched.beta[i] / std::sqrt(1.0 - sched.alpha_bar[i]);
  return ((x_t.cast<double>() - eps_coef * eps_hat.cast<double>()) * inv_sqrt_alpha).cast<float>();
}

Tensor time_embedding(std::span<const int> t, int steps, int dim) {
  if (dim % 2 != 0 || dim < 2) throw ConfigError("time embedding width must be even");
  const int half = dim / 2;
  Tensor out(static_cast<Eigen::Index>(t.size()), dim);
  for (std::size_t r = 0; r < t.size(); ++r) {
    const double s = static_cast<double>(t[r]) / steps;
    for (int k = 0; k < half; ++k) {
      const double freq = half == 1 ? 1.0 : std::pow(1000.0, static_cast<double>(k) / (half - 1));
      const auto row = static_cast<Eigen::Index>(r);
      out(row, k) = static_cast<float>(std::sin(s * freq));
      out(row, half + k) = static_cast<float>(std::cos(s * freq));
    }
  }
  return out;
}

ToyDataset ToyDataset::parse(std::string_view name) {
  if (name == "gauss8") return {DatasetKind::gauss8};
  if (name == "swiss_roll") return {DatasetKind::swiss_roll};
  if (name == "checkerboard") return {DatasetKind::checkerboard};
  throw ConfigError("unknown dataset '" + std::string(name) +
                    "' (expected gauss8, swiss_roll or checkerboard)");
}

std::string ToyDataset::name() const {
  switch (kind) {
    case DatasetKind::gauss8: return "gauss8";
    case DatasetKind::swiss_roll: return "swiss_roll";
    case DatasetKind::checkerboard: return "checkerboard";
  }
  return "unknown";
}

Tensor toy_batch(const ToyDataset& dataset, Eigen::Index n, Rng& rng) {
  if (n < 1) throw ContractError("toy_batch: n must be at least 1");
  const Normalization norm = normalization(dataset.kind);
  Tensor out(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    double x = 0, y = 0;
    raw_point(dataset.kind, rng, x, y);
    out(i, 0) = static_cast<float>((x - norm.mean_x) / norm.scale);
    out(i, 1) = static_cast<float>((y - norm.mean_y) / norm.scale);
  }
  return out;
}

Tensor gauss8_modes() {
  const Normalization norm = normalization(DatasetKind::gauss8);
  Tensor modes(8, 2);
  for (int k = 0; k < 8; ++k) {
    const double angle = 2.0 * std::numbers::pi * k / 8.0;
    modes(k, 0) = static_cast<float>((std::cos(angle) - norm.mean_x) / norm.scale);
    modes(k, 1) = static_cast<float>((std::sin(angle) - norm.mean_y) / norm.scale);
  }
  return modes;
}

NoisyBatch make_noisy_batch(const Tensor& x0, const NoiseSchedule& sched, Rng& rng) {
  NoisyBatch b;
  b.t.resize(static_cast<std::size_t>(x0.rows()));
  for (int& step : b.t) step = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(sched.steps())));
  b.eps = rng.normal_tensor(x0.rows(), x0.cols());
  b.x_t = q_sample(x0, std::span<const int>(b.t), b.eps, sched);
  return b;
}

}  // namespace sparsedm
