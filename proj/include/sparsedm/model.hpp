#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "sparsedm/autodiff.hpp"
#include "sparsedm/compressed.hpp"
#include "sparsedm/rng.hpp"
#include "sparsedm/sparsity.hpp"

namespace sparsedm {

/// MLP noise predictor shape. The network input is [x_t | time embedding]
/// zero-padded to a multiple of `kWidthQuantum` columns so every pattern up
/// to M = 32 divides every layer's input width; the output layer is padded to
/// a multiple of 4 rows so 2:4 transposable masks apply to it too. Padding
/// weights start at zero and receive zero gradient, so they stay zero.
struct Architecture {
  static constexpr int kWidthQuantum = 32;

  int data_dim = 2;
  int embed_dim = 64;
  int hidden = 128;
  int time_steps = 100;

  int input_width() const;
  int output_width() const;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

struct ModelBinding {
  std::vector<LinearBinding> layers;
};

/// input -> hidden -> hidden -> output, SiLU between, every layer a MaskedLinear.
class NoisePredictor {
 public:
  NoisePredictor() = default;
  NoisePredictor(Architecture arch, std::vector<MaskedLinear> layers);

  /// Uniform(+-1/sqrt(fan_in)) weights over the real (unpadded) inputs, zero biases.
  static NoisePredictor init(const Architecture& arch, Rng& rng);

  const Architecture& architecture() const { return arch_; }
  Eigen::Index data_dim() const { return arch_.data_dim; }

  std::vector<MaskedLinear>& layers() { return layers_; }
  const std::vector<MaskedLinear>& layers() const { return layers_; }
  static std::string layer_name(std::size_t i);

  /// Assembled network input for noisy points at timesteps t.
  Tensor network_input(const Tensor& x_t, std::span<const int> t) const;

  ModelBinding bind(Tape& tape) const;
  Var forward(Tape& tape, const ModelBinding& binding, const Tensor& x_t,
              std::span<const int> t) const;
  Tensor predict(const Tensor& x_t, std::span<const int> t) const;

  /// Copies updated parameter values back from a tape.
  void pull(const Tape& tape, const ModelBinding& binding);

  /// Masks every layer by magnitude with one pattern.
  void prune(const NMPattern& pattern);
  /// Masks every layer with make_transposable (2:4 only).
  void prune_transposable();

  std::uint64_t checksum() const;

 private:
  Architecture arch_;
  std::vector<MaskedLinear> layers_;
};

/// Inference-only predictor whose layers run through spmm on 2:4 compressed
/// weights.
class CompressedPredictor {
 public:
  /// Compresses every layer; throws CompressedPathError unless all masks are 2:4.
  explicit CompressedPredictor(const NoisePredictor& model);
  CompressedPredictor(Architecture arch, std::vector<Compressed24> weights,
                      std::vector<Tensor> biases);

  Eigen::Index data_dim() const { return arch_.data_dim; }
  Tensor predict(const Tensor& x_t, std::span<const int> t) const;

  const std::vector<Compressed24>& weights() const { return weights_; }
  std::uint64_t macs_executed() const { return macs_; }

 private:
  Architecture arch_;
  std::vector<Compressed24> weights_;
  std::vector<Tensor> biases_;
  mutable std::uint64_t macs_ = 0;
};

}  // namespace sparsedm
