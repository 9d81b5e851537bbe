#include "sparsedm/model.hpp"

#include <cmath>
#include <cstring>

#include "sparsedm/diffusion.hpp"
#include "sparsedm/errors.hpp"

namespace sparsedm {

namespace {

int round_up(int value, int quantum) { return (value + quantum - 1) / quantum * quantum; }

Tensor silu_inplace(Tensor x) {
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = silu(x.data()[i]);
  return x;
}

Tensor assemble_input(const Architecture& arch, const Tensor& x_t, std::span<const int> t) {
  if (x_t.cols() != arch.data_dim) {
    throw DimensionError("noise predictor expects " + std::to_string(arch.data_dim) +
                         " data columns, got " + shape_string(x_t));
  }
  if (static_cast<Eigen::Index>(t.size()) != x_t.rows()) {
    throw DimensionError("noise predictor: one timestep per row required");
  }
  Tensor input = Tensor::Zero(x_t.rows(), arch.input_width());
  input.leftCols(arch.data_dim) = x_t;
  input.middleCols(arch.data_dim, arch.embed_dim) = time_embedding(t, arch.time_steps, arch.embed_dim);
  return input;
}

// FNV-1a over raw bytes.
void mix(std::uint64_t& h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
}

}  // namespace

int Architecture::input_width() const { return round_up(data_dim + embed_dim, kWidthQuantum); }
int Architecture::output_width() const { return round_up(data_dim, 4); }

NoisePredictor::NoisePredictor(Architecture arch, std::vector<MaskedLinear> layers)
    : arch_(arch), layers_(std::move(layers)) {
  if (layers_.size() != 3) throw ArchitectureError("noise predictor has exactly three layers");
  const Eigen::Index expected[3][2] = {{arch_.hidden, arch_.input_width()},
                                       {arch_.hidden, arch_.hidden},
                                       {arch_.output_width(), arch_.hidden}};
  for (std::size_t i = 0; i < 3; ++i) {
    if (layers_[i].out_features() != expected[i][0] || layers_[i].in_features() != expected[i][1]) {
      throw ArchitectureError(layer_name(i) + " has shape " + shape_string(layers_[i].weight) +
                              ", architecture expects [" + std::to_string(expected[i][0]) + "x" +
                              std::to_string(expected[i][1]) + "]");
    }
  }
}

NoisePredictor NoisePredictor::init(const Architecture& arch, Rng& rng) {
  if (arch.hidden % Architecture::kWidthQuantum != 0) {
    throw ConfigError("hidden width must be a multiple of 32");
  }
  auto make = [&](int out, int in, int real_out, int real_in) {
    Tensor w = Tensor::Zero(out, in);
    const double bound = 1.0 / std::sqrt(static_cast<double>(real_in));
    for (int r = 0; r < real_out; ++r) {
      for (int c = 0; c < real_in; ++c) w(r, c) = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
    }
    return MaskedLinear(std::move(w), Tensor::Zero(1, out));
  };
  std::vector<MaskedLinear> layers;
  layers.push_back(make(arch.hidden, arch.input_width(), arch.hidden, arch.data_dim + arch.embed_dim));
  layers.push_back(make(arch.hidden, arch.hidden, arch.hidden, arch.hidden));
  layers.push_back(make(arch.output_width(), arch.hidden, arch.data_dim, arch.hidden));
  return NoisePredictor(arch, std::move(layers));
}

std::string NoisePredictor::layer_name(std::size_t i) { return "layers." + std::to_string(i); }

Tensor NoisePredictor::network_input(const Tensor& x_t, std::span<const int> t) const {
  return assemble_input(arch_, x_t, t);
}

ModelBinding NoisePredictor::bind(Tape& tape) const {
  ModelBinding b;
  for (const auto& layer : layers_) b.layers.push_back(sparsedm::bind(tape, layer));
  return b;
}

Var NoisePredictor::forward(Tape& tape, const ModelBinding& binding, const Tensor& x_t,
                            std::span<const int> t) const {
  Var h = tape.constant(network_input(x_t, t));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = masked_linear_forward(tape, h, layers_[i], binding.layers[i]);
    if (i + 1 < layers_.size()) h = silu(tape, h);
  }
  return slice_cols(tape, h, 0, arch_.data_dim);
}

Tensor NoisePredictor::predict(const Tensor& x_t, std::span<const int> t) const {
  Tensor h = network_input(x_t, t);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = masked_linear_forward(h, layers_[i]);
    if (i + 1 < layers_.size()) h = silu_inplace(std::move(h));
  }
  return h.leftCols(arch_.data_dim);
}

void NoisePredictor::pull(const Tape& tape, const ModelBinding& binding) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].weight = tape.param_value(binding.layers[i].weight);
    layers_[i].bias = tape.param_value(binding.layers[i].bias);
  }
}

void NoisePredictor::prune(const NMPattern& pattern) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].in_features() % pattern.m != 0) {
      throw PatternError(layer_name(i) + " " + shape_string(layers_[i].weight) +
                         ": input width not divisible by pattern " + pattern.to_string());
    }
  }
  for (auto& layer : layers_) layer.prune(pattern);
}

void NoisePredictor::prune_transposable() {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& w = layers_[i].weight;
    if (w.rows() % 4 != 0 || w.cols() % 4 != 0) {
      throw PatternError(layer_name(i) + " " + shape_string(w) +
                         ": transposable 2:4 needs both dimensions divisible by 4");
    }
  }
  for (auto& layer : layers_) {
    layer.mask = make_transposable(layer.weight);
    layer.pattern = NMPattern(2, 4);
  }
}

std::uint64_t NoisePredictor::checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& layer : layers_) {
    mix(h, layer.weight.data(), sizeof(float) * static_cast<std::size_t>(layer.weight.size()));
    mix(h, layer.bias.data(), sizeof(float) * static_cast<std::size_t>(layer.bias.size()));
    mix(h, layer.mask.bits().data(), static_cast<std::size_t>(layer.mask.bits().size()));
  }
  return h;
}

CompressedPredictor::CompressedPredictor(const NoisePredictor& model)
    : arch_(model.architecture()) {
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const MaskedLinear& layer = model.layers()[i];
    if (!layer.mask.satisfies(NMPattern(2, 4))) {
      throw CompressedPathError(NoisePredictor::layer_name(i) +
                                " is not 2:4 sparse; the compressed path needs 2:4 masks");
    }
    weights_.push_back(compress_2_4(layer.effective_weight(), layer.mask));
    biases_.push_back(layer.bias);
  }
}

CompressedPredictor::CompressedPredictor(Architecture arch, std::vector<Compressed24> weights,
                                         std::vector<Tensor> biases)
    : arch_(arch), weights_(std::move(weights)), biases_(std::move(biases)) {
  if (weights_.size() != 3 || biases_.size() != 3) {
    throw ArchitectureError("compressed predictor needs three layers");
  }
}

Tensor CompressedPredictor::predict(const Tensor& x_t, std::span<const int> t) const {
  Tensor h = assemble_input(arch_, x_t, t);
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = spmm(weights_[i], h, macs_);
    h.rowwise() += biases_[i].row(0);
    if (i + 1 < weights_.size()) h = silu_inplace(std::move(h));
  }
  return h.leftCols(arch_.data_dim);
}

}  // namespace sparsedm
