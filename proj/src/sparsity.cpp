#include "sparsedm/sparsity.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <vector>

#include "sparsedm/errors.hpp"

namespace sparsedm {

NMPattern::NMPattern(int n_, int m_) : n(n_), m(m_) {
  if (m < 1 || n < 1 || n > m) {
    throw PatternError("invalid N:M pattern " + std::to_string(n_) + ":" + std::to_string(m_) +
                       " (need 1 <= N <= M)");
  }
}

NMPattern NMPattern::parse(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw PatternError("pattern must look like N:M, got '" + std::string(text) + "'");
  }
  auto parse_int = [&](std::string_view part) {
    int value = 0;
    const auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
    if (ec != std::errc() || ptr != part.data() + part.size()) {
      throw PatternError("pattern must look like N:M, got '" + std::string(text) + "'");
    }
    return value;
  };
  return NMPattern(parse_int(text.substr(0, colon)), parse_int(text.substr(colon + 1)));
}

std::string NMPattern::to_string() const { return std::to_string(n) + ":" + std::to_string(m); }

SparseMask::SparseMask(MaskBits bits) : bits_(std::move(bits)) {
  for (Eigen::Index i = 0; i < bits_.size(); ++i) {
    if (bits_.data()[i] > 1) throw ContractError("SparseMask: entries must be 0 or 1");
  }
}

SparseMask SparseMask::ones(Eigen::Index rows, Eigen::Index cols) {
  return SparseMask(MaskBits::Ones(rows, cols));
}

SparseMask SparseMask::zeros(Eigen::Index rows, Eigen::Index cols) {
  return SparseMask(MaskBits::Zero(rows, cols));
}

std::int64_t SparseMask::count_ones() const {
  return bits_.cast<std::int64_t>().sum();
}

bool SparseMask::satisfies(const NMPattern& pattern) const {
  if (cols() % pattern.m != 0) return false;
  for (Eigen::Index r = 0; r < rows(); ++r) {
    for (Eigen::Index g = 0; g < cols(); g += pattern.m) {
      int kept = 0;
      for (int k = 0; k < pattern.m; ++k) kept += bits_(r, g + k);
      if (kept != pattern.n) return false;
    }
  }
  return true;
}

SparseMask project_mask(const Tensor& w, const NMPattern& pattern) {
  if (w.cols() % pattern.m != 0) {
    throw PatternError("pattern " + pattern.to_string() + " does not divide input width of " +
                       shape_string(w));
  }
  MaskBits bits = MaskBits::Zero(w.rows(), w.cols());
  if (pattern.is_dense()) {
    bits.setOnes();
    return SparseMask(std::move(bits));
  }
  std::vector<int> order(static_cast<std::size_t>(pattern.m));
  for (Eigen::Index r = 0; r < w.rows(); ++r) {
    for (Eigen::Index g = 0; g < w.cols(); g += pattern.m) {
      std::iota(order.begin(), order.end(), 0);
      auto stronger = [&](int a, int b) {
        const float ma = std::abs(w(r, g + a));
        const float mb = std::abs(w(r, g + b));
        return ma > mb || (ma == mb && a < b);
      };
      std::nth_element(order.begin(), order.begin() + (pattern.n - 1), order.end(), stronger);
      for (int k = 0; k < pattern.n; ++k) bits(r, g + order[static_cast<std::size_t>(k)]) = 1;
    }
  }
  return SparseMask(std::move(bits));
}

Tensor apply_mask(const Tensor& w, const SparseMask& mask) {
  if (w.rows() != mask.rows() || w.cols() != mask.cols()) {
    throw DimensionError("apply_mask: weight " + shape_string(w) + " vs mask [" +
                         std::to_string(mask.rows()) + "x" + std::to_string(mask.cols()) + "]");
  }
  return w.cwiseProduct(mask.as<float>());
}

double sparsity_ratio(const SparseMask& mask) {
  const double total = static_cast<double>(mask.rows() * mask.cols());
  if (total == 0) return 0.0;
  return (total - static_cast<double>(mask.count_ones())) / total;
}

MaskedLinear::MaskedLinear(Tensor weight_, Tensor bias_)
    : weight(std::move(weight_)), bias(std::move(bias_)),
      mask(SparseMask::ones(weight.rows(), weight.cols())) {
  if (bias.rows() != 1 || bias.cols() != weight.rows()) {
    throw DimensionError("MaskedLinear: bias " + shape_string(bias) + " vs weight " +
                         shape_string(weight));
  }
}

void MaskedLinear::prune(const NMPattern& p) {
  mask = project_mask(weight, p);
  pattern = p;
}

LinearBinding bind(Tape& tape, const MaskedLinear& layer) {
  return LinearBinding{tape.add_param(layer.weight), tape.add_param(layer.bias)};
}

Var masked_linear_forward(Tape& tape, Var x, const MaskedLinear& layer,
                          const LinearBinding& binding) {
  const Var w = tape.param(binding.weight);
  const Var b = tape.param(binding.bias);
  const Tensor& xv = tape.value(x);
  const Tensor& wv = tape.value(w);
  if (xv.cols() != wv.cols()) {
    throw DimensionError("masked_linear_forward: input " + shape_string(xv) + " vs weight " +
                         shape_string(wv));
  }
  Tensor sparse_weight = apply_mask(wv, layer.mask);
  Tensor out = (xv.cast<double>() * sparse_weight.cast<double>().transpose()).cast<float>();
  out.rowwise() += tape.value(b).row(0);
  return tape.record(
      std::move(out), {x, w, b},
      [x, sparse_weight = std::move(sparse_weight)](const Tape& t, const Tensor& g,
                                                   std::span<Tensor> grads,
                                                   std::span<const bool> need) {
        const Eigen::MatrixXd gd = g.cast<double>();
        if (need[0]) grads[0] = (gd * sparse_weight.cast<double>()).cast<float>();
        // straight-through: gradient w.r.t. W~ lands on W as is
        if (need[1]) grads[1] = (gd.transpose() * t.value(x).cast<double>()).cast<float>();
        if (need[2]) grads[2] = gd.colwise().sum().cast<float>();
      });
}

Tensor masked_linear_forward(const Tensor& x, const MaskedLinear& layer) {
  if (x.cols() != layer.in_features()) {
    throw DimensionError("masked_linear_forward: input " + shape_string(x) + " vs weight " +
                         shape_string(layer.weight));
  }
  const Tensor sparse_weight = layer.effective_weight();
  Tensor out = (x.cast<double>() * sparse_weight.cast<double>().transpose()).cast<float>();
  out.rowwise() += layer.bias.row(0);
  return out;
}

}  // namespace sparsedm
