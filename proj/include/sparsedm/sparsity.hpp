#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "sparsedm/autodiff.hpp"
#include "sparsedm/tensor.hpp"

namespace sparsedm {

/// At most `n` kept weights in every `m` consecutive input-axis weights.
struct NMPattern {
  int n = 1;
  int m = 1;

  NMPattern() = default;
  NMPattern(int n_, int m_);

  /// Parses "N:M".
  static NMPattern parse(std::string_view text);
  static NMPattern dense() { return {1, 1}; }

  bool is_dense() const { return n == m; }
  bool is_2_4() const { return n == 2 && m == 4; }
  /// Fraction of pruned weights, 1 - n/m.
  double sparsity() const { return 1.0 - static_cast<double>(n) / m; }
  std::string to_string() const;

  friend bool operator==(const NMPattern&, const NMPattern&) = default;
};

using MaskBits = RowMatrix<std::uint8_t>;

/// Binary keep-mask over a rows x cols weight matrix. Groups run along the
/// column (input) axis.
class SparseMask {
 public:
  SparseMask() = default;
  explicit SparseMask(MaskBits bits);

  static SparseMask ones(Eigen::Index rows, Eigen::Index cols);
  static SparseMask zeros(Eigen::Index rows, Eigen::Index cols);

  Eigen::Index rows() const { return bits_.rows(); }
  Eigen::Index cols() const { return bits_.cols(); }
  bool operator()(Eigen::Index r, Eigen::Index c) const { return bits_(r, c) != 0; }
  void set(Eigen::Index r, Eigen::Index c, bool keep) { bits_(r, c) = keep ? 1 : 0; }

  const MaskBits& bits() const { return bits_; }
  std::int64_t count_ones() const;

  template <typename Scalar>
  RowMatrix<Scalar> as() const {
    return bits_.cast<Scalar>();
  }

  /// True when every group of m (cols must divide by m) holds exactly n ones.
  bool satisfies(const NMPattern& pattern) const;
  SparseMask transposed() const { return SparseMask(bits_.transpose()); }

  friend bool operator==(const SparseMask& a, const SparseMask& b) {
    return a.bits_.rows() == b.bits_.rows() && a.bits_.cols() == b.bits_.cols() &&
           a.bits_ == b.bits_;
  }

 private:
  MaskBits bits_;
};

/// Magnitude projection: in each group of m along the input axis, keep the n
/// entries of largest |w|. Ties go to the lowest column index.
SparseMask project_mask(const Tensor& w, const NMPattern& pattern);

/// W (.) M
Tensor apply_mask(const Tensor& w, const SparseMask& mask);

/// zeros / total
double sparsity_ratio(const SparseMask& mask);

/// Linear layer y = x W~^T + b with W~ = W (.) mask.
struct MaskedLinear {
  Tensor weight;  // out x in
  Tensor bias;    // 1 x out
  SparseMask mask;
  NMPattern pattern = NMPattern::dense();

  MaskedLinear() = default;
  MaskedLinear(Tensor weight_, Tensor bias_);

  Eigen::Index in_features() const { return weight.cols(); }
  Eigen::Index out_features() const { return weight.rows(); }
  Tensor effective_weight() const { return apply_mask(weight, mask); }

  /// Re-projects the mask from the current weights.
  void prune(const NMPattern& p);
};

struct LinearBinding {
  ParamId weight;
  ParamId bias;
};

/// Registers the layer's weight and bias on the tape.
LinearBinding bind(Tape& tape, const MaskedLinear& layer);

/// Records y = x W~^T + b. The backward rule is the straight-through
/// estimator: dL/dW receives dL/dW~ unchanged (no mask factor), so pruned
/// positions get gradients too.
Var masked_linear_forward(Tape& tape, Var x, const MaskedLinear& layer,
                          const LinearBinding& binding);

/// Inference-only forward, same arithmetic as the recorded one.
Tensor masked_linear_forward(const Tensor& x, const MaskedLinear& layer);

/// Mask valid for the pattern along rows and, transposed, along columns.
/// Throws PatternError unless rows and cols divide by pattern.m.
bool is_transposable(const SparseMask& mask, const NMPattern& pattern);

/// Transposable 2:4 mask: per 4x4 block, the 2-per-row / 2-per-column support
/// with the largest retained |w|, found by exhaustive search over all 90
/// such supports. Ties go to the first support in enumeration order.
SparseMask make_transposable(const Tensor& w);

/// All 90 4x4 0/1 patterns with two ones in every row and column, each
/// encoded as a 16-bit row-major bitmap. Enumeration order is ascending.
const std::vector<std::uint16_t>& transposable_block_supports();

}  // namespace sparsedm
