#include <bit>
#include <cmath>
#include <vector>

#include "sparsedm/errors.hpp"
#include "sparsedm/sparsity.hpp"

namespace sparsedm {

namespace {

bool two_per_row_and_col(std::uint16_t bitmap) {
  for (int r = 0; r < 4; ++r) {
    if (std::popcount(static_cast<unsigned>((bitmap >> (4 * r)) & 0xFu)) != 2) return false;
  }
  for (int c = 0; c < 4; ++c) {
    int count = 0;
    for (int r = 0; r < 4; ++r) count += (bitmap >> (4 * r + c)) & 1;
    if (count != 2) return false;
  }
  return true;
}

void require_divisible(Eigen::Index rows, Eigen::Index cols, int m, const char* op) {
  if (rows % m != 0 || cols % m != 0) {
    throw PatternError(std::string(op) + ": [" + std::to_string(rows) + "x" +
                       std::to_string(cols) + "] is not divisible by " + std::to_string(m) +
                       " in both dimensions");
  }
}

}  // namespace

const std::vector<std::uint16_t>& transposable_block_supports() {
  static const std::vector<std::uint16_t> supports = [] {
    std::vector<std::uint16_t> out;
    for (unsigned bitmap = 0; bitmap < (1u << 16); ++bitmap) {
      if (two_per_row_and_col(static_cast<std::uint16_t>(bitmap))) {
        out.push_back(static_cast<std::uint16_t>(bitmap));
      }
    }
    return out;
  }();
  return supports;
}

bool is_transposable(const SparseMask& mask, const NMPattern& pattern) {
  require_divisible(mask.rows(), mask.cols(), pattern.m, "is_transposable");
  return mask.satisfies(pattern) && mask.transposed().satisfies(pattern);
}

SparseMask make_transposable(const Tensor& w) {
  require_divisible(w.rows(), w.cols(), 4, "make_transposable");
  const auto& supports = transposable_block_supports();
  MaskBits bits = MaskBits::Zero(w.rows(), w.cols());
  for (Eigen::Index br = 0; br < w.rows(); br += 4) {
    for (Eigen::Index bc = 0; bc < w.cols(); bc += 4) {
      double magnitude[16];
      for (int k = 0; k < 16; ++k) magnitude[k] = std::abs(static_cast<double>(w(br + k / 4, bc + k % 4)));
      std::uint16_t best = supports.front();
      double best_sum = -1.0;
      for (std::uint16_t support : supports) {
        double retained = 0.0;
        for (int k = 0; k < 16; ++k) {
          if ((support >> k) & 1) retained += magnitude[k];
        }
        if (retained > best_sum) {
          best_sum = retained;
          best = support;
        }
      }
      for (int k = 0; k < 16; ++k) {
        if ((best >> k) & 1) bits(br + k / 4, bc + k % 4) = 1;
      }
    }
  }
  return SparseMask(std::move(bits));
}

}  // namespace sparsedm
