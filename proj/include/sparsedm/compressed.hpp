#pragma once

#include <cstdint>
#include <vector>

#include "sparsedm/sparsity.hpp"
#include "sparsedm/tensor.hpp"

namespace sparsedm {

/// 2:4 compressed weights: the two kept values of every group of four input
/// columns, plus their in-group positions as 2-bit indices. Index k (the k-th
/// kept value in row-major order) occupies bits [2k, 2k+1] of the packed
/// stream, low bit first, four indices per byte.
struct Compressed24 {
  Eigen::Index rows = 0;
  Eigen::Index cols = 0;
  std::vector<float> values;         // rows * cols / 2
  std::vector<std::uint8_t> indices; // ceil(rows * cols / 2 / 4) bytes

  std::size_t kept() const { return values.size(); }
  int index_at(std::size_t k) const { return (indices[k / 4] >> (2 * (k % 4))) & 0x3; }
};

/// Compresses W~ using its mask, so kept-but-zero weights survive the round
/// trip. Throws PatternError if the mask is not 2:4 or W~ is nonzero outside it.
Compressed24 compress_2_4(const Tensor& w_sparse, const SparseMask& mask);

/// Compresses W~ by its nonzero support. Groups with fewer than two nonzeros
/// are filled with the lowest-index zero positions; groups with more than two
/// nonzeros raise PatternError naming row and group.
Compressed24 compress_2_4(const Tensor& w_sparse);

Tensor decompress(const Compressed24& c);
SparseMask mask_of(const Compressed24& c);

/// y = x * decompress(c)^T, touching only the kept values. Accumulates in double.
Tensor spmm(const Compressed24& c, const Tensor& x);

/// Same, and adds the number of executed multiply-accumulates to `macs`.
Tensor spmm(const Compressed24& c, const Tensor& x, std::uint64_t& macs);

/// Reference dense kernel for y = x * w^T with the same loop structure and
/// accumulation type as spmm; adds rows * cols MACs per input row to `macs`.
Tensor dense_matmul_nt(const Tensor& w, const Tensor& x, std::uint64_t& macs);

}  // namespace sparsedm
