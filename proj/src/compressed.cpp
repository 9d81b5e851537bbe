#include "sparsedm/compressed.hpp"

#include <string>

#include "sparsedm/errors.hpp"

namespace sparsedm {

namespace {

void require_cols_div4(Eigen::Index cols) {
  if (cols % 4 != 0) {
    throw PatternError("2:4 compression needs input width divisible by 4, got " +
                       std::to_string(cols));
  }
}

Compressed24 empty_like(Eigen::Index rows, Eigen::Index cols) {
  Compressed24 c;
  c.rows = rows;
  c.cols = cols;
  const auto kept = static_cast<std::size_t>(rows * cols / 2);
  c.values.reserve(kept);
  c.indices.assign((kept + 3) / 4, 0);
  return c;
}

void push(Compressed24& c, float value, int position) {
  const std::size_t k = c.values.size();
  c.values.push_back(value);
  c.indices[k / 4] |= static_cast<std::uint8_t>(position << (2 * (k % 4)));
}

std::string group_name(Eigen::Index r, Eigen::Index g) {
  return "row " + std::to_string(r) + ", group " + std::to_string(g / 4);
}

}  // namespace

Compressed24 compress_2_4(const Tensor& w_sparse, const SparseMask& mask) {
  require_cols_div4(w_sparse.cols());
  if (mask.rows() != w_sparse.rows() || mask.cols() != w_sparse.cols()) {
    throw DimensionError("compress_2_4: weight " + shape_string(w_sparse) + " vs mask shape");
  }
  Compressed24 c = empty_like(w_sparse.rows(), w_sparse.cols());
  for (Eigen::Index r = 0; r < w_sparse.rows(); ++r) {
    for (Eigen::Index g = 0; g < w_sparse.cols(); g += 4) {
      int kept = 0;
      for (int k = 0; k < 4; ++k) {
        if (mask(r, g + k)) {
          ++kept;
        } else if (w_sparse(r, g + k) != 0.0f) {
          throw PatternError("compress_2_4: nonzero weight outside the mask at " +
                             group_name(r, g));
        }
      }
      if (kept != 2) {
        throw PatternError("compress_2_4: mask is not 2:4 at " + group_name(r, g) + " (" +
                           std::to_string(kept) + " kept)");
      }
      for (int k = 0; k < 4; ++k) {
        if (mask(r, g + k)) push(c, w_sparse(r, g + k), k);
      }
    }
  }
  return c;
}

Compressed24 compress_2_4(const Tensor& w_sparse) {
  require_cols_div4(w_sparse.cols());
  SparseMask mask = SparseMask::zeros(w_sparse.rows(), w_sparse.cols());
  for (Eigen::Index r = 0; r < w_sparse.rows(); ++r) {
    for (Eigen::Index g = 0; g < w_sparse.cols(); g += 4) {
      int nonzero = 0;
      for (int k = 0; k < 4; ++k) nonzero += w_sparse(r, g + k) != 0.0f;
      if (nonzero > 2) {
        throw PatternError("compress_2_4: " + std::to_string(nonzero) + " nonzeros at " +
                           group_name(r, g) + "; not 2:4");
      }
      int fill = 2 - nonzero;
      for (int k = 0; k < 4; ++k) {
        if (w_sparse(r, g + k) != 0.0f) {
          mask.set(r, g + k, true);
        } else if (fill > 0) {
          mask.set(r, g + k, true);
          --fill;
        }
      }
    }
  }
  return compress_2_4(w_sparse, mask);
}

Tensor decompress(const Compressed24& c) {
  Tensor w = Tensor::Zero(c.rows, c.cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < c.rows; ++r) {
    for (Eigen::Index g = 0; g < c.cols; g += 4) {
      for (int j = 0; j < 2; ++j, ++k) w(r, g + c.index_at(k)) = c.values[k];
    }
  }
  return w;
}

SparseMask mask_of(const Compressed24& c) {
  SparseMask mask = SparseMask::zeros(c.rows, c.cols);
  std::size_t k = 0;
  for (Eigen::Index r = 0; r < c.rows; ++r) {
    for (Eigen::Index g = 0; g < c.cols; g += 4) {
      for (int j = 0; j < 2; ++j, ++k) mask.set(r, g + c.index_at(k), true);
    }
  }
  return mask;
}

Tensor spmm(const Compressed24& c, const Tensor& x, std::uint64_t& macs) {
  if (x.cols() != c.cols) {
    throw DimensionError("spmm: input " + shape_string(x) + " vs compressed weight [" +
                         std::to_string(c.rows) + "x" + std::to_string(c.cols) + "]");
  }
  const Eigen::Index batch = x.rows();
  const Eigen::Index kept_per_row = c.cols / 2;
  Tensor y(batch, c.rows);

  // Unpack indices to absolute column offsets once; the inner loop is then a
  // gather-multiply over the kept values only.
  std::vector<Eigen::Index> columns(c.kept());
  for (std::size_t k = 0; k < c.kept(); ++k) {
    const auto group = static_cast<Eigen::Index>(k % static_cast<std::size_t>(kept_per_row)) / 2;
    columns[k] = 4 * group + c.index_at(k);
  }

  for (Eigen::Index i = 0; i < batch; ++i) {
    const float* xi = x.data() + i * x.cols();
    for (Eigen::Index r = 0; r < c.rows; ++r) {
      const std::size_t base = static_cast<std::size_t>(r * kept_per_row);
      const float* v = c.values.data() + base;
      const Eigen::Index* col = columns.data() + base;
      double acc = 0.0;
      for (Eigen::Index k = 0; k < kept_per_row; ++k) {
        acc += static_cast<double>(v[k]) * static_cast<double>(xi[col[k]]);
      }
      y(i, r) = static_cast<float>(acc);
    }
  }
  macs += static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(c.rows) *
          static_cast<std::uint64_t>(kept_per_row);
  return y;
}

Tensor spmm(const Compressed24& c, const Tensor& x) {
  std::uint64_t unused = 0;
  return spmm(c, x, unused);
}

Tensor dense_matmul_nt(const Tensor& w, const Tensor& x, std::uint64_t& macs) {
  if (x.cols() != w.cols()) {
    throw DimensionError("dense_matmul_nt: input " + shape_string(x) + " vs weight " +
                         shape_string(w));
  }
  const Eigen::Index batch = x.rows();
  Tensor y(batch, w.rows());
  for (Eigen::Index i = 0; i < batch; ++i) {
    const float* xi = x.data() + i * x.cols();
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const float* wr = w.data() + r * w.cols();
      double acc = 0.0;
      for (Eigen::Index k = 0; k < w.cols(); ++k) {
        acc += static_cast<double>(wr[k]) * static_cast<double>(xi[k]);
      }
      y(i, r) = static_cast<float>(acc);
    }
  }
  macs += static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(w.rows()) *
          static_cast<std::uint64_t>(w.cols());
  return y;
}

}  // namespace sparsedm
