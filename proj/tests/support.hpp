#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include <unistd.h>

#include "sparsedm/rng.hpp"
#include "sparsedm/sparsity.hpp"
#include "sparsedm/tensor.hpp"

namespace sparsedm::testing {

inline Tensor uniform_tensor(Rng& rng, Eigen::Index rows, Eigen::Index cols, double lo = -1.0,
                             double hi = 1.0) {
  Tensor t(rows, cols);
  for (Eigen::Index i = 0; i < t.size(); ++i) {
    t.data()[i] = static_cast<float>(lo + (hi - lo) * rng.uniform());
  }
  return t;
}

/// Retained |w| of the best n-subset of one group, by trying every subset.
inline double brute_force_best(const std::vector<float>& group, int n) {
  const int m = static_cast<int>(group.size());
  double best = -1.0;
  for (unsigned bits = 0; bits < (1u << m); ++bits) {
    if (__builtin_popcount(bits) != n) continue;
    double s = 0.0;
    for (int k = 0; k < m; ++k) {
      if (bits & (1u << k)) s += std::abs(static_cast<double>(group[k]));
    }
    best = std::max(best, s);
  }
  return best;
}

/// Every 4x4 0/1 block with two ones per row and per column, found by scanning all 2^16 bitmaps.
inline std::vector<std::uint16_t> enumerate_doubly_2_4_blocks() {
  std::vector<std::uint16_t> out;
  for (unsigned bits = 0; bits < (1u << 16); ++bits) {
    bool ok = true;
    for (int r = 0; r < 4 && ok; ++r) ok = __builtin_popcount((bits >> (4 * r)) & 0xF) == 2;
    for (int c = 0; c < 4 && ok; ++c) {
      int ones = 0;
      for (int r = 0; r < 4; ++r) ones += (bits >> (4 * r + c)) & 1;
      ok = ones == 2;
    }
    if (ok) out.push_back(static_cast<std::uint16_t>(bits));
  }
  return out;
}

/// Fresh scratch directory, removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sparsedm-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  ScratchDir(const ScratchDir&) = delete;
  ScratchDir& operator=(const ScratchDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& leaf) const { return path_ / leaf; }

 private:
  std::filesystem::path path_;
};

inline std::vector<std::uint8_t> file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace sparsedm::testing
