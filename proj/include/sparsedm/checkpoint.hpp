#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sparsedm/compressed.hpp"
#include "sparsedm/model.hpp"

namespace sparsedm {

/// Binary container of named tensors and masks, little-endian throughout:
///
///   "SDM1" | u16 version (=1) | u32 entry count
///   per entry: u16 name length | UTF-8 name | u8 kind | u8 rank | rank x u32 dims | payload
///
/// kind 0 carries float32 values, kind 1 a bitset packed low-bit-first and
/// padded to whole bytes.
enum class EntryKind : std::uint8_t { float_tensor = 0, mask_bits = 1 };

struct CheckpointEntry {
  std::string name;
  EntryKind kind = EntryKind::float_tensor;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;       // kind 0
  std::vector<std::uint8_t> bits;  // kind 1, packed

  std::uint64_t element_count() const;
};

class Checkpoint {
 public:
  static constexpr std::uint16_t kVersion = 1;

  void add_tensor(const std::string& name, const Tensor& t, int rank = 2);
  void add_mask(const std::string& name, const SparseMask& mask);
  void add_bits(const std::string& name, std::vector<std::uint32_t> dims, std::vector<std::uint8_t> packed);
  /// Stores c as "<name>.values" (rank 1 floats) and "<name>.indices" (a
  /// rows x cols bitset whose bit stream is exactly the packed 2-bit indices).
  void add_compressed(const std::string& name, const Compressed24& c);

  bool contains(const std::string& name) const;
  const CheckpointEntry& entry(const std::string& name) const;
  const std::vector<CheckpointEntry>& entries() const { return entries_; }

  Tensor tensor(const std::string& name) const;
  SparseMask mask(const std::string& name) const;
  Compressed24 compressed(const std::string& name) const;

  std::vector<std::uint8_t> serialize() const;
  static Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  std::vector<CheckpointEntry> entries_;
};

/// Packs 0/1 values low-bit-first.
std::vector<std::uint8_t> pack_bits(const MaskBits& bits);
MaskBits unpack_bits(const std::vector<std::uint8_t>& packed, Eigen::Index rows, Eigen::Index cols);

inline constexpr int kMetaFormatVersion = 1;

/// Model tensors: per layer weight, bias, mask; 2:4 layers also carry their
/// compressed form.
Checkpoint model_to_checkpoint(const NoisePredictor& model);
NoisePredictor model_from_checkpoint(const Checkpoint& ckpt, const Architecture& arch,
                                     const std::vector<NMPattern>& layer_patterns);
/// Reads the stored compressed layers; throws CompressedPathError if absent.
CompressedPredictor compressed_from_checkpoint(const Checkpoint& ckpt, const Architecture& arch);

nlohmann::ordered_json architecture_to_json(const Architecture& arch);
Architecture architecture_from_json(const nlohmann::ordered_json& j);

/// A stored model: model.ckpt plus the meta.json sidecar in one directory.
struct StoredModel {
  NoisePredictor model;
  nlohmann::ordered_json meta;
  Checkpoint checkpoint;
};

/// Writes <dir>/model.ckpt and <dir>/meta.json. `meta` gets format_version,
/// architecture and per-layer patterns filled in.
void save_model(const std::filesystem::path& dir, const NoisePredictor& model, nlohmann::ordered_json meta);
/// Loads a model.ckpt and the meta.json next to it.
StoredModel load_model(const std::filesystem::path& ckpt_path);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace sparsedm
