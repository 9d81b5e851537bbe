#include "sparsedm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "sparsedm/errors.hpp"

namespace sparsedm {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'S', 'D', 'M', '1'};

class Writer {
 public:
  template <typename T>
  void put(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& b) : buf(b) {}
  template <typename T>
  T get() {
    T v;
    bytes(&v, sizeof(T));
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    if (n > buf.size() - pos) throw FormatError("checkpoint truncated");
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  bool done() const { return pos == buf.size(); }

 private:
  const std::vector<std::uint8_t>& buf;
  std::size_t pos = 0;
};

std::uint32_t checked_dim(Eigen::Index d) {
  if (d < 0 || d > static_cast<Eigen::Index>(UINT32_MAX)) throw FormatError("dimension out of range");
  return static_cast<std::uint32_t>(d);
}

std::string compressed_values(const std::string& name) { return name + ".values"; }
std::string compressed_indices(const std::string& name) { return name + ".indices"; }

}  // namespace

std::uint64_t CheckpointEntry::element_count() const {
  std::uint64_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

std::vector<std::uint8_t> pack_bits(const MaskBits& bits) {
  std::vector<std::uint8_t> packed((static_cast<std::size_t>(bits.size()) + 7) / 8, 0);
  for (Eigen::Index i = 0; i < bits.size(); ++i) {
    if (bits.data()[i]) packed[static_cast<std::size_t>(i) / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return packed;
}

MaskBits unpack_bits(const std::vector<std::uint8_t>& packed, Eigen::Index rows, Eigen::Index cols) {
  MaskBits bits(rows, cols);
  if (packed.size() * 8 < static_cast<std::size_t>(bits.size())) throw FormatError("bitset payload too short");
  for (Eigen::Index i = 0; i < bits.size(); ++i) {
    bits.data()[i] = (packed[static_cast<std::size_t>(i) / 8] >> (i % 8)) & 1u;
  }
  return bits;
}

void Checkpoint::add_tensor(const std::string& name, const Tensor& t, int rank) {
  CheckpointEntry e;
  e.name = name;
  e.kind = EntryKind::float_tensor;
  if (rank == 1) {
    e.dims = {checked_dim(t.size())};
  } else if (rank == 2) {
    e.dims = {checked_dim(t.rows()), checked_dim(t.cols())};
  } else {
    throw ContractError("add_tensor: rank must be 1 or 2");
  }
  e.values.assign(t.data(), t.data() + t.size());
  entries_.push_back(std::move(e));
}

void Checkpoint::add_mask(const std::string& name, const SparseMask& mask) {
  add_bits(name, {checked_dim(mask.rows()), checked_dim(mask.cols())}, pack_bits(mask.bits()));
}

void Checkpoint::add_bits(const std::string& name, std::vector<std::uint32_t> dims,
                          std::vector<std::uint8_t> packed) {
  CheckpointEntry e;
  e.name = name;
  e.kind = EntryKind::mask_bits;
  e.dims = std::move(dims);
  if (packed.size() != (e.element_count() + 7) / 8) throw ContractError("add_bits: payload size mismatch");
  e.bits = std::move(packed);
  entries_.push_back(std::move(e));
}

void Checkpoint::add_compressed(const std::string& name, const Compressed24& c) {
  CheckpointEntry values;
  values.name = compressed_values(name);
  values.kind = EntryKind::float_tensor;
  values.dims = {checked_dim(static_cast<Eigen::Index>(c.values.size()))};
  values.values = c.values;
  entries_.push_back(std::move(values));
  add_bits(compressed_indices(name), {checked_dim(c.rows), checked_dim(c.cols)}, c.indices);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return true;
  }
  return false;
}

const CheckpointEntry& Checkpoint::entry(const std::string& name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return e;
  }
  throw FormatError("checkpoint has no entry '" + name + "'");
}

Tensor Checkpoint::tensor(const std::string& name) const {
  const auto& e = entry(name);
  if (e.kind != EntryKind::float_tensor) throw FormatError("'" + name + "' is not a float tensor");
  const Eigen::Index rows = e.dims.size() == 2 ? e.dims[0] : 1;
  const Eigen::Index cols = e.dims.size() == 2 ? e.dims[1] : (e.dims.empty() ? 1 : e.dims[0]);
  if (e.dims.size() > 2) throw FormatError("'" + name + "' has rank > 2");
  Tensor t(rows, cols);
  std::copy(e.values.begin(), e.values.end(), t.data());
  return t;
}

SparseMask Checkpoint::mask(const std::string& name) const {
  const auto& e = entry(name);
  if (e.kind != EntryKind::mask_bits || e.dims.size() != 2) throw FormatError("'" + name + "' is not a mask");
  return SparseMask(unpack_bits(e.bits, e.dims[0], e.dims[1]));
}

Compressed24 Checkpoint::compressed(const std::string& name) const {
  const auto& values = entry(compressed_values(name));
  const auto& indices = entry(compressed_indices(name));
  if (values.kind != EntryKind::float_tensor || indices.kind != EntryKind::mask_bits ||
      indices.dims.size() != 2 || values.values.size() * 2 != indices.element_count()) {
    throw FormatError("malformed compressed entry '" + name + "'");
  }
  Compressed24 c;
  c.rows = indices.dims[0];
  c.cols = indices.dims[1];
  c.values = values.values;
  c.indices = indices.bits;
  return c;
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes(kMagic, 4);
  w.put<std::uint16_t>(kVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(entries_.size()));
  for (const auto& e : entries_) {
    if (e.name.size() > UINT16_MAX) throw FormatError("entry name too long");
    if (e.dims.size() > UINT8_MAX) throw FormatError("entry rank too large");
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.kind));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.put<std::uint32_t>(d);
    if (e.kind == EntryKind::float_tensor) {
      w.bytes(e.values.data(), e.values.size() * sizeof(float));
    } else {
      w.bytes(e.bits.data(), e.bits.size());
    }
  }
  return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(const std::vector<std::uint8_t>& bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint (bad magic)");
  const auto version = r.get<std::uint16_t>();
  if (version != kVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  const auto count = r.get<std::uint32_t>();
  Checkpoint ckpt;
  for (std::uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    e.name.resize(r.get<std::uint16_t>());
    r.bytes(e.name.data(), e.name.size());
    const auto kind = r.get<std::uint8_t>();
    if (kind > 1) throw FormatError("unknown entry kind " + std::to_string(kind));
    e.kind = static_cast<EntryKind>(kind);
    e.dims.resize(r.get<std::uint8_t>());
    for (auto& d : e.dims) d = r.get<std::uint32_t>();
    const std::uint64_t n = e.element_count();
    if (e.kind == EntryKind::float_tensor) {
      e.values.resize(n);
      r.bytes(e.values.data(), n * sizeof(float));
    } else {
      e.bits.resize((n + 7) / 8);
      r.bytes(e.bits.data(), e.bits.size());
    }
    ckpt.entries_.push_back(std::move(e));
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint entries");
  return ckpt;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("cannot write " + path.string());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

Checkpoint model_to_checkpoint(const NoisePredictor& model) {
  Checkpoint ckpt;
  for (std::size_t i = 0; i < model.layers().size(); ++i) {
    const MaskedLinear& layer = model.layers()[i];
    const std::string name = NoisePredictor::layer_name(i);
    ckpt.add_tensor(name + ".weight", layer.weight, 2);
    ckpt.add_tensor(name + ".bias", layer.bias, 1);
    ckpt.add_mask(name + ".mask", layer.mask);
    if (layer.pattern.is_2_4() && layer.mask.satisfies(layer.pattern)) {
      ckpt.add_compressed(name, compress_2_4(layer.effective_weight(), layer.mask));
    }
  }
  return ckpt;
}

NoisePredictor model_from_checkpoint(const Checkpoint& ckpt, const Architecture& arch,
                                     const std::vector<NMPattern>& layer_patterns) {
  std::vector<MaskedLinear> layers;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = NoisePredictor::layer_name(i);
    MaskedLinear layer(ckpt.tensor(name + ".weight"), ckpt.tensor(name + ".bias"));
    layer.mask = ckpt.mask(name + ".mask");
    if (layer.mask.rows() != layer.weight.rows() || layer.mask.cols() != layer.weight.cols()) {
      throw FormatError(name + ": mask shape does not match weight");
    }
    if (i < layer_patterns.size()) layer.pattern = layer_patterns[i];
    layers.push_back(std::move(layer));
  }
  return NoisePredictor(arch, std::move(layers));
}

CompressedPredictor compressed_from_checkpoint(const Checkpoint& ckpt, const Architecture& arch) {
  std::vector<Compressed24> weights;
  std::vector<Tensor> biases;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string name = NoisePredictor::layer_name(i);
    if (!ckpt.contains(name + ".values")) {
      throw CompressedPathError(name + " has no 2:4 compressed weights in the checkpoint");
    }
    weights.push_back(ckpt.compressed(name));
    biases.push_back(ckpt.tensor(name + ".bias"));
  }
  return CompressedPredictor(arch, std::move(weights), std::move(biases));
}

nlohmann::ordered_json architecture_to_json(const Architecture& arch) {
  nlohmann::ordered_json j;
  j["data_dim"] = arch.data_dim;
  j["embed_dim"] = arch.embed_dim;
  j["hidden"] = arch.hidden;
  j["time_steps"] = arch.time_steps;
  j["input_width"] = arch.input_width();
  j["output_width"] = arch.output_width();
  j["activation"] = "silu";
  return j;
}

Architecture architecture_from_json(const nlohmann::ordered_json& j) {
  try {
    Architecture a;
    a.data_dim = j.at("data_dim").get<int>();
    a.embed_dim = j.at("embed_dim").get<int>();
    a.hidden = j.at("hidden").get<int>();
    a.time_steps = j.at("time_steps").get<int>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad architecture in meta.json: ") + e.what());
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << text;
  if (!out) throw ConfigError("cannot write " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot read " + path.string());
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void save_model(const std::filesystem::path& dir, const NoisePredictor& model, nlohmann::ordered_json meta) {
  meta["format_version"] = kMetaFormatVersion;
  meta["architecture"] = architecture_to_json(model.architecture());
  nlohmann::ordered_json patterns = nlohmann::ordered_json::array();
  for (const auto& layer : model.layers()) patterns.push_back(layer.pattern.to_string());
  meta["layer_patterns"] = patterns;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create model directory " + dir.string());
  model_to_checkpoint(model).save(dir / "model.ckpt");
  write_text(dir / "meta.json", meta.dump(2) + "\n");
}

StoredModel load_model(const std::filesystem::path& ckpt_path) {
  const auto meta_path = ckpt_path.parent_path() / "meta.json";
  nlohmann::ordered_json meta;
  try {
    meta = nlohmann::ordered_json::parse(read_text(meta_path));
  } catch (const nlohmann::ordered_json::exception& e) {
    throw FormatError("cannot parse " + meta_path.string() + ": " + e.what());
  }
  if (!meta.contains("format_version") || meta["format_version"] != kMetaFormatVersion) {
    throw FormatError("unsupported meta.json format_version in " + meta_path.string());
  }
  const Architecture arch = architecture_from_json(meta.at("architecture"));
  std::vector<NMPattern> patterns;
  if (meta.contains("layer_patterns")) {
    for (const auto& p : meta["layer_patterns"]) patterns.push_back(NMPattern::parse(p.get<std::string>()));
  }
  Checkpoint ckpt = Checkpoint::load(ckpt_path);
  NoisePredictor model = model_from_checkpoint(ckpt, arch, patterns);
  return StoredModel{std::move(model), std::move(meta), std::move(ckpt)};
}

}  // namespace sparsedm
