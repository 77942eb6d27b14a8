#pragma once

// Single-file checkpoint:
//
//   "MONETCKP"            8-byte magic
//   u64                   manifest length in bytes (little-endian)
//   manifest              JSON: format version, step, rng states, config,
//                         and per tensor {group, name, shape, offset, bytes, crc32}
//   blobs                 raw little-endian float32 data, in manifest order
//
// The manifest is serialised with sorted keys, so save -> load -> save
// reproduces the file byte for byte.

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "monet/errors.hpp"
#include "monet/params.hpp"

namespace monet {

inline constexpr char kCheckpointMagic[8] = {'M', 'O', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  std::vector<NamedTensor> params;
  std::vector<NamedTensor> optimizer;  // RMSProp mean squares, same names as params
  std::int64_t step = 0;
  std::string data_rng;
  std::string noise_rng;
  nlohmann::json config = nlohmann::json::object();

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

class CheckpointError : public IoError {
 public:
  using IoError::IoError;
};

struct TensorMismatch {
  std::string name;
  std::string expected;  // shape string, or "absent"
  std::string found;
};

// Checkpoint tensors do not fit the current architecture.
class ArchitectureMismatchError : public ShapeError {
 public:
  explicit ArchitectureMismatchError(std::vector<TensorMismatch> mismatches)
      : ShapeError(describe(mismatches)), mismatches_(std::move(mismatches)) {}

  const std::vector<TensorMismatch>& mismatches() const { return mismatches_; }

 private:
  static std::string describe(const std::vector<TensorMismatch>& ms) {
    std::string s = "checkpoint does not match the model architecture (" + std::to_string(ms.size()) + " tensors):";
    for (const auto& m : ms) s += "\n  " + m.name + ": model " + m.expected + ", checkpoint " + m.found;
    return s;
  }
  std::vector<TensorMismatch> mismatches_;
};

template <typename T>
std::vector<NamedTensor> to_named_tensors(const ParamSet<T>& params) {
  std::vector<NamedTensor> out;
  out.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor<T>& t = params.tensor(i);
    NamedTensor nt{params.info(i).name, t.shape(), {}};
    nt.data.assign(t.vec().begin(), t.vec().end());
    out.push_back(std::move(nt));
  }
  return out;
}

// Copies every tensor of `params` from `stored`; all mismatches are collected
// before throwing, and `params` is untouched on failure. Extra stored tensors
// are reported too.
template <typename T>
void restore_tensors(ParamSet<T>& params, const std::vector<NamedTensor>& stored) {
  std::vector<TensorMismatch> bad;
  std::vector<const NamedTensor*> source(params.size(), nullptr);
  std::vector<bool> used(stored.size(), false);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.info(i).name;
    std::size_t j = 0;
    while (j < stored.size() && stored[j].name != name) ++j;
    if (j == stored.size()) {
      bad.push_back({name, shape_str(params.tensor(i).shape()), "absent"});
      continue;
    }
    used[j] = true;
    if (stored[j].shape != params.tensor(i).shape()) {
      bad.push_back({name, shape_str(params.tensor(i).shape()), shape_str(stored[j].shape)});
      continue;
    }
    source[i] = &stored[j];
  }
  for (std::size_t j = 0; j < stored.size(); ++j) {
    if (!used[j]) bad.push_back({stored[j].name, "absent", shape_str(stored[j].shape)});
  }
  if (!bad.empty()) throw ArchitectureMismatchError(std::move(bad));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& t = params.tensor(i);
    for (Index k = 0; k < t.numel(); ++k) t[k] = static_cast<T>(source[i]->data[static_cast<std::size_t>(k)]);
  }
}

namespace detail {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

inline std::uint32_t blob_crc(const std::vector<float>& data) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), reinterpret_cast<const Bytef*>(data.data()),
                                            static_cast<uInt>(data.size() * sizeof(float))));
}

}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  nlohmann::json tensors = nlohmann::json::array();
  std::uint64_t offset = 0;
  auto add_group = [&](const char* group, const std::vector<NamedTensor>& ts) {
    for (const auto& t : ts) {
      if (static_cast<Index>(t.data.size()) != shape_numel(t.shape)) {
        throw ShapeError("checkpoint tensor '" + t.name + "' has " + std::to_string(t.data.size()) +
                         " values for shape " + shape_str(t.shape));
      }
      const std::uint64_t bytes = t.data.size() * sizeof(float);
      tensors.push_back({{"group", group},
                         {"name", t.name},
                         {"dtype", "float32"},
                         {"shape", t.shape},
                         {"offset", offset},
                         {"bytes", bytes},
                         {"crc32", detail::blob_crc(t.data)}});
      offset += bytes;
    }
  };
  add_group("params", ckpt.params);
  add_group("optimizer", ckpt.optimizer);
  const nlohmann::json manifest = {{"format", "monet-checkpoint"},
                                   {"version", kCheckpointVersion},
                                   {"step", ckpt.step},
                                   {"data_rng", ckpt.data_rng},
                                   {"noise_rng", ckpt.noise_rng},
                                   {"config", ckpt.config},
                                   {"tensors", tensors}};
  const std::string text = manifest.dump();

  const std::filesystem::path tmp = path.string() + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kCheckpointMagic, sizeof kCheckpointMagic);
    const std::uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof len);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto* group : {&ckpt.params, &ckpt.optimizer}) {
      for (const auto& t : *group) {
        out.write(reinterpret_cast<const char*>(t.data.data()),
                  static_cast<std::streamsize>(t.data.size() * sizeof(float)));
      }
    }
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  const auto file_size = std::filesystem::file_size(path);
  char magic[sizeof kCheckpointMagic];
  std::uint64_t len = 0;
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw CheckpointError(path.string() + ": not a checkpoint file");
  }
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > file_size) {
    throw CheckpointError(path.string() + ": corrupt manifest length");
  }
  std::string text(static_cast<std::size_t>(len), '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(len))) throw CheckpointError(path.string() + ": truncated");

  Checkpoint ckpt;
  std::uint64_t expected_blob_bytes = 0;
  try {
    const nlohmann::json m = nlohmann::json::parse(text);
    if (m.at("format") != "monet-checkpoint") throw CheckpointError(path.string() + ": wrong format tag");
    if (m.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError(path.string() + ": unsupported checkpoint version " + m.at("version").dump());
    }
    ckpt.step = m.at("step").get<std::int64_t>();
    ckpt.data_rng = m.at("data_rng").get<std::string>();
    ckpt.noise_rng = m.at("noise_rng").get<std::string>();
    ckpt.config = m.at("config");
    const std::uint64_t base = sizeof kCheckpointMagic + sizeof len + len;
    for (const auto& e : m.at("tensors")) {
      NamedTensor t;
      t.name = e.at("name").get<std::string>();
      t.shape = e.at("shape").get<Shape>();
      const auto bytes = e.at("bytes").get<std::uint64_t>();
      const auto offset = e.at("offset").get<std::uint64_t>();
      if (e.at("dtype") != "float32" || bytes != static_cast<std::uint64_t>(shape_numel(t.shape)) * sizeof(float) ||
          offset != expected_blob_bytes) {
        throw CheckpointError(path.string() + ": inconsistent manifest entry for '" + t.name + "'");
      }
      if (base + offset + bytes > file_size) throw CheckpointError(path.string() + ": truncated at '" + t.name + "'");
      t.data.resize(static_cast<std::size_t>(bytes / sizeof(float)));
      in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(bytes));
      if (!in) throw CheckpointError(path.string() + ": truncated at '" + t.name + "'");
      if (detail::blob_crc(t.data) != e.at("crc32").get<std::uint32_t>()) {
        throw CheckpointError(path.string() + ": checksum mismatch in '" + t.name + "'");
      }
      expected_blob_bytes += bytes;
      const std::string group = e.at("group").get<std::string>();
      if (group == "params") {
        ckpt.params.push_back(std::move(t));
      } else if (group == "optimizer") {
        ckpt.optimizer.push_back(std::move(t));
      } else {
        throw CheckpointError(path.string() + ": unknown tensor group '" + group + "'");
      }
    }
    if (base + expected_blob_bytes != file_size) throw CheckpointError(path.string() + ": trailing bytes");
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(path.string() + ": corrupt manifest (" + e.what() + ")");
  }
  return ckpt;
}

}  // namespace monet
