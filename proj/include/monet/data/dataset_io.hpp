#pragma once

// Dataset container.
//
//   header   256 bytes: one JSON object padded with spaces, ending in '\n'
//   records  `count` fixed-size records, little-endian:
//              u8 sprite_count, u8[3] background
//              max_sprites x { u8 shape, f32 x, f32 y, f32 scale,
//                              f32 orientation, u8[3] color }   (20 bytes)
//              u8[H*W*3] image, row-major interleaved RGB, round(255 v)
//              mask_slots x bit-packed plane, ceil(H*W/8) bytes, LSB first
//              u32 CRC-32 of the record bytes above

#include <zlib.h>

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "monet/data/scene.hpp"
#include "monet/errors.hpp"

namespace monet::data {

inline constexpr const char* kDatasetFormat = "monet-dataset";
inline constexpr int kDatasetVersion = 1;
inline constexpr std::size_t kHeaderBytes = 256;
inline constexpr std::size_t kSpriteRecordBytes = 20;

struct DatasetHeader {
  std::uint64_t count = 0;
  Index height = 0;
  Index width = 0;
  Index mask_slots = 0;
  int max_sprites = 0;
  std::uint64_t seed = 0;
  int version = kDatasetVersion;

  std::size_t plane_bytes() const { return static_cast<std::size_t>((height * width + 7) / 8); }
  std::size_t record_bytes() const {
    return 4 + static_cast<std::size_t>(max_sprites) * kSpriteRecordBytes +
           static_cast<std::size_t>(height * width * 3) + static_cast<std::size_t>(mask_slots) * plane_bytes() + 4;
  }

  nlohmann::json to_json() const {
    return {{"format", kDatasetFormat}, {"version", version},        {"count", count},
            {"height", height},         {"width", width},            {"mask_slots", mask_slots},
            {"max_sprites", max_sprites}, {"seed", seed},            {"record_bytes", record_bytes()}};
  }
};

namespace detail {

static_assert(std::endian::native == std::endian::little, "dataset I/O assumes a little-endian host");

inline void put_f32(std::vector<std::uint8_t>& buf, float v) {
  std::uint8_t b[4];
  std::memcpy(b, &v, 4);
  buf.insert(buf.end(), b, b + 4);
}
inline float get_f32(const std::uint8_t* p) {
  float v;
  std::memcpy(&v, p, 4);
  return v;
}
inline void put_u32(std::vector<std::uint8_t>& buf, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
inline std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 | std::uint32_t(p[3]) << 24;
}
inline std::uint32_t crc32_of(const std::uint8_t* p, std::size_t n) {
  return static_cast<std::uint32_t>(::crc32(::crc32(0L, Z_NULL, 0), p, static_cast<uInt>(n)));
}

inline std::uint8_t quantize(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(255.0f * c));
}

inline std::vector<std::uint8_t> encode_record(const LabeledScene& s, const DatasetHeader& h) {
  if (s.height != h.height || s.width != h.width || s.mask_slots != h.mask_slots) {
    throw ShapeError("dataset write: scene " + std::to_string(s.height) + "x" + std::to_string(s.width) + " with " +
                     std::to_string(s.mask_slots) + " masks does not match file layout");
  }
  if (static_cast<int>(s.sprites.size()) > h.max_sprites) throw ShapeError("dataset write: too many sprites");
  std::vector<std::uint8_t> buf;
  buf.reserve(h.record_bytes());
  buf.push_back(static_cast<std::uint8_t>(s.sprites.size()));
  buf.insert(buf.end(), s.background.begin(), s.background.end());
  for (int i = 0; i < h.max_sprites; ++i) {
    SpriteInfo sp = i < static_cast<int>(s.sprites.size()) ? s.sprites[static_cast<std::size_t>(i)] : SpriteInfo{};
    buf.push_back(static_cast<std::uint8_t>(sp.shape));
    put_f32(buf, sp.x);
    put_f32(buf, sp.y);
    put_f32(buf, sp.scale);
    put_f32(buf, sp.orientation);
    buf.insert(buf.end(), sp.color.begin(), sp.color.end());
  }
  const Index hw = h.height * h.width;
  for (Index p = 0; p < hw; ++p) {
    for (Index c = 0; c < 3; ++c) buf.push_back(quantize(s.image[c * hw + p]));
  }
  for (Index m = 0; m < h.mask_slots; ++m) {
    std::vector<std::uint8_t> plane(h.plane_bytes(), 0);
    for (Index p = 0; p < hw; ++p) {
      if (s.labels[static_cast<std::size_t>(p)] == m) plane[static_cast<std::size_t>(p / 8)] |= std::uint8_t(1u << (p % 8));
    }
    buf.insert(buf.end(), plane.begin(), plane.end());
  }
  put_u32(buf, crc32_of(buf.data(), buf.size()));
  return buf;
}

inline LabeledScene decode_record(const std::uint8_t* p, const DatasetHeader& h, std::uint64_t index) {
  const std::size_t body = h.record_bytes() - 4;
  if (crc32_of(p, body) != get_u32(p + body)) {
    throw ChecksumError("dataset record " + std::to_string(index) + ": checksum mismatch");
  }
  LabeledScene s;
  s.height = h.height;
  s.width = h.width;
  s.mask_slots = h.mask_slots;
  const int count = p[0];
  if (count > h.max_sprites) throw FormatError("dataset record " + std::to_string(index) + ": sprite count too large");
  s.background = {p[1], p[2], p[3]};
  const std::uint8_t* q = p + 4;
  for (int i = 0; i < h.max_sprites; ++i, q += kSpriteRecordBytes) {
    if (i >= count) continue;
    SpriteInfo sp;
    if (q[0] >= kSpriteShapeCount) throw FormatError("dataset record " + std::to_string(index) + ": bad shape id");
    sp.shape = static_cast<SpriteShape>(q[0]);
    sp.x = get_f32(q + 1);
    sp.y = get_f32(q + 5);
    sp.scale = get_f32(q + 9);
    sp.orientation = get_f32(q + 13);
    sp.color = {q[17], q[18], q[19]};
    s.sprites.push_back(sp);
  }
  const Index hw = h.height * h.width;
  s.image = Tensor<float>({3, h.height, h.width});
  for (Index px = 0; px < hw; ++px) {
    for (Index c = 0; c < 3; ++c) s.image[c * hw + px] = channel_value(q[px * 3 + c]);
  }
  q += hw * 3;
  s.labels.assign(static_cast<std::size_t>(hw), 0);
  std::vector<int> hits(static_cast<std::size_t>(hw), 0);
  for (Index m = 0; m < h.mask_slots; ++m, q += h.plane_bytes()) {
    for (Index px = 0; px < hw; ++px) {
      if (q[px / 8] >> (px % 8) & 1u) {
        s.labels[static_cast<std::size_t>(px)] = static_cast<std::uint8_t>(m);
        ++hits[static_cast<std::size_t>(px)];
      }
    }
  }
  for (int c : hits) {
    if (c != 1) throw FormatError("dataset record " + std::to_string(index) + ": masks do not partition the image");
  }
  return s;
}

}  // namespace detail

// Single-writer sink. The header count is finalised by close().
class DatasetWriter {
 public:
  DatasetWriter(const std::filesystem::path& path, DatasetHeader header) : path_(path), header_(header) {
    if (header_.mask_slots > 255) throw ArgumentError("dataset: at most 255 mask slots");
    header_.count = 0;
    out_.open(path, std::ios::binary | std::ios::trunc);
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    write_header();
  }
  ~DatasetWriter() {
    try {
      close();
    } catch (...) {
    }
  }
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  void write(const LabeledScene& scene) {
    const auto rec = detail::encode_record(scene, header_);
    out_.write(reinterpret_cast<const char*>(rec.data()), static_cast<std::streamsize>(rec.size()));
    if (!out_) throw IoError("write failed: " + path_.string());
    ++header_.count;
  }

  void close() {
    if (!out_.is_open()) return;
    out_.seekp(0);
    write_header();
    out_.close();
    if (out_.fail()) throw IoError("closing " + path_.string() + " failed");
  }

  const DatasetHeader& header() const { return header_; }

 private:
  void write_header() {
    std::string line = header_.to_json().dump();
    if (line.size() + 1 > kHeaderBytes) throw IoError("dataset header too long");
    line.resize(kHeaderBytes - 1, ' ');
    line.push_back('\n');
    out_.write(line.data(), static_cast<std::streamsize>(line.size()));
  }

  std::filesystem::path path_;
  DatasetHeader header_;
  std::ofstream out_;
};

// Random-access and streaming reader; records are decoded on demand.
// Multiple readers may share a file; one reader is not thread-safe.
class DatasetReader {
 public:
  explicit DatasetReader(const std::filesystem::path& path) : path_(path) {
    in_.open(path, std::ios::binary);
    if (!in_) throw IoError("cannot open dataset " + path.string());
    std::string line(kHeaderBytes, '\0');
    in_.read(line.data(), static_cast<std::streamsize>(kHeaderBytes));
    if (in_.gcount() != static_cast<std::streamsize>(kHeaderBytes) || line.back() != '\n') {
      throw TruncatedError(path.string() + ": missing or short dataset header");
    }
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw FormatError(path.string() + ": header is not a dataset header");
    }
    if (!j.is_object() || j.value("format", "") != kDatasetFormat) {
      throw FormatError(path.string() + ": not a " + std::string(kDatasetFormat) + " file");
    }
    try {
      header_.version = j.at("version").get<int>();
      if (header_.version != kDatasetVersion) {
        throw VersionError(path.string() + ": dataset version " + std::to_string(header_.version) +
                           " unsupported (expected " + std::to_string(kDatasetVersion) + ")");
      }
      header_.count = j.at("count").get<std::uint64_t>();
      header_.height = j.at("height").get<Index>();
      header_.width = j.at("width").get<Index>();
      header_.mask_slots = j.at("mask_slots").get<Index>();
      header_.max_sprites = j.at("max_sprites").get<int>();
      header_.seed = j.at("seed").get<std::uint64_t>();
      if (j.at("record_bytes").get<std::size_t>() != header_.record_bytes()) {
        throw FormatError(path.string() + ": record size disagrees with header layout");
      }
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": malformed dataset header (" + e.what() + ")");
    }
    const auto expected = kHeaderBytes + header_.count * header_.record_bytes();
    const auto actual = std::filesystem::file_size(path);
    if (actual < expected) {
      throw TruncatedError(path.string() + ": " + std::to_string(actual) + " bytes, header promises " +
                           std::to_string(expected));
    }
    if (actual > expected) throw FormatError(path.string() + ": trailing bytes after last record");
    buf_.resize(header_.record_bytes());
  }

  const DatasetHeader& header() const { return header_; }
  std::uint64_t size() const { return header_.count; }

  LabeledScene read(std::uint64_t index) {
    if (index >= header_.count) throw ArgumentError("dataset index " + std::to_string(index) + " out of range");
    in_.clear();
    in_.seekg(static_cast<std::streamoff>(kHeaderBytes + index * header_.record_bytes()));
    in_.read(reinterpret_cast<char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (in_.gcount() != static_cast<std::streamsize>(buf_.size())) {
      throw TruncatedError(path_.string() + ": record " + std::to_string(index) + " is truncated");
    }
    return detail::decode_record(buf_.data(), header_, index);
  }

  // Streaming iteration: next() yields records in order, nullopt at the end.
  std::optional<LabeledScene> next() {
    if (cursor_ >= header_.count) return std::nullopt;
    return read(cursor_++);
  }
  void rewind() { cursor_ = 0; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  DatasetHeader header_;
  std::vector<std::uint8_t> buf_;
  std::uint64_t cursor_ = 0;
};

inline void write_dataset(const std::filesystem::path& path, const std::vector<LabeledScene>& scenes,
                          std::uint64_t seed, int max_sprites) {
  if (scenes.empty()) throw ArgumentError("write_dataset: no scenes");
  DatasetHeader h;
  h.height = scenes.front().height;
  h.width = scenes.front().width;
  h.mask_slots = scenes.front().mask_slots;
  h.max_sprites = max_sprites;
  h.seed = seed;
  DatasetWriter w(path, h);
  for (const auto& s : scenes) w.write(s);
  w.close();
}

inline std::vector<LabeledScene> read_dataset(const std::filesystem::path& path) {
  DatasetReader r(path);
  std::vector<LabeledScene> out;
  out.reserve(r.size());
  while (auto s = r.next()) out.push_back(std::move(*s));
  return out;
}

// Objects Room scenes come rendered externally in the same container, with
// floor, sky, two wall segments and three objects as ground-truth masks.
inline constexpr Index kObjectsRoomMasks = 7;

inline DatasetReader open_objects_room(const std::filesystem::path& path) {
  DatasetReader r(path);
  if (r.header().mask_slots != kObjectsRoomMasks) {
    throw FormatError(path.string() + ": Objects Room data needs " + std::to_string(kObjectsRoomMasks) +
                      " masks, file has " + std::to_string(r.header().mask_slots));
  }
  return r;
}

}  // namespace monet::data
