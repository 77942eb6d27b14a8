#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "monet/data/clevr.hpp"
#include "monet/data/dataset_io.hpp"
#include "monet/data/png_io.hpp"
#include "monet/data/sprites.hpp"
#include "test_support.hpp"

using namespace monet;
using namespace monet::data;
using monet::testing::TempDir;

namespace {

SpriteGenConfig gen(Index size = 32, int max_sprites = 4) {
  SpriteGenConfig cfg;
  cfg.size = size;
  cfg.max_sprites = max_sprites;
  return cfg;
}

Index area(const std::vector<std::uint8_t>& mask) {
  Index n = 0;
  for (auto v : mask) n += v;
  return n;
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const std::filesystem::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

// 24x24 heart, centre (11.5, 11.5), scale 0.75, no rotation; computed
// offline by a float64 evaluation of the implicit curve at pixel centres.
const char* const kHeartGolden[] = {
    "........................", "........................", "........................",
    "......#####..#####......", "....################....", "....################....",
    "....################....", "...##################...", "...##################...",
    "....################....", "....################....", "....################....",
    ".....##############.....", ".....##############.....", "......############......",
    ".......##########.......", "........########........", "..........####..........",
    "...........##...........", "........................", "........................",
    "........................", "........................", "........................",
};

Tensor<float> clevr_frame(const std::function<float(Index, Index, Index)>& f) {
  Tensor<float> img({3, kClevrHeight, kClevrWidth});
  for (Index k = 0; k < 3; ++k)
    for (Index r = 0; r < kClevrHeight; ++r)
      for (Index c = 0; c < kClevrWidth; ++c) img[(k * kClevrHeight + r) * kClevrWidth + c] = f(k, r, c);
  return img;
}

}  // namespace

TEST(Sprites, GenerationIsPureInSeedAndIndex) {
  EXPECT_EQ(generate_scene(7, 0, gen()), generate_scene(7, 0, gen()));
  const auto batch = generate_multidsprites(7, 0, 12, gen());
  const auto tail = generate_multidsprites(7, 5, 7, gen());
  for (std::size_t i = 0; i < tail.size(); ++i) EXPECT_EQ(tail[i], batch[5 + i]);
  for (int i = 11; i >= 0; --i) EXPECT_EQ(generate_scene(7, i, gen()), batch[static_cast<std::size_t>(i)]);
  EXPECT_NE(generate_scene(8, 0, gen()).image, batch[0].image);
}

TEST(Sprites, MasksPartitionEveryScene) {
  for (const auto& s : generate_multidsprites(1, 0, 200, gen(32))) {
    ASSERT_EQ(s.mask_slots, 5);
    const auto m = s.masks<float>();
    const Index hw = 32 * 32;
    for (Index p = 0; p < hw; ++p) {
      float total = 0;
      for (Index k = 0; k < 5; ++k) total += m[k * hw + p];
      ASSERT_EQ(total, 1.0f);
    }
    const Index sprites = static_cast<Index>(s.sprites.size());
    EXPECT_GE(sprites, 1);
    EXPECT_LE(sprites, 4);
    for (auto l : s.labels) EXPECT_LE(l, sprites);
  }
}

TEST(Sprites, LaterSpritesOcclude) {
  int overlaps = 0;
  for (const auto& s : generate_multidsprites(2, 0, 100, gen(32))) {
    const Index hw = 32 * 32;
    std::vector<int> last(hw, -1), covers(hw, 0);
    for (std::size_t i = 0; i < s.sprites.size(); ++i) {
      const auto& sp = s.sprites[i];
      const auto mask = rasterize_sprite(sp.shape, sp.x, sp.y, sp.scale, sp.orientation, 32);
      for (Index p = 0; p < hw; ++p)
        if (mask[p]) last[p] = static_cast<int>(i), ++covers[p];
    }
    for (Index p = 0; p < hw; ++p) {
      if (covers[p] > 1) ++overlaps;
      const Rgb8 col = last[p] < 0 ? s.background : s.sprites[static_cast<std::size_t>(last[p])].color;
      ASSERT_EQ(s.labels[p], last[p] + 1);
      for (Index k = 0; k < 3; ++k) ASSERT_EQ(s.image[k * hw + p], col[k] / 255.0f);
    }
  }
  EXPECT_GT(overlaps, 100);
}

TEST(Sprites, SpriteCountIsUniform) {
  const int n = 10000;
  std::array<int, 4> hist{};
  for (int i = 0; i < n; ++i) ++hist[generate_scene(3, i, gen(16)).sprites.size() - 1];
  const double expected = n / 4.0, sd = std::sqrt(n * 0.25 * 0.75);
  for (int c : hist) EXPECT_NEAR(c, expected, 3 * sd);
}

TEST(Sprites, SamplingGridsFollowFactorLayout) {
  std::set<float> scales, orientations;
  for (const auto& s : generate_multidsprites(4, 0, 500, gen(64))) {
    for (const auto& sp : s.sprites) {
      scales.insert(sp.scale);
      orientations.insert(sp.orientation);
      EXPECT_GE(sp.x, 0.0f);
      EXPECT_LE(sp.x, 63.0f);
      EXPECT_GE(sp.y, 0.0f);
      EXPECT_LE(sp.y, 63.0f);
    }
  }
  ASSERT_EQ(scales.size(), 6u);
  EXPECT_FLOAT_EQ(*scales.begin(), 0.45f * 0.5f);
  EXPECT_FLOAT_EQ(*scales.rbegin(), 0.45f);
  EXPECT_EQ(orientations.size(), 40u);
  EXPECT_GE(*orientations.begin(), 0.0f);
  EXPECT_LT(*orientations.rbegin(), 2 * std::numbers::pi_v<float>);
}

TEST(Rasterize, SquareAreaMatchesSide) {
  for (double s : {0.225, 0.315, 0.45, 0.8}) {
    const Index size = 64;
    const auto mask = rasterize_sprite(SpriteShape::kSquare, 31.3, 30.6, s, 0.0, size);
    const double side = s * size;
    EXPECT_NEAR(static_cast<double>(area(mask)), side * side, 2 * 4 * side) << "scale " << s;
  }
}

TEST(Rasterize, EllipseHasPointSymmetry) {
  for (double theta : {0.0, 0.3, 1.1, 2.5}) {
    const auto a = rasterize_sprite(SpriteShape::kEllipse, 30.0, 33.0, 0.37, theta, 64);
    const auto b = rasterize_sprite(SpriteShape::kEllipse, 30.0, 33.0, 0.37, theta + std::numbers::pi, 64);
    EXPECT_EQ(a, b) << "theta " << theta;
    EXPECT_GT(area(a), 100);
  }
}

TEST(Rasterize, HeartMatchesGoldenBitmap) {
  const auto mask = rasterize_sprite(SpriteShape::kHeart, 11.5, 11.5, 0.75, 0.0, 24);
  for (Index r = 0; r < 24; ++r) {
    std::string row;
    for (Index c = 0; c < 24; ++c) row += mask[r * 24 + c] ? '#' : '.';
    EXPECT_EQ(row, kHeartGolden[r]) << "row " << r;
  }
}

TEST(Rasterize, Errors) {
  EXPECT_THROW(rasterize_sprite(SpriteShape::kSquare, 5, 5, 0.0, 0, 16), ArgumentError);
  EXPECT_THROW(rasterize_sprite(SpriteShape::kSquare, 5, 5, -0.2, 0, 16), ArgumentError);
  EXPECT_THROW(generate_scene(0, 0, gen(15)), ArgumentError);
  EXPECT_NO_THROW(generate_scene(0, 0, gen(16)));
}

TEST(DatasetFile, RoundTripsBitExactly) {
  TempDir dir("data");
  const auto scenes = generate_multidsprites(11, 0, 100, gen(32));
  write_dataset(dir / "d.bin", scenes, 11, 4);
  EXPECT_EQ(read_dataset(dir / "d.bin"), scenes);

  DatasetReader r(dir / "d.bin");
  EXPECT_EQ(r.size(), 100u);
  EXPECT_EQ(r.header().seed, 11u);
  EXPECT_EQ(r.header().height, 32);
  EXPECT_EQ(r.header().mask_slots, 5);
  int n = 0;
  while (r.next()) ++n;
  EXPECT_EQ(n, 100);
  EXPECT_EQ(r.read(42), scenes[42]);
  EXPECT_THROW(r.read(100), ArgumentError);
}

TEST(DatasetFile, TruncationIsDetected) {
  TempDir dir("data");
  write_dataset(dir / "d.bin", generate_multidsprites(1, 0, 10, gen(16)), 1, 4);
  auto bytes = read_bytes(dir / "d.bin");
  for (std::size_t cut : {bytes.size() - 1, bytes.size() / 2, std::size_t{300}, std::size_t{100}}) {
    write_bytes(dir / "t.bin", {bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)});
    EXPECT_THROW(DatasetReader{dir / "t.bin"}, TruncatedError) << "cut at " << cut;
  }
}

TEST(DatasetFile, CorruptionFailsChecksum) {
  TempDir dir("data");
  write_dataset(dir / "d.bin", generate_multidsprites(1, 0, 10, gen(16)), 1, 4);
  auto bytes = read_bytes(dir / "d.bin");
  const std::size_t record = (bytes.size() - kHeaderBytes) / 10;
  bytes[kHeaderBytes + 3 * record + 150] ^= 0x10;
  write_bytes(dir / "c.bin", bytes);
  DatasetReader r(dir / "c.bin");
  EXPECT_NO_THROW(r.read(2));
  try {
    r.read(3);
    FAIL() << "expected ChecksumError";
  } catch (const ChecksumError& e) {
    EXPECT_NE(std::string(e.what()).find("record 3"), std::string::npos);
  }
}

TEST(DatasetFile, VersionMismatchIsItsOwnError) {
  TempDir dir("data");
  write_dataset(dir / "d.bin", generate_multidsprites(1, 0, 3, gen(16)), 1, 4);
  auto bytes = read_bytes(dir / "d.bin");
  std::string header(bytes.begin(), bytes.begin() + kHeaderBytes);
  const auto pos = header.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos) << header;
  bytes[pos + 10] = '9';
  write_bytes(dir / "v.bin", bytes);
  EXPECT_THROW(DatasetReader{dir / "v.bin"}, VersionError);

  bytes = read_bytes(dir / "d.bin");
  bytes[2] = 'X';
  write_bytes(dir / "m.bin", bytes);
  try {
    DatasetReader r(dir / "m.bin");
    FAIL() << "expected FormatError";
  } catch (const VersionError&) {
    FAIL() << "bad magic reported as a version error";
  } catch (const FormatError&) {
  }
  EXPECT_THROW(DatasetReader{dir / "missing.bin"}, IoError);
}

TEST(Png, RoundTripsEightBitImages) {
  TempDir dir("png");
  std::mt19937_64 rng(5);
  Tensor<float> img({3, 7, 5});
  for (auto& v : img.vec()) v = static_cast<float>(rng() % 256) / 255.0f;
  write_png(dir / "a.png", img);
  EXPECT_EQ(read_png(dir / "a.png"), img);
  EXPECT_THROW(read_png(dir / "missing.png"), IoError);
  write_bytes(dir / "bad.png", {1, 2, 3, 4, 5, 6, 7, 8, 9});
  EXPECT_THROW(read_png(dir / "bad.png"), FormatError);
  EXPECT_EQ(to_byte(-0.3f), 0);
  EXPECT_EQ(to_byte(1.7f), 255);
  EXPECT_EQ(to_byte(0.5f), 128);
}

TEST(Clevr, ConstantInputStaysConstant) {
  const auto out = preprocess_clevr(clevr_frame([](Index k, Index, Index) { return 0.2f + 0.3f * k; }));
  ASSERT_EQ(out.shape(), (Shape{3, 128, 128}));
  for (Index k = 0; k < 3; ++k)
    for (Index p = 0; p < 128 * 128; ++p) ASSERT_NEAR(out[k * 128 * 128 + p], 0.2f + 0.3f * k, 1e-6);
}

TEST(Clevr, HorizontalGradientMatchesLinearReference) {
  const auto out = preprocess_clevr(clevr_frame([](Index, Index, Index c) { return static_cast<float>(c) / 319.0f; }));
  // Bilinear interpolation reproduces a linear ramp exactly, so the reference
  // is the ramp evaluated at each output pixel's source column.
  for (Index c = 0; c < 128; ++c) {
    const double src = std::clamp((c + 0.5) * 1.5 - 0.5, 0.0, 191.0) + 64.0;
    for (Index r = 0; r < 128; r += 17) ASSERT_NEAR(out[r * 128 + c], src / 319.0, 1e-5) << "col " << c;
  }
}

TEST(Clevr, CornerComesFromCropOrigin) {
  const auto base = preprocess_clevr(clevr_frame([](Index, Index, Index) { return 0.5f; }));
  for (auto [r, c] : {std::pair<Index, Index>{29, 64}, {30, 65}, {29, 65}}) {
    const auto out = preprocess_clevr(clevr_frame([=](Index, Index rr, Index cc) {
      return rr == r && cc == c ? 1.0f : 0.5f;
    }));
    EXPECT_NE(out[0], base[0]) << r << "," << c;
  }
  for (auto [r, c] : {std::pair<Index, Index>{28, 64}, {29, 63}, {31, 64}, {29, 66}, {0, 0}}) {
    const auto out = preprocess_clevr(clevr_frame([=](Index, Index rr, Index cc) {
      return rr == r && cc == c ? 1.0f : 0.5f;
    }));
    EXPECT_EQ(out[0], base[0]) << r << "," << c;
  }
}

TEST(Clevr, OutputStaysInUnitRange) {
  std::mt19937_64 rng(3);
  const auto out = preprocess_clevr(clevr_frame([&](Index, Index, Index) {
    return static_cast<float>(rng() % 256) / 255.0f;
  }));
  for (float v : out.vec()) {
    ASSERT_GE(v, 0.0f);
    ASSERT_LE(v, 1.0f);
  }
}

TEST(Clevr, WrongSizeNamesExpectedDims) {
  try {
    preprocess_clevr(Tensor<float>({3, 200, 300}));
    FAIL() << "expected ArgumentError";
  } catch (const ArgumentError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("320x240"), std::string::npos) << msg;
    EXPECT_NE(msg.find("300x200"), std::string::npos) << msg;
  }
}
