#pragma once

// Procedural Multi-dSprites: 1..max_sprites coloured sprites (square,
// ellipse, heart) composited with occlusion onto a uniform random background.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "monet/data/scene.hpp"
#include "monet/errors.hpp"

namespace monet::data {

inline constexpr Index kMinSceneSize = 16;
inline constexpr int kScaleSteps = 6;
inline constexpr int kOrientationSteps = 40;
inline constexpr double kBaseScale = 0.45;
inline constexpr double kEllipseMinorAxis = 0.5;
// Canonical heart coordinates are stretched by this factor so the curve
// (x^2 + y^2 - 1)^3 - x^2 y^3 = 0 fits inside the unit box.
inline constexpr double kHeartStretch = 1.2;

inline const char* shape_name(SpriteShape s) {
  switch (s) {
    case SpriteShape::kSquare: return "square";
    case SpriteShape::kEllipse: return "ellipse";
    case SpriteShape::kHeart: return "heart";
  }
  return "unknown";
}

// Inside test in canonical coordinates (u right, v up, sprite spans [-1, 1]).
inline bool shape_contains(SpriteShape shape, double u, double v) {
  switch (shape) {
    case SpriteShape::kSquare:
      return std::max(std::abs(u), std::abs(v)) <= 1.0;
    case SpriteShape::kEllipse:
      return u * u + (v / kEllipseMinorAxis) * (v / kEllipseMinorAxis) <= 1.0;
    case SpriteShape::kHeart: {
      const double x = u * kHeartStretch, y = v * kHeartStretch;
      const double r = x * x + y * y - 1.0;
      return r * r * r - x * x * y * y * y <= 0.0;
    }
  }
  return false;
}

// Binary mask [size*size] sampled at pixel centres after translating to
// (x, y), rotating by `orientation` and scaling the unit box to scale*size.
inline std::vector<std::uint8_t> rasterize_sprite(SpriteShape shape, double x, double y, double scale,
                                                  double orientation, Index size) {
  if (!(scale > 0)) throw ArgumentError("rasterize_sprite: scale must be > 0");
  if (size < 1) throw ArgumentError("rasterize_sprite: size must be >= 1");
  std::vector<std::uint8_t> mask(static_cast<std::size_t>(size * size), 0);
  const double half = 0.5 * scale * static_cast<double>(size);
  const double c = std::cos(orientation), s = std::sin(orientation);
  for (Index r = 0; r < size; ++r) {
    for (Index col = 0; col < size; ++col) {
      const double dx = static_cast<double>(col) - x, dy = static_cast<double>(r) - y;
      // Rotate into the sprite frame; image rows grow downwards so flip v.
      const double u = (c * dx + s * dy) / half;
      const double v = -(-s * dx + c * dy) / half;
      if (shape_contains(shape, u, v)) mask[static_cast<std::size_t>(r * size + col)] = 1;
    }
  }
  return mask;
}

struct SpriteGenConfig {
  Index size = 64;
  int max_sprites = 4;
  // Minimum max-channel distance (in 1/255 units) between a sprite colour
  // and the background; 0 disables the constraint.
  int min_color_delta = 0;
};

namespace detail {

// Portable draws from mt19937_64 (std distributions are implementation-defined).
inline double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
inline int uniform_int(std::mt19937_64& rng, int n) {
  return std::min(n - 1, static_cast<int>(uniform01(rng) * n));
}
inline Rgb8 random_color(std::mt19937_64& rng) {
  return {static_cast<std::uint8_t>(uniform_int(rng, 256)), static_cast<std::uint8_t>(uniform_int(rng, 256)),
          static_cast<std::uint8_t>(uniform_int(rng, 256))};
}
inline int color_delta(const Rgb8& a, const Rgb8& b) {
  int d = 0;
  for (int i = 0; i < 3; ++i) d = std::max(d, std::abs(int(a[i]) - int(b[i])));
  return d;
}

}  // namespace detail

inline std::mt19937_64 scene_rng(std::uint64_t seed, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return std::mt19937_64(seq);
}

// Paints sprites over the background in order and fills image and labels.
inline void composite_scene(LabeledScene& scene) {
  const Index size = scene.height, hw = size * size;
  scene.image = Tensor<float>({3, size, size});
  scene.labels.assign(static_cast<std::size_t>(hw), 0);
  std::vector<Rgb8> colors{scene.background};
  for (std::size_t i = 0; i < scene.sprites.size(); ++i) {
    const SpriteInfo& sp = scene.sprites[i];
    colors.push_back(sp.color);
    const auto mask = rasterize_sprite(sp.shape, sp.x, sp.y, sp.scale, sp.orientation, size);
    for (Index p = 0; p < hw; ++p) {
      if (mask[static_cast<std::size_t>(p)]) scene.labels[static_cast<std::size_t>(p)] = static_cast<std::uint8_t>(i + 1);
    }
  }
  for (Index p = 0; p < hw; ++p) {
    const Rgb8& col = colors[scene.labels[static_cast<std::size_t>(p)]];
    for (Index ch = 0; ch < 3; ++ch) scene.image[ch * hw + p] = channel_value(col[static_cast<std::size_t>(ch)]);
  }
}

// Scene `index` of the corpus identified by `seed`; a pure function of
// (seed, index, config).
inline LabeledScene generate_scene(std::uint64_t seed, std::uint64_t index, const SpriteGenConfig& cfg) {
  if (cfg.size < kMinSceneSize) {
    throw ArgumentError("scene size " + std::to_string(cfg.size) + " is below the sprite minimum of " +
                        std::to_string(kMinSceneSize));
  }
  if (cfg.max_sprites < 1 || cfg.max_sprites > 254) throw ArgumentError("max_sprites must be in [1, 254]");
  std::mt19937_64 rng = scene_rng(seed, index);
  LabeledScene scene;
  scene.height = scene.width = cfg.size;
  scene.mask_slots = cfg.max_sprites + 1;
  scene.background = detail::random_color(rng);
  const int count = 1 + detail::uniform_int(rng, cfg.max_sprites);
  const double extent = static_cast<double>(cfg.size - 1);
  for (int i = 0; i < count; ++i) {
    SpriteInfo sp;
    sp.shape = static_cast<SpriteShape>(detail::uniform_int(rng, kSpriteShapeCount));
    const int scale_step = detail::uniform_int(rng, kScaleSteps);
    sp.scale = static_cast<float>(kBaseScale * (0.5 + 0.5 * scale_step / (kScaleSteps - 1)));
    sp.orientation = static_cast<float>(2.0 * std::numbers::pi * detail::uniform_int(rng, kOrientationSteps) /
                                        kOrientationSteps);
    sp.x = static_cast<float>(detail::uniform01(rng) * extent);
    sp.y = static_cast<float>(detail::uniform01(rng) * extent);
    do {
      sp.color = detail::random_color(rng);
    } while (cfg.min_color_delta > 0 && detail::color_delta(sp.color, scene.background) < cfg.min_color_delta);
    scene.sprites.push_back(sp);
  }
  composite_scene(scene);
  return scene;
}

// Scenes [first, first + count) of a corpus.
inline std::vector<LabeledScene> generate_multidsprites(std::uint64_t seed, std::uint64_t first, std::uint64_t count,
                                                        const SpriteGenConfig& cfg) {
  std::vector<LabeledScene> out;
  out.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(generate_scene(seed, first + i, cfg));
  return out;
}

}  // namespace monet::data
