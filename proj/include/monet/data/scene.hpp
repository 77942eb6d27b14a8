#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "monet/tensor.hpp"

namespace monet::data {

enum class SpriteShape : std::uint8_t { kSquare = 0, kEllipse = 1, kHeart = 2 };
inline constexpr int kSpriteShapeCount = 3;

using Rgb8 = std::array<std::uint8_t, 3>;

inline float channel_value(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

// Placement of one sprite. Position is the sprite centre in pixel
// coordinates (pixel (r, c) has its centre at (x=c, y=r)); scale is the
// sprite's extent as a fraction of the image side.
struct SpriteInfo {
  SpriteShape shape = SpriteShape::kSquare;
  float x = 0;
  float y = 0;
  float scale = 0;
  float orientation = 0;
  Rgb8 color{};

  friend bool operator==(const SpriteInfo&, const SpriteInfo&) = default;
};

// An image with its ground-truth partition. `labels[r*W + c]` is the index of
// the mask covering that pixel: 0 is the background, i+1 the i-th sprite.
// Masks beyond the entities present are empty.
struct LabeledScene {
  Index height = 0;
  Index width = 0;
  Index mask_slots = 0;
  Tensor<float> image;  // [3, H, W], values in [0, 1]
  std::vector<std::uint8_t> labels;
  Rgb8 background{};
  std::vector<SpriteInfo> sprites;  // compositing order (later occludes earlier)

  // gt_masks as a [mask_slots, H, W] 0/1 tensor.
  template <typename T = float>
  Tensor<T> masks() const {
    Tensor<T> out({mask_slots, height, width});
    const Index hw = height * width;
    for (Index p = 0; p < hw; ++p) out[static_cast<Index>(labels[static_cast<std::size_t>(p)]) * hw + p] = T{1};
    return out;
  }

  // log gt_masks, with -inf where the mask is zero: [1, mask_slots, H, W].
  template <typename T>
  Tensor<T> log_masks() const {
    Tensor<T> m = masks<T>();
    for (auto& v : m.vec()) v = v > T{0} ? T{0} : -std::numeric_limits<T>::infinity();
    return m.reshaped({1, mask_slots, height, width});
  }

  friend bool operator==(const LabeledScene&, const LabeledScene&) = default;
};

}  // namespace monet::data
