#pragma once

#include <algorithm>
#include <cmath>
#include <string>

#include "monet/errors.hpp"
#include "monet/tensor.hpp"

namespace monet::data {

inline constexpr Index kClevrWidth = 320;
inline constexpr Index kClevrHeight = 240;
inline constexpr Index kClevrCropTop = 29, kClevrCropBottom = 221;
inline constexpr Index kClevrCropLeft = 64, kClevrCropRight = 256;
inline constexpr Index kClevrOutput = 128;

// Bilinear resize with pixel-centre alignment (align_corners = false):
// output pixel i samples source coordinate (i + 0.5) * in/out - 0.5,
// clamped to the valid range. image: [C, H, W].
inline Tensor<float> resize_bilinear(const Tensor<float>& image, Index out_h, Index out_w) {
  const Index ch = image.dim(0), in_h = image.dim(1), in_w = image.dim(2);
  Tensor<float> out({ch, out_h, out_w});
  const double sy = static_cast<double>(in_h) / out_h, sx = static_cast<double>(in_w) / out_w;
  for (Index r = 0; r < out_h; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(in_h - 1));
    const Index y0 = static_cast<Index>(std::floor(fy)), y1 = std::min(y0 + 1, in_h - 1);
    const double wy = fy - y0;
    for (Index c = 0; c < out_w; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(in_w - 1));
      const Index x0 = static_cast<Index>(std::floor(fx)), x1 = std::min(x0 + 1, in_w - 1);
      const double wx = fx - x0;
      for (Index k = 0; k < ch; ++k) {
        auto at = [&](Index y, Index x) { return static_cast<double>(image[(k * in_h + y) * in_w + x]); };
        const double top = at(y0, x0) * (1 - wx) + at(y0, x1) * wx;
        const double bot = at(y1, x0) * (1 - wx) + at(y1, x1) * wx;
        out[(k * out_h + r) * out_w + c] = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

// 320x240 CLEVR frame -> rows [29, 221) x cols [64, 256) -> 128x128.
inline Tensor<float> preprocess_clevr(const Tensor<float>& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) != kClevrHeight || image.dim(2) != kClevrWidth) {
    const std::string got = image.rank() == 3 ? std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(1))
                                              : shape_str(image.shape());
    throw ArgumentError("preprocess_clevr: expected a 320x240 RGB image, got " + got);
  }
  const Index ch = kClevrCropBottom - kClevrCropTop, cw = kClevrCropRight - kClevrCropLeft;
  Tensor<float> crop({3, ch, cw});
  for (Index k = 0; k < 3; ++k) {
    for (Index r = 0; r < ch; ++r) {
      for (Index c = 0; c < cw; ++c) {
        crop[(k * ch + r) * cw + c] = image[(k * kClevrHeight + r + kClevrCropTop) * kClevrWidth + c + kClevrCropLeft];
      }
    }
  }
  Tensor<float> out = resize_bilinear(crop, kClevrOutput, kClevrOutput);
  for (auto& v : out.vec()) v = std::clamp(v, 0.0f, 1.0f);
  return out;
}

}  // namespace monet::data
