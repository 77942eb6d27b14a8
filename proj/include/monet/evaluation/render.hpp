#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "monet/data/png_io.hpp"
#include "monet/evaluation/segmentation.hpp"

namespace monet {

// Slot colours for segmentation maps; slot i always gets entry i mod size,
// independent of scene colours.
inline constexpr std::array<std::array<std::uint8_t, 3>, 12> kSlotPalette = {{{230, 25, 75},
                                                                              {60, 180, 75},
                                                                              {255, 225, 25},
                                                                              {0, 130, 200},
                                                                              {245, 130, 48},
                                                                              {145, 30, 180},
                                                                              {70, 240, 240},
                                                                              {240, 50, 230},
                                                                              {210, 245, 60},
                                                                              {250, 190, 212},
                                                                              {0, 128, 128},
                                                                              {170, 110, 40}}};

inline std::array<float, 3> slot_color(Index slot) {
  const auto& c = kSlotPalette[static_cast<std::size_t>(slot) % kSlotPalette.size()];
  return {c[0] / 255.0f, c[1] / 255.0f, c[2] / 255.0f};
}

// [3, H, W] colour-coded label map.
inline Tensor<float> segmentation_image(const std::vector<int>& labels, Index height, Index width) {
  Tensor<float> out({3, height, width});
  const Index hw = height * width;
  for (Index p = 0; p < hw; ++p) {
    const auto c = slot_color(labels[static_cast<std::size_t>(p)]);
    for (Index ch = 0; ch < 3; ++ch) out[ch * hw + p] = c[static_cast<std::size_t>(ch)];
  }
  return out;
}

// sum_k m_k * xhat_k with attention masks m, clamped to [0, 1]: [3, H, W].
template <typename T>
Tensor<float> reconstruction_mixture(const DecodeOutputs<T>& d) {
  const Index k = d.log_masks.dim(1), h = d.log_masks.dim(2), w = d.log_masks.dim(3), hw = h * w;
  const Index dc = d.decoded.dim(1);
  Tensor<float> out({3, h, w});
  for (Index ch = 0; ch < 3; ++ch) {
    for (Index p = 0; p < hw; ++p) {
      double v = 0;
      for (Index s = 0; s < k; ++s) {
        v += std::exp(static_cast<double>(d.log_masks[s * hw + p])) * static_cast<double>(d.decoded[(s * dc + ch) * hw + p]);
      }
      out[ch * hw + p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
  }
  return out;
}

// Panel grid [3, (2 + 2K) H, N W]; column n is image n. Rows: reconstruction
// mixture, segmentation, K unmasked component means, K component means
// weighted by the decoder's masks.
template <typename T>
Tensor<float> compose_panels(const std::vector<DecodeOutputs<T>>& items) {
  if (items.empty()) throw ArgumentError("compose_panels: no images");
  const Index k = items[0].log_masks.dim(1), h = items[0].log_masks.dim(2), w = items[0].log_masks.dim(3);
  const Index n = static_cast<Index>(items.size()), rows = 2 + 2 * k, hw = h * w;
  const Index gh = rows * h, gw = n * w;
  Tensor<float> grid({3, gh, gw});
  auto blit = [&](const Tensor<float>& tile, Index row, Index col) {
    for (Index ch = 0; ch < 3; ++ch) {
      for (Index r = 0; r < h; ++r) {
        for (Index c = 0; c < w; ++c) grid[(ch * gh + row * h + r) * gw + col * w + c] = tile[(ch * h + r) * w + c];
      }
    }
  };
  for (Index i = 0; i < n; ++i) {
    const DecodeOutputs<T>& d = items[static_cast<std::size_t>(i)];
    if (d.log_masks.dim(1) != k || d.log_masks.dim(2) != h || d.log_masks.dim(3) != w) {
      throw ShapeError("compose_panels: images disagree in K or size");
    }
    const Index dc = d.decoded.dim(1);
    blit(reconstruction_mixture(d), 0, i);
    blit(segmentation_image(segment_from_masks(d.log_masks).hard_labels, h, w), 1, i);
    for (Index s = 0; s < k; ++s) {
      Tensor<float> plain({3, h, w}), masked({3, h, w});
      for (Index ch = 0; ch < 3; ++ch) {
        for (Index p = 0; p < hw; ++p) {
          const double x = std::clamp(static_cast<double>(d.decoded[(s * dc + ch) * hw + p]), 0.0, 1.0);
          plain[ch * hw + p] = static_cast<float>(x);
          masked[ch * hw + p] = static_cast<float>(x * std::exp(static_cast<double>(d.log_mtilde[s * hw + p])));
        }
      }
      blit(plain, 2 + s, i);
      blit(masked, 2 + k + s, i);
    }
  }
  return grid;
}

template <typename T>
void render_panels(const std::vector<DecodeOutputs<T>>& items, const std::filesystem::path& path) {
  data::write_png(path, compose_panels(items));
}

struct CurveSeries {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};

// Line plot of several series on a white canvas, series i in palette colour i.
// Axes span the data range; no text is drawn.
inline Tensor<float> plot_curves(const std::vector<CurveSeries>& series, Index width = 640, Index height = 360) {
  Tensor<float> img({3, height, width}, 1.0f);
  const Index margin = 20;
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i])) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, s.y[i]);
      y1 = std::max(y1, s.y[i]);
    }
  }
  if (!(x1 > x0)) x1 = x0 + 1;
  if (!(y1 > y0)) y1 = y0 + 1;
  const Index pw = width - 2 * margin, ph = height - 2 * margin;
  auto put = [&](Index c, Index r, const std::array<float, 3>& col) {
    if (r < 0 || r >= height || c < 0 || c >= width) return;
    for (Index ch = 0; ch < 3; ++ch) img[(ch * height + r) * width + c] = col[static_cast<std::size_t>(ch)];
  };
  for (Index c = margin; c <= margin + pw; ++c) put(c, margin + ph, {0, 0, 0});
  for (Index r = margin; r <= margin + ph; ++r) put(margin, r, {0, 0, 0});
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto col = slot_color(static_cast<Index>(si));
    const auto& s = series[si];
    auto px = [&](std::size_t i) { return margin + static_cast<Index>(std::lround((s.x[i] - x0) / (x1 - x0) * pw)); };
    auto py = [&](std::size_t i) {
      return margin + ph - static_cast<Index>(std::lround((s.y[i] - y0) / (y1 - y0) * ph));
    };
    for (std::size_t i = 1; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i - 1]) || !std::isfinite(s.y[i])) continue;
      Index ax = px(i - 1), ay = py(i - 1);
      const Index bx = px(i), by = py(i);
      const Index dx = std::abs(bx - ax), dy = -std::abs(by - ay), sx = ax < bx ? 1 : -1, sy = ay < by ? 1 : -1;
      Index err = dx + dy;
      while (true) {
        put(ax, ay, col);
        if (ax == bx && ay == by) break;
        const Index e2 = 2 * err;
        if (e2 >= dy) {
          err += dy;
          ax += sx;
        }
        if (e2 <= dx) {
          err += dx;
          ay += sy;
        }
      }
    }
  }
  return img;
}

}  // namespace monet
