#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "monet/data/source.hpp"
#include "monet/evaluation/ari.hpp"
#include "monet/model.hpp"
#include "monet/parallel.hpp"

namespace monet {

struct SegmentationResult {
  Index height = 0;
  Index width = 0;
  std::vector<int> hard_labels;  // argmax slot per pixel, row-major
  std::optional<double> ari;     // present when ground truth was given
  std::optional<double> fg_ari;
  std::vector<double> per_slot_mass;  // mean soft mask per slot
};

// Segmentation from log masks [1, K, H, W] (or [K, H, W]). Ties go to the
// lower slot index. `truth` holds ground-truth labels with 0 = background.
template <typename T>
SegmentationResult segment_from_masks(const Tensor<T>& log_masks, const std::vector<std::uint8_t>* truth = nullptr) {
  const std::size_t r = log_masks.rank();
  if (!(r == 4 && log_masks.dim(0) == 1) && r != 3) {
    throw ShapeError("segment: expected log masks [1,K,H,W] or [K,H,W], got " + shape_str(log_masks.shape()));
  }
  const Index k = log_masks.dim(r - 3), h = log_masks.dim(r - 2), w = log_masks.dim(r - 1), hw = h * w;
  SegmentationResult out;
  out.height = h;
  out.width = w;
  out.hard_labels.assign(static_cast<std::size_t>(hw), 0);
  out.per_slot_mass.assign(static_cast<std::size_t>(k), 0.0);
  for (Index p = 0; p < hw; ++p) {
    int best = 0;
    for (Index s = 0; s < k; ++s) {
      const T v = log_masks[s * hw + p];
      if (v > log_masks[best * hw + p]) best = static_cast<int>(s);
      out.per_slot_mass[static_cast<std::size_t>(s)] += std::exp(static_cast<double>(v));
    }
    out.hard_labels[static_cast<std::size_t>(p)] = best;
  }
  for (auto& m : out.per_slot_mass) m /= static_cast<double>(hw);
  if (truth) {
    if (static_cast<Index>(truth->size()) != hw) throw ShapeError("segment: ground truth size mismatch");
    const std::vector<int> gt(truth->begin(), truth->end());
    out.ari = adjusted_rand_index(out.hard_labels, gt);
    out.fg_ari = foreground_ari(out.hard_labels, gt);
  }
  return out;
}

// Attention-mask segmentation of one image [3, H, W] or [1, 3, H, W] with
// `slots` attention steps; the parameters are only read.
template <typename T>
SegmentationResult segment(const Tensor<T>& image, const ParamSet<T>& params, const ModelConfig& cfg, Index slots,
                           const std::vector<std::uint8_t>* truth = nullptr) {
  const Tensor<T> x = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  return segment_from_masks(decompose_masks(params, cfg.attention, x, slots), truth);
}

// Largest |logsumexp_k log m_k| over pixels of [N, K, H, W] log masks.
template <typename T>
double mask_normalization_error(const Tensor<T>& log_masks) {
  const Index n = log_masks.dim(0), k = log_masks.dim(1), hw = log_masks.dim(2) * log_masks.dim(3);
  double worst = 0;
  for (Index i = 0; i < n; ++i) {
    for (Index p = 0; p < hw; ++p) {
      const double lse = static_cast<double>(logsumexp_strided(log_masks.data() + i * k * hw + p, k, hw));
      worst = std::max(worst, std::isfinite(lse) ? std::abs(lse) : INFINITY);
    }
  }
  return worst;
}

// Everything the model produces for one image; inputs to rendering.
template <typename T>
struct DecodeOutputs {
  Tensor<T> image;       // [1, 3, H, W]
  Tensor<T> log_masks;   // [1, K, H, W]
  Tensor<T> decoded;     // [K, 4, H, W]: RGB means and mask logit
  Tensor<T> log_mtilde;  // [1, K, H, W]
  LossBreakdown loss;
};

// Deterministic pass decoding the posterior means.
template <typename T>
DecodeOutputs<T> run_model(const ParamSet<T>& params, const ModelConfig& cfg, const Tensor<T>& image, Index slots,
                           const LossConfig& loss_cfg) {
  const Tensor<T> x = image.rank() == 3 ? image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)}) : image;
  Tape<T> tape;
  BoundParams<T> p(tape, params, false);
  const ForwardPass<T> fp = forward(tape, p, cfg, x, slots, loss_cfg, Tensor<T>{});
  return {x, fp.log_masks.value(), fp.decoded.value(), fp.log_mtilde.value(), fp.loss.breakdown(loss_cfg)};
}

struct SceneEvaluation {
  std::uint64_t index = 0;
  SegmentationResult segmentation;
  double nll = 0;
  double normalization_error = 0;
};

struct EvaluationSummary {
  std::vector<SceneEvaluation> scenes;
  double mean_ari = 0, median_ari = 0;
  double mean_fg_ari = 0, median_fg_ari = 0;
  double mean_nll = 0;
  double max_normalization_error = 0;
};

inline double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

inline double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0 : s / static_cast<double>(v.size());
}

// Scores scenes [first, first + count) of `source` with `slots` attention steps.
// Scenes are scored in parallel when threads > 1; results do not depend on it.
inline EvaluationSummary evaluate_scenes(const ParamSet<float>& params, const ModelConfig& cfg,
                                         data::SceneSource& source, std::uint64_t first, std::uint64_t count,
                                         Index slots, const LossConfig& loss_cfg, int threads = 1) {
  if (first + count > source.size()) {
    throw ArgumentError("evaluation range [" + std::to_string(first) + ", " + std::to_string(first + count) +
                        ") exceeds dataset size " + std::to_string(source.size()));
  }
  std::vector<data::LabeledScene> scenes;
  scenes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) scenes.push_back(source.get(first + i));
  EvaluationSummary out;
  out.scenes.resize(count);
  auto work = [&](std::size_t i) {
    const DecodeOutputs<float> d = run_model(params, cfg, scenes[i].image, slots, loss_cfg);
    SceneEvaluation& e = out.scenes[i];
    e.index = first + i;
    e.segmentation = segment_from_masks(d.log_masks, &scenes[i].labels);
    e.nll = d.loss.nll;
    e.normalization_error = mask_normalization_error(d.log_masks);
  };
  parallel_for(static_cast<Index>(count), threads, [&](Index i) { work(static_cast<std::size_t>(i)); });
  std::vector<double> aris, fg, nlls;
  for (const auto& e : out.scenes) {
    aris.push_back(*e.segmentation.ari);
    fg.push_back(*e.segmentation.fg_ari);
    nlls.push_back(e.nll);
    out.max_normalization_error = std::max(out.max_normalization_error, e.normalization_error);
  }
  out.mean_ari = mean(aris);
  out.median_ari = median(aris);
  out.mean_fg_ari = mean(fg);
  out.median_fg_ari = median(fg);
  out.mean_nll = mean(nlls);
  return out;
}

}  // namespace monet
