#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <thread>
#include <vector>

#include "monet/data/source.hpp"
#include "monet/data/sprites.hpp"
#include "monet/model.hpp"
#include "monet/parallel.hpp"
#include "monet/training/checkpoint.hpp"
#include "monet/training/config.hpp"
#include "monet/training/rmsprop.hpp"

namespace monet {

using data::SceneSource;
using data::InMemoryScenes;
using data::FileScenes;

struct StepMetrics {
  std::int64_t step = 0;
  double nll = 0;
  double latent_kl = 0;
  double mask_kl = 0;
  double total = 0;

  friend bool operator==(const StepMetrics&, const StepMetrics&) = default;
};

// Append-only CSV; the header is written when the file is new or empty.
class MetricLog {
 public:
  static constexpr const char* kHeader = "step,nll,latent_kl,mask_kl,total";

  explicit MetricLog(const std::filesystem::path& path) : path_(path) {
    const bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
    out_.open(path, std::ios::app);
    if (!out_) throw IoError("cannot open metric log " + path.string());
    if (fresh) out_ << kHeader << '\n';
  }

  void append(const StepMetrics& m) {
    char line[160];
    std::snprintf(line, sizeof line, "%lld,%.9g,%.9g,%.9g,%.9g\n", static_cast<long long>(m.step), m.nll,
                  m.latent_kl, m.mask_kl, m.total);
    out_ << line;
    out_.flush();
    if (!out_) throw IoError("failed writing metric log " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

inline std::vector<StepMetrics> read_metric_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open metric log " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != MetricLog::kHeader) {
    throw FormatError(path.string() + ": missing metric header '" + MetricLog::kHeader + "'");
  }
  std::vector<StepMetrics> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    StepMetrics m;
    long long step = 0;
    if (std::sscanf(line.c_str(), "%lld,%lf,%lf,%lf,%lf", &step, &m.nll, &m.latent_kl, &m.mask_kl, &m.total) != 5) {
      throw FormatError(path.string() + ": malformed metric row '" + line + "'");
    }
    m.step = step;
    out.push_back(m);
  }
  return out;
}

inline std::string rng_state(const std::mt19937_64& rng) {
  std::ostringstream s;
  s << rng;
  return s.str();
}

inline std::mt19937_64 rng_from_state(const std::string& state) {
  std::mt19937_64 rng;
  std::istringstream s(state);
  s >> rng;
  if (!s) throw CheckpointError("corrupt RNG state in checkpoint");
  return rng;
}

// log masks [1, K, H, W] for the provided-mask modes: the first slot covers
// everything, or the scene's ground-truth masks.
template <typename T>
Tensor<T> all_in_one_log_masks(Index slots, Index height, Index width) {
  Tensor<T> m({1, slots, height, width}, -std::numeric_limits<T>::infinity());
  for (Index p = 0; p < height * width; ++p) m[p] = T{0};
  return m;
}

namespace detail {

inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const auto i = static_cast<std::uint64_t>(data::detail::uniform01(rng) * static_cast<double>(n));
  return i < n ? i : n - 1;
}

inline Tensor<float> as_batch(const data::LabeledScene& s) {
  return s.image.reshaped({1, 3, s.height, s.width});
}

// Seeds for the two independent streams, derived from the run seed.
inline std::mt19937_64 stream_rng(std::uint64_t seed, std::uint32_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), stream};
  return std::mt19937_64(seq);
}

}  // namespace detail

// The whole optimisation state: parameters, RMSProp accumulators, step
// counter and the two RNG streams (batch sampling and latent noise).
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, Index image_size)
      : cfg_(cfg),
        model_(ModelConfig::for_image_size(image_size)),
        params_(init_params<float>(model_, cfg.seed)),
        optimizer_(params_, cfg.optimizer()),
        data_rng_(detail::stream_rng(cfg.seed, 1)),
        noise_rng_(detail::stream_rng(cfg.seed, 2)) {
    cfg_.validate();
  }

  static Trainer from_checkpoint(const Checkpoint& ckpt) {
    TrainConfig cfg;
    Index size = 0;
    try {
      cfg = TrainConfig::from_json(ckpt.config.at("train"));
      size = ckpt.config.at("model").at("image_size").get<Index>();
    } catch (const nlohmann::json::exception& e) {
      throw CheckpointError(std::string("checkpoint config is incomplete: ") + e.what());
    }
    Trainer t(cfg, size);
    restore_tensors(t.params_, ckpt.params);
    restore_tensors(t.optimizer_.state(), ckpt.optimizer);
    t.step_ = ckpt.step;
    t.data_rng_ = rng_from_state(ckpt.data_rng);
    t.noise_rng_ = rng_from_state(ckpt.noise_rng);
    return t;
  }

  const TrainConfig& config() const { return cfg_; }
  TrainConfig& config() { return cfg_; }
  const ModelConfig& model_config() const { return model_; }
  const ParamSet<float>& params() const { return params_; }
  ParamSet<float>& params() { return params_; }
  const RmsProp<float>& optimizer() const { return optimizer_; }
  std::int64_t step() const { return step_; }
  std::int64_t attention_calls() const { return attention_calls_; }
  // Gradient of the last step (batch mean), kept for inspection.
  const ParamSet<float>& last_gradient() const { return grads_; }

  void set_threads(int n) { threads_ = std::max(1, n); }

  Checkpoint checkpoint() const {
    Checkpoint c;
    c.params = to_named_tensors(params_);
    c.optimizer = to_named_tensors(optimizer_.state());
    c.step = step_;
    c.data_rng = rng_state(data_rng_);
    c.noise_rng = rng_state(noise_rng_);
    c.config = {{"train", cfg_.to_json()}, {"model", {{"image_size", model_.height}}}};
    return c;
  }

  // One RMSProp update on a uniformly sampled batch. The returned metrics
  // are the batch-mean loss terms at the parameters before the update.
  StepMetrics train_step(SceneSource& source) {
    check_source(source);
    const Index batch = cfg_.batch_size, slots = cfg_.slots, latent = model_.vae.latent_dim;
    std::vector<Tensor<float>> images(static_cast<std::size_t>(batch));
    std::vector<std::optional<Tensor<float>>> masks(static_cast<std::size_t>(batch));
    std::vector<Tensor<float>> noise(static_cast<std::size_t>(batch));
    for (Index b = 0; b < batch; ++b) {
      const std::uint64_t i = detail::uniform_index(data_rng_, source.size());
      const data::LabeledScene scene = source.get(i);
      images[static_cast<std::size_t>(b)] = detail::as_batch(scene);
      switch (cfg_.mask_mode) {
        case MaskMode::kLearned: break;
        case MaskMode::kAllInOne:
          masks[static_cast<std::size_t>(b)] = all_in_one_log_masks<float>(slots, scene.height, scene.width);
          break;
        case MaskMode::kElementMasks: masks[static_cast<std::size_t>(b)] = scene.log_masks<float>(); break;
        case MaskMode::kWrongElementMasks: {
          std::uint64_t j = i;
          while (j == i) j = detail::uniform_index(data_rng_, source.size());
          masks[static_cast<std::size_t>(b)] = source.get(j).log_masks<float>();
          break;
        }
      }
    }
    for (Index b = 0; b < batch; ++b) noise[static_cast<std::size_t>(b)] = draw_latent_noise<float>(noise_rng_, slots, latent);

    const LossConfig loss_cfg = cfg_.loss();
    std::vector<ParamSet<float>> sample_grads(static_cast<std::size_t>(batch));
    std::vector<LossBreakdown> losses(static_cast<std::size_t>(batch));
    std::vector<int> calls(static_cast<std::size_t>(batch), 0);
    parallel_for(batch, threads_, [&](Index b) {
      const auto u = static_cast<std::size_t>(b);
      Tape<float> tape;
      BoundParams<float> bound(tape, params_);
      ForwardPass<float> fp = forward(tape, bound, model_, images[u], slots, loss_cfg, noise[u], masks[u]);
      tape.backward(fp.loss.total);
      sample_grads[u] = params_.zeros_like();
      bound.accumulate_grads(sample_grads[u]);
      losses[u] = fp.loss.breakdown(loss_cfg);
      calls[u] = fp.attention_calls;
    });

    StepMetrics m;
    m.step = step_;
    grads_ = params_.zeros_like();
    const float scale = 1.0f / static_cast<float>(batch);
    for (Index b = 0; b < batch; ++b) {
      const auto u = static_cast<std::size_t>(b);
      for (std::size_t t = 0; t < grads_.size(); ++t) {
        Tensor<float>& g = grads_.tensor(t);
        const Tensor<float>& s = sample_grads[u].tensor(t);
        for (Index j = 0; j < g.numel(); ++j) g[j] += scale * s[j];
      }
      m.nll += losses[u].nll;
      m.latent_kl += losses[u].latent_kl;
      m.mask_kl += losses[u].mask_kl;
      m.total += losses[u].total;
      attention_calls_ += calls[u];
    }
    m.nll /= static_cast<double>(batch);
    m.latent_kl /= static_cast<double>(batch);
    m.mask_kl /= static_cast<double>(batch);
    m.total /= static_cast<double>(batch);
    if (!std::isfinite(m.total)) {
      throw NumericError("non-finite loss at step " + std::to_string(step_) + " (nll " + std::to_string(m.nll) +
                         ", latent_kl " + std::to_string(m.latent_kl) + ", mask_kl " + std::to_string(m.mask_kl) +
                         ")");
    }
    try {
      optimizer_.step(params_, grads_);
    } catch (const NumericError& e) {
      throw NumericError("step " + std::to_string(step_) + ": " + e.what());
    }
    ++step_;
    return m;
  }

 private:
  void check_source(const SceneSource& source) const {
    if (source.height() != model_.height || source.width() != model_.width) {
      throw ConfigError("dataset images are " + std::to_string(source.width()) + "x" +
                        std::to_string(source.height()) + ", model expects " + std::to_string(model_.width) + "x" +
                        std::to_string(model_.height));
    }
    if ((cfg_.mask_mode == MaskMode::kElementMasks || cfg_.mask_mode == MaskMode::kWrongElementMasks) &&
        source.mask_slots() != cfg_.slots) {
      throw ConfigError("mask mode " + to_string(cfg_.mask_mode) + " needs K equal to the dataset's " +
                        std::to_string(source.mask_slots()) + " ground-truth masks, got K=" +
                        std::to_string(cfg_.slots));
    }
    if (cfg_.mask_mode == MaskMode::kWrongElementMasks && source.size() < 2) {
      throw ConfigError("wrong_element_masks needs at least two scenes");
    }
  }

  TrainConfig cfg_;
  ModelConfig model_;
  ParamSet<float> params_;
  RmsProp<float> optimizer_;
  ParamSet<float> grads_;
  std::mt19937_64 data_rng_;
  std::mt19937_64 noise_rng_;
  std::int64_t step_ = 0;
  std::int64_t attention_calls_ = 0;
  int threads_ = 1;
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t step) {
  char name[32];
  std::snprintf(name, sizeof name, "step_%08lld.ckpt", static_cast<long long>(step));
  return dir / name;
}

struct RunOptions {
  std::filesystem::path metrics_csv;     // empty: no log
  std::filesystem::path checkpoint_dir;  // empty: no checkpoints
  std::function<void(const StepMetrics&)> on_step;
};

// Trains until trainer.step() reaches the configured iteration count.
// Checkpoints go to checkpoint_dir every checkpoint_interval steps and at the
// end; returns the metrics of the steps run by this call.
inline std::vector<StepMetrics> run_training(Trainer& trainer, SceneSource& source, const RunOptions& opts = {}) {
  std::optional<MetricLog> log;
  if (!opts.metrics_csv.empty()) log.emplace(opts.metrics_csv);
  if (!opts.checkpoint_dir.empty()) std::filesystem::create_directories(opts.checkpoint_dir);
  const std::int64_t interval = trainer.config().checkpoint_interval;
  std::vector<StepMetrics> out;
  while (trainer.step() < trainer.config().iterations) {
    const StepMetrics m = trainer.train_step(source);
    out.push_back(m);
    if (log) log->append(m);
    if (opts.on_step) opts.on_step(m);
    const bool last = trainer.step() == trainer.config().iterations;
    if (!opts.checkpoint_dir.empty() && (last || (interval > 0 && trainer.step() % interval == 0))) {
      save_checkpoint(checkpoint_path(opts.checkpoint_dir, trainer.step()), trainer.checkpoint());
    }
  }
  return out;
}

}  // namespace monet
