#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

#include "json.hpp"
#include "monet/errors.hpp"
#include "monet/objective.hpp"
#include "monet/training/rmsprop.hpp"

namespace monet {

// learned: masks come from the attention network.
// all_in_one: the whole image is assigned to the first slot.
// element_masks: ground-truth masks of the scene itself.
// wrong_element_masks: ground-truth masks of a different, random scene.
enum class MaskMode { kLearned, kAllInOne, kElementMasks, kWrongElementMasks };

inline constexpr std::array<std::string_view, 4> kMaskModeNames = {"learned", "all_in_one", "element_masks",
                                                                   "wrong_element_masks"};

inline std::string to_string(MaskMode m) { return std::string(kMaskModeNames[static_cast<std::size_t>(m)]); }

inline MaskMode parse_mask_mode(std::string_view s) {
  for (std::size_t i = 0; i < kMaskModeNames.size(); ++i) {
    if (kMaskModeNames[i] == s) return static_cast<MaskMode>(i);
  }
  throw ArgumentError("unknown mask mode '" + std::string(s) +
                      "' (choices: learned, all_in_one, element_masks, wrong_element_masks)");
}

inline bool uses_provided_masks(MaskMode m) { return m != MaskMode::kLearned; }

struct TrainConfig {
  double learning_rate = 1e-4;
  Index batch_size = 64;
  std::int64_t iterations = 1000;
  Index slots = 5;
  double beta = 0.5;
  double gamma = 0.5;
  double sigma_bg = 0.09;
  double sigma_fg = 0.11;
  std::uint64_t seed = 0;
  MaskMode mask_mode = MaskMode::kLearned;
  double rmsprop_decay = 0.9;
  double rmsprop_epsilon = 1e-10;
  std::int64_t checkpoint_interval = 1000;  // 0: final checkpoint only

  // Defaults for a mask mode; provided-mask runs use a single sigma of 0.05
  // and gamma 0.25.
  static TrainConfig defaults_for(MaskMode mode) {
    TrainConfig c;
    c.mask_mode = mode;
    if (uses_provided_masks(mode)) c.set_loss(LossConfig::provided_masks());
    return c;
  }

  LossConfig loss() const { return {beta, gamma, sigma_bg, sigma_fg}; }
  void set_loss(const LossConfig& l) {
    beta = l.beta;
    gamma = l.gamma;
    sigma_bg = l.sigma_bg;
    sigma_fg = l.sigma_fg;
  }
  RmsPropConfig optimizer() const { return {learning_rate, rmsprop_decay, rmsprop_epsilon}; }

  void validate() const {
    if (!(learning_rate > 0)) throw ConfigError("learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (slots < 2) throw ConfigError("K (slots) must be >= 2");
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (!(sigma_bg > 0) || !(sigma_fg > 0)) throw ConfigError("sigma_bg and sigma_fg must be > 0");
    if (beta < 0 || gamma < 0) throw ConfigError("beta and gamma must be >= 0");
    if (!(rmsprop_decay >= 0 && rmsprop_decay < 1)) throw ConfigError("rmsprop_decay must be in [0, 1)");
    if (rmsprop_epsilon < 0) throw ConfigError("rmsprop_epsilon must be >= 0");
    if (checkpoint_interval < 0) throw ConfigError("checkpoint_interval must be >= 0");
  }

  nlohmann::json to_json() const {
    return {{"learning_rate", learning_rate},
            {"batch_size", batch_size},
            {"iterations", iterations},
            {"K", slots},
            {"beta", beta},
            {"gamma", gamma},
            {"sigma_bg", sigma_bg},
            {"sigma_fg", sigma_fg},
            {"seed", seed},
            {"mask_mode", to_string(mask_mode)},
            {"rmsprop_decay", rmsprop_decay},
            {"rmsprop_epsilon", rmsprop_epsilon},
            {"checkpoint_interval", checkpoint_interval}};
  }

  // Overlays the keys present in `j` onto `base`; unknown keys are rejected.
  static TrainConfig from_json(const nlohmann::json& j) { return from_json(j, TrainConfig{}); }
  static TrainConfig from_json(const nlohmann::json& j, TrainConfig base) {
    if (!j.is_object()) throw ConfigError("training config must be a JSON object");
    try {
      for (const auto& [key, v] : j.items()) {
        if (key == "learning_rate") base.learning_rate = v.get<double>();
        else if (key == "batch_size") base.batch_size = v.get<Index>();
        else if (key == "iterations") base.iterations = v.get<std::int64_t>();
        else if (key == "K") base.slots = v.get<Index>();
        else if (key == "beta") base.beta = v.get<double>();
        else if (key == "gamma") base.gamma = v.get<double>();
        else if (key == "sigma_bg") base.sigma_bg = v.get<double>();
        else if (key == "sigma_fg") base.sigma_fg = v.get<double>();
        else if (key == "seed") base.seed = v.get<std::uint64_t>();
        else if (key == "mask_mode") base.mask_mode = parse_mask_mode(v.get<std::string>());
        else if (key == "rmsprop_decay") base.rmsprop_decay = v.get<double>();
        else if (key == "rmsprop_epsilon") base.rmsprop_epsilon = v.get<double>();
        else if (key == "checkpoint_interval") base.checkpoint_interval = v.get<std::int64_t>();
        else throw ConfigError("unknown training config key '" + key + "'");
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("invalid training config value: ") + e.what());
    }
    return base;
  }

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

}  // namespace monet
