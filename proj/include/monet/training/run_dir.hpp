#pragma once

// Run directory layout:
//   manifest.json      resolved configuration, seed, revision, timestamps, outputs
//   metrics.csv        step,nll,latent_kl,mask_kl,total
//   checkpoints/       step_XXXXXXXX.ckpt

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "monet/training/trainer.hpp"

namespace monet {

inline constexpr int kManifestVersion = 1;

struct RunPaths {
  std::filesystem::path root;
  std::filesystem::path manifest() const { return root / "manifest.json"; }
  std::filesystem::path metrics() const { return root / "metrics.csv"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
};

inline std::string utc_timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << '\n';
  if (!out) throw IoError("failed writing " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": invalid JSON (" + e.what() + ")");
  }
}

struct RunRecord {
  std::filesystem::path dir;
  TrainConfig config;
  std::vector<StepMetrics> metrics;
};

inline RunRecord load_run(const std::filesystem::path& dir) {
  const RunPaths paths{dir};
  const nlohmann::json m = read_json(paths.manifest());
  if (!m.contains("config")) throw FormatError(paths.manifest().string() + ": no \"config\" entry");
  return {dir, TrainConfig::from_json(m.at("config")), read_metric_log(paths.metrics())};
}

}  // namespace monet
