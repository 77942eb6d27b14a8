#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "monet/evaluation/render.hpp"
#include "monet/training/run_dir.hpp"

namespace monet {

inline constexpr double kFinalWindowFraction = 0.1;

// The last ceil(fraction * n) rows, at least one.
inline std::vector<StepMetrics> final_window(const std::vector<StepMetrics>& m,
                                             double fraction = kFinalWindowFraction) {
  if (m.empty()) throw ArgumentError("final window of an empty metric log");
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(m.size()))));
  return {m.end() - static_cast<std::ptrdiff_t>(std::min(n, m.size())), m.end()};
}

struct AblationRow {
  MaskMode mode = MaskMode::kAllInOne;
  double nll_mean = 0;
  double latent_kl_mean = 0;
  std::size_t window = 0;
};

struct AblationReport {
  std::vector<AblationRow> rows;  // all_in_one, element_masks, wrong_element_masks

  const AblationRow& row(MaskMode m) const {
    for (const auto& r : rows) {
      if (r.mode == m) return r;
    }
    throw ArgumentError("ablation report has no " + to_string(m) + " row");
  }
};

inline const RunRecord& run_for(const std::vector<RunRecord>& runs, MaskMode mode) {
  const RunRecord* found = nullptr;
  for (const auto& r : runs) {
    if (r.config.mask_mode != mode) continue;
    if (found) throw ConfigError("ablation: two runs use mask mode " + to_string(mode));
    found = &r;
  }
  if (!found) throw ConfigError("ablation: no run with mask mode " + to_string(mode));
  return *found;
}

// Runs must differ in mask_mode only.
inline AblationReport ablation_report(const std::vector<RunRecord>& runs) {
  const MaskMode modes[] = {MaskMode::kAllInOne, MaskMode::kElementMasks, MaskMode::kWrongElementMasks};
  if (runs.size() != 3) throw ConfigError("ablation needs exactly three runs, got " + std::to_string(runs.size()));
  auto strip_mode = [](const TrainConfig& c) {
    nlohmann::json j = c.to_json();
    j.erase("mask_mode");
    return j;
  };
  const nlohmann::json reference = strip_mode(runs[0].config);
  for (const auto& r : runs) {
    const nlohmann::json j = strip_mode(r.config);
    if (j == reference) continue;
    std::string diff;
    for (const auto& [k, v] : reference.items()) {
      if (j.at(k) != v) diff += " " + k + " (" + v.dump() + " vs " + j.at(k).dump() + ")";
    }
    throw ConfigError("ablation: run " + r.dir.string() + " differs from " + runs[0].dir.string() +
                      " beyond mask_mode:" + diff);
  }
  AblationReport rep;
  for (MaskMode m : modes) {
    const auto window = final_window(run_for(runs, m).metrics);
    AblationRow row{m, 0, 0, window.size()};
    for (const auto& s : window) {
      row.nll_mean += s.nll;
      row.latent_kl_mean += s.latent_kl;
    }
    row.nll_mean /= static_cast<double>(window.size());
    row.latent_kl_mean /= static_cast<double>(window.size());
    rep.rows.push_back(row);
  }
  return rep;
}

struct OrderingCheck {
  bool passed = false;
  std::string message;
};

// nll(element) < nll(all_in_one), nll(wrong) strictly the largest, and
// latent_kl(wrong) > latent_kl(element).
inline OrderingCheck check_ablation_ordering(const AblationReport& rep) {
  const AblationRow& a = rep.row(MaskMode::kAllInOne);
  const AblationRow& e = rep.row(MaskMode::kElementMasks);
  const AblationRow& w = rep.row(MaskMode::kWrongElementMasks);
  std::vector<std::string> failures;
  auto num = [](double v) { return std::to_string(v); };
  if (!(e.nll_mean < a.nll_mean)) {
    failures.push_back("nll(element_masks)=" + num(e.nll_mean) + " is not below nll(all_in_one)=" + num(a.nll_mean));
  }
  if (!(w.nll_mean > a.nll_mean && w.nll_mean > e.nll_mean)) {
    failures.push_back("nll(wrong_element_masks)=" + num(w.nll_mean) + " is not the largest (all_in_one " +
                       num(a.nll_mean) + ", element_masks " + num(e.nll_mean) + ")");
  }
  if (!(w.latent_kl_mean > e.latent_kl_mean)) {
    failures.push_back("latent_kl(wrong_element_masks)=" + num(w.latent_kl_mean) +
                       " is not above latent_kl(element_masks)=" + num(e.latent_kl_mean));
  }
  OrderingCheck c;
  c.passed = failures.empty();
  if (c.passed) {
    c.message = "ordering holds";
  } else {
    c.message = "ablation ordering violated:";
    for (const auto& f : failures) c.message += "\n  " + f;
  }
  return c;
}

inline void write_ablation_csv(const AblationReport& rep, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "condition,nll_mean,latent_kl_mean\n";
  char line[128];
  for (const auto& r : rep.rows) {
    std::snprintf(line, sizeof line, ",%.9g,%.9g\n", r.nll_mean, r.latent_kl_mean);
    out << to_string(r.mode) << line;
  }
  if (!out) throw IoError("failed writing " + path.string());
}

// nll.png and latent_kl.png in `dir`; series colours follow the row order
// all_in_one, element_masks, wrong_element_masks.
inline void write_ablation_curves(const std::vector<RunRecord>& runs, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const MaskMode modes[] = {MaskMode::kAllInOne, MaskMode::kElementMasks, MaskMode::kWrongElementMasks};
  std::vector<CurveSeries> nll, kl;
  for (MaskMode m : modes) {
    const RunRecord& r = run_for(runs, m);
    CurveSeries a{to_string(m), {}, {}}, b{to_string(m), {}, {}};
    for (const auto& s : r.metrics) {
      a.x.push_back(static_cast<double>(s.step));
      a.y.push_back(s.nll);
      b.x.push_back(static_cast<double>(s.step));
      b.y.push_back(s.latent_kl);
    }
    nll.push_back(std::move(a));
    kl.push_back(std::move(b));
  }
  data::write_png(dir / "nll.png", plot_curves(nll));
  data::write_png(dir / "latent_kl.png", plot_curves(kl));
}

}  // namespace monet
