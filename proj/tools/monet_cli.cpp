// monet: dataset generation, training, evaluation, traversals, ablation
// reports and CLEVR preprocessing from one binary.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "monet/monet.hpp"

#ifndef MONET_REVISION
#define MONET_REVISION "unknown"
#endif

namespace fs = std::filesystem;
using namespace monet;

namespace {

constexpr int kMetricsVersion = 1;

void refuse_overwrite(const fs::path& p, bool force) {
  if (fs::exists(p) && !force) throw ArgumentError(p.string() + " exists; pass --force to overwrite");
}

// ---------------------------------------------------------------- gen-data

struct GenDataArgs {
  std::uint64_t seed = 0;
  std::uint64_t count = 1000;
  Index size = 64;
  int max_sprites = 4;
  int min_color_delta = 0;
  fs::path out;
  bool force = false;
};

int cmd_gen_data(const GenDataArgs& a) {
  if (a.count == 0) throw ArgumentError("--count must be at least 1");
  if (a.size < data::kMinSceneSize) {
    throw ArgumentError("--size " + std::to_string(a.size) + " is below the minimum of " +
                        std::to_string(data::kMinSceneSize));
  }
  refuse_overwrite(a.out, a.force);
  const data::SpriteGenConfig cfg{a.size, a.max_sprites, a.min_color_delta};
  data::DatasetHeader h;
  h.height = h.width = a.size;
  h.mask_slots = a.max_sprites + 1;
  h.max_sprites = a.max_sprites;
  h.seed = a.seed;
  std::vector<std::uint64_t> per_count(static_cast<std::size_t>(a.max_sprites + 1), 0);
  std::array<std::uint64_t, data::kSpriteShapeCount> per_shape{};
  {
    data::DatasetWriter w(a.out, h);
    for (std::uint64_t i = 0; i < a.count; ++i) {
      const data::LabeledScene s = data::generate_scene(a.seed, i, cfg);
      ++per_count[s.sprites.size()];
      for (const auto& sp : s.sprites) ++per_shape[static_cast<std::size_t>(sp.shape)];
      w.write(s);
    }
    w.close();
  }
  std::printf("wrote %llu scenes of %lldx%lld to %s\n", static_cast<unsigned long long>(a.count),
              static_cast<long long>(a.size), static_cast<long long>(a.size), a.out.string().c_str());
  std::printf("sprites per scene:");
  for (int n = 1; n <= a.max_sprites; ++n) std::printf(" %d:%llu", n, static_cast<unsigned long long>(per_count[n]));
  std::printf("\nshapes:");
  for (int s = 0; s < data::kSpriteShapeCount; ++s) {
    std::printf(" %s:%llu", data::shape_name(static_cast<data::SpriteShape>(s)),
                static_cast<unsigned long long>(per_shape[static_cast<std::size_t>(s)]));
  }
  std::printf("\n");
  return 0;
}

// ------------------------------------------------------------------- train

struct TrainArgs {
  fs::path data;
  fs::path config;
  fs::path out;
  std::optional<std::int64_t> iterations;
  std::optional<Index> batch;
  std::optional<Index> slots;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mask_mode;
  std::optional<double> learning_rate;
  std::optional<std::int64_t> checkpoint_interval;
  fs::path from_checkpoint;
  int threads = 1;
  bool force = false;
  bool quiet = false;
};

// defaults < config file < flags. The mask mode is resolved first because
// it selects the defaults.
TrainConfig resolve_train_config(const TrainArgs& a) {
  nlohmann::json file = nlohmann::json::object();
  if (!a.config.empty()) file = read_json(a.config);
  if (!file.is_object()) throw ConfigError(a.config.string() + ": config must be a JSON object");
  MaskMode mode = MaskMode::kLearned;
  if (file.contains("mask_mode")) mode = parse_mask_mode(file.at("mask_mode").get<std::string>());
  if (a.mask_mode) mode = parse_mask_mode(*a.mask_mode);
  TrainConfig cfg = TrainConfig::from_json(file, TrainConfig::defaults_for(mode));
  cfg.mask_mode = mode;
  if (a.iterations) cfg.iterations = *a.iterations;
  if (a.batch) cfg.batch_size = *a.batch;
  if (a.slots) cfg.slots = *a.slots;
  if (a.seed) cfg.seed = *a.seed;
  if (a.learning_rate) cfg.learning_rate = *a.learning_rate;
  if (a.checkpoint_interval) cfg.checkpoint_interval = *a.checkpoint_interval;
  cfg.validate();
  return cfg;
}

int cmd_train(const TrainArgs& a) {
  const RunPaths run{a.out};
  const bool resuming = !a.from_checkpoint.empty();
  std::optional<Trainer> trainer;
  data::FileScenes source(a.data);
  if (resuming) {
    if (!a.config.empty() || a.batch || a.slots || a.seed || a.mask_mode || a.learning_rate) {
      throw ArgumentError("when resuming only --iterations and --checkpoint-interval may change the configuration");
    }
    trainer.emplace(Trainer::from_checkpoint(load_checkpoint(a.from_checkpoint)));
    if (a.iterations) trainer->config().iterations = *a.iterations;
    if (a.checkpoint_interval) trainer->config().checkpoint_interval = *a.checkpoint_interval;
    trainer->config().validate();
  } else {
    if (fs::exists(run.manifest()) && !a.force) {
      throw ArgumentError(run.root.string() + " already holds a run; pass --force to overwrite");
    }
    const TrainConfig cfg = resolve_train_config(a);
    if (source.height() != source.width()) throw ConfigError("training needs square images");
    trainer.emplace(cfg, source.height());
    fs::create_directories(run.root);
    fs::remove(run.metrics());
    if (fs::exists(run.checkpoints())) fs::remove_all(run.checkpoints());
  }
  trainer->set_threads(a.threads);
  fs::create_directories(run.root);

  nlohmann::json manifest = {{"version", kManifestVersion},
                             {"config", trainer->config().to_json()},
                             {"model", {{"image_size", trainer->model_config().height}}},
                             {"seed", trainer->config().seed},
                             {"revision", MONET_REVISION},
                             {"data", fs::absolute(a.data).string()},
                             {"started", utc_timestamp()},
                             {"start_step", trainer->step()},
                             {"outputs",
                              {{"metrics", run.metrics().filename().string()},
                               {"checkpoints", run.checkpoints().filename().string()}}}};
  if (resuming) manifest["resumed_from"] = fs::absolute(a.from_checkpoint).string();
  write_json(run.manifest(), manifest);

  RunOptions opts;
  opts.metrics_csv = run.metrics();
  opts.checkpoint_dir = run.checkpoints();
  const std::int64_t total = trainer->config().iterations;
  const std::int64_t every = std::max<std::int64_t>(1, total / 20);
  if (!a.quiet) {
    opts.on_step = [&](const StepMetrics& m) {
      if (m.step % every == 0 || m.step + 1 == total) {
        std::printf("step %lld/%lld  total %.3f  nll %.3f  latent_kl %.3f  mask_kl %.3f\n",
                    static_cast<long long>(m.step), static_cast<long long>(total), m.total, m.nll, m.latent_kl,
                    m.mask_kl);
        std::fflush(stdout);
      }
    };
  }
  run_training(*trainer, source, opts);
  manifest["finished"] = utc_timestamp();
  manifest["final_step"] = trainer->step();
  manifest["final_checkpoint"] = checkpoint_path(run.checkpoints(), trainer->step()).filename().string();
  write_json(run.manifest(), manifest);
  return 0;
}

// -------------------------------------------------------------------- eval

struct EvalArgs {
  fs::path checkpoint;
  fs::path data;
  std::optional<Index> slots;
  fs::path out;
  std::uint64_t first = 0;
  std::uint64_t count = 100;
  Index panels = 8;
  int threads = 1;
};

int cmd_eval(const EvalArgs& a) {
  const Trainer model = Trainer::from_checkpoint(load_checkpoint(a.checkpoint));
  const Index slots = a.slots.value_or(model.config().slots);
  if (slots < 2) throw ArgumentError("--slots must be >= 2");
  data::FileScenes source(a.data);
  if (source.height() != model.model_config().height || source.width() != model.model_config().width) {
    throw ConfigError("dataset images do not match the checkpoint's image size");
  }
  const std::uint64_t count = std::min<std::uint64_t>(a.count, source.size() - std::min(a.first, source.size()));
  if (count == 0) throw ArgumentError("no scenes to evaluate in the requested range");
  const LossConfig loss = model.config().loss();
  const EvaluationSummary s =
      evaluate_scenes(model.params(), model.model_config(), source, a.first, count, slots, loss, a.threads);
  fs::create_directories(a.out);
  nlohmann::json per_scene = nlohmann::json::array();
  for (const auto& e : s.scenes) {
    per_scene.push_back({{"index", e.index},
                         {"ari", *e.segmentation.ari},
                         {"fg_ari", *e.segmentation.fg_ari},
                         {"nll", e.nll},
                         {"per_slot_mass", e.segmentation.per_slot_mass}});
  }
  const nlohmann::json metrics = {{"version", kMetricsVersion},
                                  {"checkpoint", fs::absolute(a.checkpoint).string()},
                                  {"data", fs::absolute(a.data).string()},
                                  {"slots", slots},
                                  {"first", a.first},
                                  {"count", count},
                                  {"ari", s.mean_ari},
                                  {"ari_median", s.median_ari},
                                  {"fg_ari", s.mean_fg_ari},
                                  {"fg_ari_median", s.median_fg_ari},
                                  {"nll", s.mean_nll},
                                  {"max_mask_normalization_error", s.max_normalization_error},
                                  {"scenes", per_scene}};
  write_json(a.out / "metrics.json", metrics);
  if (a.panels > 0) {
    std::vector<DecodeOutputs<float>> items;
    for (std::uint64_t i = 0; i < std::min<std::uint64_t>(static_cast<std::uint64_t>(a.panels), count); ++i) {
      items.push_back(run_model(model.params(), model.model_config(), source.get(a.first + i).image, slots, loss));
    }
    render_panels(items, a.out / "panels.png");
  }
  std::printf("ari %.4f (median %.4f)  fg_ari %.4f (median %.4f)  nll %.3f  over %llu scenes, K=%lld\n", s.mean_ari,
              s.median_ari, s.mean_fg_ari, s.median_fg_ari, s.mean_nll, static_cast<unsigned long long>(count),
              static_cast<long long>(slots));
  return 0;
}

// ---------------------------------------------------------------- traverse

struct TraverseArgs {
  fs::path checkpoint;
  fs::path image;
  Index slot = 0;
  Index dim = 0;
  Index steps = 11;
  std::optional<Index> slots;
  std::optional<Index> probe_dim;
  fs::path out = "traversal.png";
};

int cmd_traverse(const TraverseArgs& a) {
  const Trainer model = Trainer::from_checkpoint(load_checkpoint(a.checkpoint));
  const Index slots = a.slots.value_or(model.config().slots);
  const Tensor<float> image = data::read_png(a.image);
  const ModelConfig& mc = model.model_config();
  if (image.dim(1) != mc.height || image.dim(2) != mc.width) {
    throw ArgumentError(a.image.string() + " is " + std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(1)) +
                        ", the model expects " + std::to_string(mc.width) + "x" + std::to_string(mc.height));
  }
  const auto frames = traverse_latent(model.params(), mc, image, slots, a.slot, a.dim, a.steps);
  data::write_png(a.out, strip(frames));
  if (a.probe_dim) {
    const auto other = traverse_latent(model.params(), mc, image, slots, a.slot, *a.probe_dim, a.steps);
    const SensitivityProbe p = compare_traversals(frames, other);
    if (p.insensitive) {
      std::fprintf(stderr, "warning: traversals of dims %lld and %lld are identical; the decoder ignores both\n",
                   static_cast<long long>(a.dim), static_cast<long long>(*a.probe_dim));
    } else {
      std::printf("dims %lld and %lld differ by up to %.4g\n", static_cast<long long>(a.dim),
                  static_cast<long long>(*a.probe_dim), p.max_difference);
    }
  }
  std::printf("wrote %lld frames to %s\n", static_cast<long long>(a.steps), a.out.string().c_str());
  return 0;
}

// ------------------------------------------------------------------ ablate

struct AblateArgs {
  std::vector<fs::path> runs;
  fs::path out = "ablation";
  bool assert_ordering = false;
};

int cmd_ablate(const AblateArgs& a) {
  std::vector<RunRecord> runs;
  for (const auto& d : a.runs) runs.push_back(load_run(d));
  const AblationReport rep = ablation_report(runs);
  fs::create_directories(a.out);
  write_ablation_csv(rep, a.out / "report.csv");
  write_ablation_curves(runs, a.out);
  for (const auto& r : rep.rows) {
    std::printf("%-20s nll %.3f  latent_kl %.3f  (last %zu steps)\n", to_string(r.mode).c_str(), r.nll_mean,
                r.latent_kl_mean, r.window);
  }
  const OrderingCheck c = check_ablation_ordering(rep);
  if (a.assert_ordering && !c.passed) {
    std::fprintf(stderr, "%s\n", c.message.c_str());
    return 3;
  }
  std::printf("%s\n", c.message.c_str());
  return 0;
}

// -------------------------------------------------------- preprocess-clevr

struct ClevrArgs {
  fs::path in_dir;
  fs::path out;
};

int cmd_preprocess_clevr(const ClevrArgs& a) {
  if (!fs::is_directory(a.in_dir)) throw ArgumentError(a.in_dir.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(a.in_dir)) {
    if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) throw ArgumentError("no .png files in " + a.in_dir.string());
  fs::create_directories(a.out);
  for (const auto& f : files) {
    try {
      data::write_png(a.out / f.filename(), data::preprocess_clevr(data::read_png(f)));
    } catch (const Error& e) {
      throw ArgumentError(f.string() + ": " + e.what());
    }
  }
  std::printf("preprocessed %zu images into %s\n", files.size(), a.out.string().c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MONet scene decomposition: data generation, training and evaluation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();

  GenDataArgs gen;
  auto* g = app.add_subcommand("gen-data", "Generate a procedural multi-sprite dataset");
  g->add_option("--seed", gen.seed, "Corpus seed");
  g->add_option("--count", gen.count, "Number of scenes");
  g->add_option("--size", gen.size, "Image side in pixels (>= 16)");
  g->add_option("--max-sprites", gen.max_sprites, "Sprites per scene are drawn from 1..max")->check(CLI::Range(1, 254));
  g->add_option("--min-color-delta", gen.min_color_delta, "Minimum max-channel sprite/background colour gap (0 = off)");
  g->add_option("--out", gen.out, "Output dataset file")->required();
  g->add_flag("--force", gen.force, "Overwrite an existing output file");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a model; writes manifest, metrics.csv and checkpoints");
  t->add_option("--data", tr.data, "Dataset file")->required()->check(CLI::ExistingFile);
  t->add_option("--config", tr.config, "JSON config overriding the defaults")->check(CLI::ExistingFile);
  t->add_option("--out", tr.out, "Run directory")->required();
  t->add_option("--iterations", tr.iterations, "Total optimisation steps [1000]");
  t->add_option("--batch", tr.batch, "Batch size [64]");
  t->add_option("--slots", tr.slots, "Number of slots K [5]");
  t->add_option("--seed", tr.seed, "Seed for initialisation, batches and latent noise [0]");
  t->add_option("--mask-mode", tr.mask_mode, "Mask source [learned]")
      ->check(CLI::IsMember({"learned", "all_in_one", "element_masks", "wrong_element_masks"}));
  t->add_option("--lr", tr.learning_rate, "RMSProp learning rate [1e-4]");
  t->add_option("--checkpoint-interval", tr.checkpoint_interval, "Steps between checkpoints, 0 = final only [1000]");
  t->add_option("--from-checkpoint", tr.from_checkpoint, "Resume from this checkpoint")->check(CLI::ExistingFile);
  t->add_option("--threads", tr.threads, "Worker threads; results do not depend on it")->check(CLI::PositiveNumber);
  t->add_flag("--force", tr.force, "Overwrite an existing run directory");
  t->add_flag("--quiet", tr.quiet, "No progress output");

  EvalArgs ev;
  auto* e = app.add_subcommand("eval", "Segmentation metrics and component panels");
  e->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  e->add_option("--data", ev.data, "Dataset with ground-truth masks")->required()->check(CLI::ExistingFile);
  e->add_option("--slots", ev.slots, "Attention steps at test time [training K]");
  e->add_option("--out", ev.out, "Output directory")->required();
  e->add_option("--first", ev.first, "First scene index");
  e->add_option("--count", ev.count, "Number of scenes");
  e->add_option("--panels", ev.panels, "Images in panels.png, 0 = none");
  e->add_option("--threads", ev.threads, "Worker threads")->check(CLI::PositiveNumber);

  TraverseArgs tv;
  auto* v = app.add_subcommand("traverse", "Latent traversal strip for one slot");
  v->add_option("--checkpoint", tv.checkpoint, "Checkpoint file")->required()->check(CLI::ExistingFile);
  v->add_option("--image", tv.image, "Input PNG")->required()->check(CLI::ExistingFile);
  v->add_option("--slot", tv.slot, "Slot index");
  v->add_option("--dim", tv.dim, "Latent dimension");
  v->add_option("--steps", tv.steps, "Frames from -1 to +1")->check(CLI::Range(2, 1000));
  v->add_option("--slots", tv.slots, "Attention steps [training K]");
  v->add_option("--probe-dim", tv.probe_dim, "Second dimension for the sensitivity check");
  v->add_option("--out", tv.out, "Output PNG");

  AblateArgs ab;
  auto* b = app.add_subcommand("ablate", "Compare all_in_one / element_masks / wrong_element_masks runs");
  b->add_option("runs", ab.runs, "Three run directories")->required()->expected(3)->check(CLI::ExistingDirectory);
  b->add_option("--out", ab.out, "Report directory");
  b->add_flag("--assert-ordering", ab.assert_ordering, "Exit nonzero unless the expected ordering holds");

  ClevrArgs cl;
  auto* c = app.add_subcommand("preprocess-clevr", "Crop and resize 320x240 CLEVR frames to 128x128");
  c->add_option("--in-dir", cl.in_dir, "Directory of PNG frames")->required();
  c->add_option("--out", cl.out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (*g) return cmd_gen_data(gen);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_eval(ev);
    if (*v) return cmd_traverse(tv);
    if (*b) return cmd_ablate(ab);
    if (*c) return cmd_preprocess_clevr(cl);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  return 1;
}
