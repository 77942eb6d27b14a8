// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance                  criteria 1-6 and 10
//   acceptance --long [--work DIR] [--threads N]
//                               criteria 7-9 at full protocol size
//   acceptance --long --scale F [--size S] [--batch B]
//                               same code path shrunk; prints SCALED, never PASS
//
// Exit status is 0 iff no line is FAIL. Runtime budgets are reported only.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "CLI11.hpp"
#include "monet/monet.hpp"
#include "test_support.hpp"

using namespace monet;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

// Budgets are expected runtimes on a desktop machine; they are printed and flagged
// but do not decide the verdict.
void report(int id, const std::string& name, bool pass, const std::string& detail, double secs, double budget) {
  if (!pass) ++failures;
  char timing[96];
  if (budget > 0) {
    std::snprintf(timing, sizeof timing, "%.2f s, budget %.0f s%s", secs, budget, secs < budget ? "" : ", over budget");
  } else {
    std::snprintf(timing, sizeof timing, "%.0f s", secs);
  }
  std::printf("%s criterion %d %s: %s (%s)\n", pass ? "PASS" : "FAIL", id, name.c_str(), detail.c_str(), timing);
  std::fflush(stdout);
}

void report_scaled(int id, const std::string& name, const std::string& detail, double secs) {
  std::printf("SCALED criterion %d %s: %s (%.0f s; not a verdict)\n", id, name.c_str(), detail.c_str(), secs);
  std::fflush(stdout);
}

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

template <typename T>
ParamSet<T> random_attention(const AttentionConfig& cfg, Index size, std::uint64_t seed) {
  ParamSet<T> p;
  declare_attention_params(p, cfg, size, size);
  init_truncated_normal(p, seed);
  return p;
}

// ------------------------------------------------------------------ 1

void criterion_1() {
  const auto t0 = Clock::now();
  const AttentionConfig cfg = AttentionConfig::for_image_size(16);
  std::mt19937_64 rng(101);
  double worst = 0;
  int cases = 0;
  for (int draw = 0; draw < 100; ++draw) {
    const ParamSet<float> p = random_attention<float>(cfg, 16, 1000 + static_cast<std::uint64_t>(draw));
    const Tensor<float> x = monet::testing::random_tensor<float>(rng, {1, 3, 16, 16}, 0, 1);
    for (Index k : {2, 5, 11}) {
      worst = std::max(worst, mask_normalization_error(decompose_masks(p, cfg, x, k)));
      ++cases;
    }
  }
  report(1, "mask normalization", worst < 1e-5,
         "max |logsumexp| " + fmt("%.3g", worst) + " < 1e-5 over " + std::to_string(cases) + " cases",
         seconds_since(t0), 1);
}

// ------------------------------------------------------------------ 2

void criterion_2() {
  const auto t0 = Clock::now();
  const ModelConfig mc = monet::testing::tiny_model();
  std::mt19937_64 rng(202);
  double worst = 0;
  for (int c = 0; c < 20; ++c) {
    const Index k = 2 + c % 5;
    const ParamSet<double> params = random_attention<double>(mc.attention, 8, 2000 + static_cast<std::uint64_t>(c));
    const Tensor<double> x = monet::testing::random_tensor<double>(rng, {1, 3, 8, 8}, 0, 1);
    const Tensor<double> log_masks = decompose_masks(params, mc.attention, x, k);

    // s_0 = 1; m_k = s_k alpha_k; s_{k+1} = s_k (1 - alpha_k); m_K = s_K.
    const Index hw = 64;
    std::vector<double> scope(hw, 1.0);
    for (Index s = 0; s < k; ++s) {
      std::vector<double> mask(hw);
      if (s + 1 < k) {
        Tape<double> tape;
        BoundParams<double> bp(tape, params, false);
        Tensor<double> log_scope({1, 1, 8, 8});
        for (Index q = 0; q < hw; ++q) log_scope[q] = std::log(scope[q]);
        const Tensor<double> logits =
            unet_apply(tape, bp, mc.attention, concat_channels(tape, {tape.constant(x), tape.constant(log_scope)}))
                .value();
        for (Index q = 0; q < hw; ++q) {
          const double alpha = 1.0 / (1.0 + std::exp(-logits[q]));
          mask[q] = scope[q] * alpha;
          scope[q] *= 1.0 - alpha;
        }
      } else {
        mask = scope;
      }
      for (Index q = 0; q < hw; ++q) worst = std::max(worst, std::abs(std::exp(log_masks[s * hw + q]) - mask[q]));
    }
  }
  report(2, "log/linear equivalence", worst < 1e-5, "max |m_log - m_linear| " + fmt("%.3g", worst) + " < 1e-5 on 20 cases",
         seconds_since(t0), 1);
}

// ------------------------------------------------------------------ 3

double latent_kl_value(double mu, double sigma) {
  Tape<double> tape;
  return latent_kl(tape, tape.constant(Tensor<double>({1, 1}, mu)), tape.constant(Tensor<double>({1, 1}, std::log(sigma))),
                   1)
      .value()
      .item();
}

Tensor<double> random_log_masks(std::mt19937_64& rng, Index k, Index h, Index w) {
  Tensor<double> l = monet::testing::random_tensor<double>(rng, {1, k, h, w}, -3, 3);
  const Index hw = h * w;
  for (Index q = 0; q < hw; ++q) {
    double z = 0;
    for (Index s = 0; s < k; ++s) z += std::exp(l[s * hw + q]);
    for (Index s = 0; s < k; ++s) l[s * hw + q] -= std::log(z);
  }
  return l;
}

void criterion_3() {
  const auto t0 = Clock::now();
  struct Case {
    double mu, sigma, want;
  };
  const Case triple[] = {{0, 1, 0}, {1, 1, 0.5}, {0, 0.5, 0.318147}};
  double latent_err = 0;
  for (const auto& c : triple) latent_err = std::max(latent_err, std::abs(latent_kl_value(c.mu, c.sigma) - c.want));

  std::mt19937_64 rng(303);
  double mask_err = 0;
  for (int t = 0; t < 50; ++t) {
    const Tensor<double> lq = random_log_masks(rng, 3, 4, 4), lp = random_log_masks(rng, 3, 4, 4);
    double want = 0;
    for (Index i = 0; i < lq.numel(); ++i) {
      const double q = std::exp(lq[i]), p = std::exp(lp[i]);
      want += q * std::log(q / p);
    }
    Tape<double> tape;
    const double got = mask_kl(tape, tape.constant(lq), tape.constant(lp)).value().item();
    mask_err = std::max(mask_err, std::abs(got - want));
  }
  report(3, "closed-form KLs", latent_err < 1e-6 && mask_err < 1e-6,
         "latent triple err " + fmt("%.3g", latent_err) + ", mask brute-force err " + fmt("%.3g", mask_err) +
             " (tol 1e-6)",
         seconds_since(t0), 1);
}

// ------------------------------------------------------------------ 4

void criterion_4() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(404);
  const std::vector<double> sigmas{0.09, 0.11, 0.11};
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    const Tensor<double> x = monet::testing::random_tensor<double>(rng, {1, 3, 2, 2}, 0, 1);
    const Tensor<double> lm = random_log_masks(rng, 3, 2, 2);
    const Tensor<double> means = monet::testing::random_tensor<double>(rng, {3, 4, 2, 2}, 0, 1);
    double want = 0;
    for (Index q = 0; q < 4; ++q) {
      double p = 0;
      for (Index s = 0; s < 3; ++s) {
        double comp = std::exp(lm[s * 4 + q]);
        for (Index ch = 0; ch < 3; ++ch) {
          const double d = (x[ch * 4 + q] - means[(s * 4 + ch) * 4 + q]) / sigmas[s];
          comp *= std::exp(-0.5 * d * d) / (sigmas[s] * std::sqrt(2 * std::numbers::pi));
        }
        p += comp;
      }
      want -= std::log(p);
    }
    Tape<double> tape;
    const double got =
        mixture_nll(tape, tape.constant(x), tape.constant(lm), tape.constant(means), sigmas).value().item();
    worst = std::max(worst, std::abs(got - want));
  }
  Tensor<double> x({1, 3, 1, 1}), means({1, 4, 1, 1});
  x[0] = means[0] = 0.3, x[1] = means[1] = 0.6, x[2] = means[2] = 0.9;
  Tape<double> tape;
  const double pixel =
      mixture_nll(tape, tape.constant(x), tape.constant(Tensor<double>({1, 1, 1, 1})), tape.constant(means), {0.09})
          .value()
          .item();
  report(4, "mixture NLL oracle", worst < 1e-6 && std::abs(pixel + 4.46696) < 1e-4,
         "brute-force err " + fmt("%.3g", worst) + " (tol 1e-6), perfect pixel " + fmt("%.6f", pixel) +
             " vs -4.46696 (tol 1e-4)",
         seconds_since(t0), 1);
}

// ------------------------------------------------------------------ 5

void criterion_5() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.height = cfg.width = 8;
  cfg.attention.channels = {4, 4, 4};
  cfg.attention.mlp_hidden = {8, 8};
  cfg.vae.latent_dim = 4;
  cfg.vae.encoder_channels = {4, 4, 4, 4};
  cfg.vae.encoder_hidden = 8;
  cfg.vae.decoder_channels = 4;
  constexpr double h = 1e-5;
  // Per tensor: |a - n| / max(|a|, |n|) with Euclidean norms over the tensor.
  double worst_tensor = 0;
  std::string worst_tensor_name;
  // Per element, for the record: |a - n| / max(|a|, |n|, 1e-3).
  double worst_element = 0, worst_abs = 0, roundoff = 0;
  std::size_t checked = 0, tensors = 0;
  for (int seed : {1, 2, 3}) {
    std::mt19937_64 rng(500 + static_cast<std::uint64_t>(seed));
    ParamSet<double> params = init_params<double>(cfg, static_cast<std::uint64_t>(seed));
    // Zero-initialised biases would park dead ReLUs exactly on their kink.
    std::uniform_real_distribution<double> u(0.05, 0.3);
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params.info(i).is_bias) {
        for (auto& v : params.tensor(i).vec()) v = u(rng);
      }
    }
    const Tensor<double> x = monet::testing::random_tensor<double>(rng, {1, 3, 8, 8}, 0, 1);
    const Tensor<double> noise = draw_latent_noise<double>(rng, 2, 4);
    auto loss = [&](Tape<double>& tape, BoundParams<double>& bp) {
      return forward(tape, bp, cfg, x, 2, LossConfig::monet(), noise).loss.total;
    };
    ParamSet<double> analytic = params.zeros_like();
    double value = 0;
    {
      Tape<double> tape;
      BoundParams<double> bp(tape, params, true);
      Var<double> l = loss(tape, bp);
      value = l.value().item();
      tape.backward(l);
      bp.accumulate_grads(analytic);
    }
    auto eval = [&]() {
      Tape<double> tape;
      BoundParams<double> bp(tape, params, false);
      return loss(tape, bp).value().item();
    };
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor<double>& t = params.tensor(i);
      double diff2 = 0, a2 = 0, n2 = 0;
      for (Index j = 0; j < t.numel(); ++j) {
        const double orig = t[j];
        t[j] = orig + h;
        const double up = eval();
        t[j] = orig - h;
        const double down = eval();
        t[j] = orig;
        const double n = (up - down) / (2 * h), a = analytic.tensor(i)[j];
        diff2 += (a - n) * (a - n);
        a2 += a * a;
        n2 += n * n;
        const double e = std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-3});
        if (e > worst_element) {
          worst_element = e;
          worst_abs = std::abs(a - n);
          roundoff = std::numeric_limits<double>::epsilon() * std::abs(value) / h;
        }
        ++checked;
      }
      ++tensors;
      const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), 1e-300});
      if (rel > worst_tensor) {
        worst_tensor = rel;
        worst_tensor_name = "seed " + std::to_string(seed) + " " + params.info(i).name;
      }
    }
  }
  report(5, "gradient check", worst_tensor < 1e-4,
         "max per-tensor rel err " + fmt("%.3g", worst_tensor) + " < 1e-4 (" + worst_tensor_name + ") over " +
             std::to_string(tensors) + " tensors, " + std::to_string(checked) +
             " elements, 3 seeds, step 1e-5; worst element rel " + fmt("%.3g", worst_element) + ", |a-n| " +
             fmt("%.2g", worst_abs) + " vs roundoff eps|L|/h " + fmt("%.2g", roundoff),
         seconds_since(t0), 120);
}

// ------------------------------------------------------------------ 6

void criterion_6() {
  const auto t0 = Clock::now();
  std::vector<std::string> bad;
  const ModelConfig cfg = ModelConfig::for_image_size(64);

  const auto enc = encoder_plan(cfg.vae, 64, 64);
  if (enc.back() != std::pair<Index, Index>{4, 4}) bad.push_back("encoder plan");
  const ParamSet<float> params = init_params<float>(cfg, 6);
  Tape<float> tape;
  BoundParams<float> bp(tape, params, false);
  Var<float> x = tape.constant(Tensor<float>({1, 3, 64, 64}, 0.5f));
  const Posterior<float> post = encode(tape, bp, cfg.vae, x, tape.constant(Tensor<float>({1, 1, 64, 64})));
  if (post.mu.shape() != Shape{1, 16} || post.log_sigma.shape() != Shape{1, 16}) bad.push_back("posterior (16,16)");

  const Shape tile = broadcast_tile(tape, post.mu, 64 + cfg.vae.decoder_margin(), 64 + cfg.vae.decoder_margin()).shape();
  if (tile != Shape{1, 18, 72, 72}) bad.push_back("decoder input " + shape_str(tile));
  if (broadcast_decode(tape, bp, cfg.vae, post.mu, 64, 64).shape() != Shape{1, 4, 64, 64}) bad.push_back("decoder output");

  const UNetPlan plan = unet_plan(cfg.attention, 64, 64);
  if (plan.sizes.size() != 5 || plan.sizes.back() != std::pair<Index, Index>{4, 4}) bad.push_back("U-Net bottleneck");
  if (unet_apply(tape, bp, cfg.attention, concat_channels(tape, {x, tape.constant(Tensor<float>({1, 1, 64, 64}))}))
          .shape() != Shape{1, 1, 64, 64}) {
    bad.push_back("U-Net output");
  }
  std::string detail = "encoder 64x64 -> (16,16), decoder input 72x72x18, U-Net 5 blocks -> 4x4";
  for (const auto& b : bad) detail += "; mismatch: " + b;
  report(6, "shape contracts", bad.empty(), detail, seconds_since(t0), 1);
}

// ------------------------------------------------------------------ 10

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void criterion_10(const fs::path& work) {
  const auto t0 = Clock::now();
  fs::remove_all(work);
  fs::create_directories(work);
  std::vector<std::string> bad;

  // Dataset round trip: write, read back, write again.
  data::SpriteGenConfig g;
  g.size = 64;
  const auto scenes = data::generate_multidsprites(10, 0, 200, g);
  data::DatasetHeader h;
  h.height = h.width = 64;
  h.mask_slots = g.max_sprites + 1;
  h.max_sprites = g.max_sprites;
  h.seed = 10;
  auto write = [&](const fs::path& p, const std::vector<data::LabeledScene>& s) {
    data::DatasetWriter w(p, h);
    for (const auto& x : s) w.write(x);
    w.close();
  };
  write(work / "a.bin", scenes);
  std::vector<data::LabeledScene> back;
  {
    data::DatasetReader r(work / "a.bin");
    for (std::uint64_t i = 0; i < r.size(); ++i) back.push_back(r.read(i));
  }
  write(work / "b.bin", back);
  if (back != scenes) bad.push_back("dataset scenes differ after reading");
  if (slurp(work / "a.bin") != slurp(work / "b.bin")) bad.push_back("dataset bytes differ after rewrite");

  // 100 steps twice, plus a resume from step 50.
  data::SpriteGenConfig small;
  small.size = 32;
  data::InMemoryScenes source(data::generate_multidsprites(11, 0, 64, small));
  TrainConfig cfg = TrainConfig::defaults_for(MaskMode::kLearned);
  cfg.iterations = 100;
  cfg.batch_size = 4;
  cfg.seed = 12;
  cfg.checkpoint_interval = 50;
  {
    Trainer a(cfg, 32);
    run_training(a, source, {work / "a.csv", work / "ckpt_a", {}});
    Trainer b(cfg, 32);
    run_training(b, source, {work / "b.csv", work / "ckpt_b", {}});
  }
  if (slurp(work / "a.csv") != slurp(work / "b.csv")) bad.push_back("rerun metric CSVs differ");

  Trainer resumed = Trainer::from_checkpoint(load_checkpoint(checkpoint_path(work / "ckpt_a", 50)));
  {
    // Keep rows 0..49 so the resumed log can be compared byte for byte.
    std::ifstream in(work / "a.csv");
    std::ofstream out(work / "c.csv", std::ios::trunc);
    std::string line;
    for (int i = 0; i < 51 && std::getline(in, line); ++i) out << line << '\n';
  }
  run_training(resumed, source, {work / "c.csv", work / "ckpt_c", {}});
  if (slurp(work / "a.csv") != slurp(work / "c.csv")) bad.push_back("resumed metric CSV differs from uninterrupted");
  if (slurp(checkpoint_path(work / "ckpt_a", 100)) != slurp(checkpoint_path(work / "ckpt_c", 100))) {
    bad.push_back("final checkpoints differ");
  }

  std::string detail = "200-scene dataset round trip, 100-step rerun and step-50 resume (32x32, batch 4, K=5)";
  for (const auto& b : bad) detail += "; " + b;
  report(10, "determinism and persistence", bad.empty(), detail, seconds_since(t0), 300);
  fs::remove_all(work);
}

// ------------------------------------------------------------- 7, 8, 9

struct LongOptions {
  fs::path work;
  double scale = 1.0;
  Index size = 64;
  Index batch = 16;
  int threads = 1;
  bool scaled() const { return scale != 1.0 || size != 64 || batch != 16; }
  std::int64_t steps(std::int64_t full) const {
    return std::max<std::int64_t>(2, static_cast<std::int64_t>(std::llround(full * scale)));
  }
  std::uint64_t count(std::uint64_t full, std::uint64_t floor) const {
    return std::max<std::uint64_t>(floor, static_cast<std::uint64_t>(std::llround(static_cast<double>(full) * scale)));
  }
};

constexpr std::uint64_t kCorpusSeed = 2019;

void ensure_dataset(const fs::path& path, std::uint64_t first, std::uint64_t count, Index size) {
  if (fs::exists(path)) {
    data::DatasetReader r(path);
    if (r.size() == count && r.header().height == size) return;
  }
  data::SpriteGenConfig g;
  g.size = size;
  data::DatasetHeader h;
  h.height = h.width = size;
  h.mask_slots = g.max_sprites + 1;
  h.max_sprites = g.max_sprites;
  h.seed = kCorpusSeed;
  data::DatasetWriter w(path, h);
  for (std::uint64_t i = 0; i < count; ++i) w.write(data::generate_scene(kCorpusSeed, first + i, g));
  w.close();
}

std::optional<fs::path> latest_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) return std::nullopt;
  std::optional<fs::path> best;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".ckpt" && (!best || e.path().filename() > best->filename())) best = e.path();
  }
  return best;
}

// Trains to cfg.iterations in `dir`, resuming from the newest checkpoint there.
Trainer train_run(const TrainConfig& cfg, Index size, data::SceneSource& source, const fs::path& dir, int threads) {
  const RunPaths run{dir};
  fs::create_directories(dir);
  std::optional<Trainer> t;
  if (const auto ckpt = latest_checkpoint(run.checkpoints())) {
    t.emplace(Trainer::from_checkpoint(load_checkpoint(*ckpt)));
  } else {
    fs::remove(run.metrics());
    t.emplace(cfg, size);
    write_json(run.manifest(), {{"version", kManifestVersion}, {"config", cfg.to_json()}, {"model", {{"image_size", size}}}});
  }
  t->set_threads(threads);
  if (t->step() < cfg.iterations) {
    std::printf("  training %s from step %lld to %lld\n", dir.filename().string().c_str(),
                static_cast<long long>(t->step()), static_cast<long long>(cfg.iterations));
    std::fflush(stdout);
    run_training(*t, source, {run.metrics(), run.checkpoints(), {}});
  }
  return std::move(*t);
}

void long_criteria(const LongOptions& o) {
  fs::create_directories(o.work);
  const std::uint64_t train_count = o.count(50000, 64), test_count = o.count(500, 20);
  const fs::path train_file = o.work / "train.bin", test_file = o.work / "heldout.bin";
  ensure_dataset(train_file, 0, train_count, o.size);
  ensure_dataset(test_file, train_count, test_count, o.size);
  data::FileScenes train(train_file), test(test_file);

  // 7 and 9 share the K=5 runs.
  auto t7 = Clock::now();
  std::vector<double> fg5, fg7, norm7;
  for (std::uint64_t seed : {0, 1, 2}) {
    TrainConfig cfg = TrainConfig::defaults_for(MaskMode::kLearned);
    cfg.batch_size = o.batch;
    cfg.iterations = o.steps(30000);
    cfg.seed = seed;
    cfg.checkpoint_interval = std::max<std::int64_t>(1, cfg.iterations / 30);
    const Trainer t = train_run(cfg, o.size, train, o.work / ("c7_seed" + std::to_string(seed)), o.threads);
    const auto e5 = evaluate_scenes(t.params(), t.model_config(), test, 0, test_count, 5, cfg.loss(), o.threads);
    const auto e7 = evaluate_scenes(t.params(), t.model_config(), test, 0, test_count, 7, cfg.loss(), o.threads);
    fg5.push_back(e5.median_fg_ari);
    fg7.push_back(e7.median_fg_ari);
    norm7.push_back(e7.max_normalization_error);
  }
  const double med = median(fg5);
  const double low = *std::min_element(fg5.begin(), fg5.end());
  std::string d7 = "median fg-ARI per seed";
  for (double v : fg5) d7 += fmt(" %.3f", v);
  d7 += "; median " + fmt("%.3f", med) + " > 0.5, min " + fmt("%.3f", low) + " > 0.3";
  if (o.scaled()) {
    report_scaled(7, "desk-scale decomposition", d7, seconds_since(t7));
  } else {
    report(7, "desk-scale decomposition", med > 0.5 && low > 0.3, d7, seconds_since(t7), 0);
  }

  auto t9 = Clock::now();
  bool ok9 = true;
  std::string d9 = "K_test=7 vs 5 median fg-ARI drop per seed";
  for (std::size_t i = 0; i < fg5.size(); ++i) {
    d9 += fmt(" %.3f", fg5[i] - fg7[i]);
    ok9 = ok9 && fg5[i] - fg7[i] < 0.1 && norm7[i] < 1e-5;
  }
  d9 += " (< 0.1); max mask normalization error " + fmt("%.3g", *std::max_element(norm7.begin(), norm7.end())) +
        " (< 1e-5)";
  if (o.scaled()) {
    report_scaled(9, "slot generalization", d9, seconds_since(t9));
  } else {
    report(9, "slot generalization", ok9, d9, seconds_since(t9), 0);
  }

  auto t8 = Clock::now();
  int ordered = 0;
  std::string d8;
  for (std::uint64_t seed : {0, 1, 2}) {
    std::vector<RunRecord> runs;
    for (MaskMode m : {MaskMode::kAllInOne, MaskMode::kElementMasks, MaskMode::kWrongElementMasks}) {
      TrainConfig cfg = TrainConfig::defaults_for(m);
      cfg.batch_size = o.batch;
      cfg.iterations = o.steps(10000);
      cfg.seed = seed;
      cfg.checkpoint_interval = std::max<std::int64_t>(1, cfg.iterations / 10);
      const fs::path dir = o.work / ("c8_seed" + std::to_string(seed) + "_" + to_string(m));
      train_run(cfg, o.size, train, dir, o.threads);
      runs.push_back({dir, cfg, read_metric_log(RunPaths{dir}.metrics())});
    }
    const AblationReport rep = ablation_report(runs);
    const double a = rep.row(MaskMode::kAllInOne).nll_mean, e = rep.row(MaskMode::kElementMasks).nll_mean,
                 w = rep.row(MaskMode::kWrongElementMasks).nll_mean;
    const bool ok = e < a && w > a && w > e;
    ordered += ok;
    d8 += "seed " + std::to_string(seed) + " nll a/e/w " + fmt("%.1f", a) + fmt("/%.1f", e) + fmt("/%.1f", w) +
          (ok ? " ordered; " : " not ordered; ");
  }
  d8 += std::to_string(ordered) + "/3 seeds ordered (need 2)";
  if (o.scaled()) {
    report_scaled(8, "ablation ordering", d8, seconds_since(t8));
  } else {
    report(8, "ablation ordering", ordered >= 2, d8, seconds_since(t8), 0);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"MONet acceptance criteria"};
  bool long_mode = false;
  LongOptions lo;
  lo.work = fs::temp_directory_path() / "monet_acceptance_long";
  fs::path scratch = fs::temp_directory_path() / ("monet_acceptance_" + std::to_string(::getpid()));
  app.add_flag("--long", long_mode, "Run criteria 7-9 (days on one CPU core)");
  app.add_option("--work", lo.work, "Work directory for --long; runs resume from its checkpoints")->capture_default_str();
  app.add_option("--threads", lo.threads, "Worker threads for --long")->capture_default_str();
  app.add_option("--scale", lo.scale, "Shrink step and scene counts for --long (results are not verdicts)")
      ->check(CLI::Range(1e-6, 1.0));
  app.add_option("--size", lo.size, "Image size for --long (64 is the criterion)");
  app.add_option("--batch", lo.batch, "Batch size for --long (16 is the criterion)");
  CLI11_PARSE(app, argc, argv);

  try {
    if (long_mode) {
      long_criteria(lo);
    } else {
      criterion_1();
      criterion_2();
      criterion_3();
      criterion_4();
      criterion_5();
      criterion_6();
      criterion_10(scratch);
    }
  } catch (const std::exception& e) {
    std::printf("FAIL error: %s\n", e.what());
    return 1;
  }
  return failures == 0 ? 0 : 1;
}
