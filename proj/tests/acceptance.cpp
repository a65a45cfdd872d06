// Acceptance run: one PASS/FAIL line per criterion. Pass criterion names as
// arguments to run a subset, e.g. `acceptance sdr overfit`.

#include <sys/resource.h>

#include <algorithm>
#include <chrono>
#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/checkpoint.hpp"
#include "dunet/cli.hpp"
#include "dunet/eval.hpp"
#include "dunet/model.hpp"
#include "dunet/ops.hpp"
#include "dunet/train.hpp"
#include "dunet/wav.hpp"
#include "gradcheck.hpp"
#include "oracles.hpp"

using namespace dunet;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("dunet_acceptance_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

Tensor<double> run_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b, std::size_t d,
                        bool transpose) {
  Tape<double> tape;
  const Var xv = tape.leaf(x), wv = tape.leaf(w), bv = tape.leaf(b);
  return tape.value(transpose ? conv1d_transpose(tape, xv, wv, bv, d) : conv1d(tape, xv, wv, bv, d));
}

// ---------------------------------------------------------------- gradients

Tensor<double> away_from_zero(Rng& rng, const Shape& shape) {
  Tensor<double> t(shape);
  for (auto& v : t.data()) {
    do v = rng.uniform(-1.0, 1.0);
    while (std::abs(v) < 1e-3);
  }
  return t;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  Rng rng(2024);
  struct OpCheck {
    std::string name;
    std::function<std::pair<test::LossBuilder, std::vector<Tensor<double>>>(Rng&)> make;
  };
  auto shape_ct = [](Rng& r) { return Shape{1 + r.index(4), 1 + r.index(24)}; };
  auto probe = [](Tape<double>& t, Var out, const Tensor<double>& target) { return mse(t, out, t.leaf(target)); };
  std::vector<OpCheck> ops;
  ops.push_back({"conv1d", [&](Rng& r) {
                   const std::size_t cin = 1 + r.index(4), cout = 1 + r.index(4), T = 1 + r.index(32);
                   const std::size_t k = std::vector<std::size_t>{1, 2, 3, 5, 15}[r.index(5)], d = 1 + r.index(6);
                   const auto target = test::random_tensor<double>(r, {cout, T});
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, conv1d(t, v[0], v[1], v[2], d), target);
                                    }),
                                    std::vector{test::random_tensor<double>(r, {cin, T}),
                                                test::random_tensor<double>(r, {cout, cin, k}),
                                                test::random_tensor<double>(r, {cout})}};
                 }});
  ops.push_back({"conv1d_transpose", [&](Rng& r) {
                   const std::size_t cin = 1 + r.index(4), cout = 1 + r.index(4), T = 1 + r.index(32);
                   const std::size_t k = std::vector<std::size_t>{1, 2, 3, 5, 15}[r.index(5)], d = 1 + r.index(6);
                   const auto target = test::random_tensor<double>(r, {cout, T});
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, conv1d_transpose(t, v[0], v[1], v[2], d), target);
                                    }),
                                    std::vector{test::random_tensor<double>(r, {cin, T}),
                                                test::random_tensor<double>(r, {cin, cout, k}),
                                                test::random_tensor<double>(r, {cout})}};
                 }});
  ops.push_back({"leaky_relu", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   const double slope = r.uniform(0.05, 0.95);
                   const auto target = test::random_tensor<double>(r, s);
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, leaky_relu(t, v[0], slope), target);
                                    }),
                                    std::vector{away_from_zero(r, s)}};
                 }});
  ops.push_back({"tanh", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   const auto target = test::random_tensor<double>(r, s);
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, dunet::tanh(t, v[0]), target);
                                    }),
                                    std::vector{test::random_tensor<double>(r, s, -2.0, 2.0)}};
                 }});
  ops.push_back({"concat_channels", [&](Rng& r) {
                   const std::size_t parts = 1 + r.index(4), T = 1 + r.index(20);
                   std::vector<Tensor<double>> in;
                   std::size_t C = 0;
                   for (std::size_t i = 0; i < parts; ++i) {
                     in.push_back(test::random_tensor<double>(r, {1 + r.index(3), T}));
                     C += in.back().dim(0);
                   }
                   const auto target = test::random_tensor<double>(r, {C, T});
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, concat_channels(t, v), target);
                                    }),
                                    in};
                 }});
  ops.push_back({"decimate2", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   const auto target = test::random_tensor<double>(r, {s[0], (s[1] + 1) / 2});
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, decimate2(t, v[0]), target);
                                    }),
                                    std::vector{test::random_tensor<double>(r, s)}};
                 }});
  ops.push_back({"upsample_linear2", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   const auto target = test::random_tensor<double>(r, {s[0], 2 * s[1]});
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, upsample_linear2(t, v[0]), target);
                                    }),
                                    std::vector{test::random_tensor<double>(r, s)}};
                 }});
  ops.push_back({"mse", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   return std::pair{test::LossBuilder([](Tape<double>& t, const std::vector<Var>& v) {
                                      return mse(t, v[0], v[1]);
                                    }),
                                    std::vector{test::random_tensor<double>(r, s), test::random_tensor<double>(r, s)}};
                 }});
  for (const bool subtract : {false, true})
    ops.push_back({subtract ? "sub" : "add", [&, subtract](Rng& r) {
                     const Shape s = shape_ct(r);
                     const auto target = test::random_tensor<double>(r, s);
                     return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                        return probe(t, subtract ? sub(t, v[0], v[1]) : add(t, v[0], v[1]), target);
                                      }),
                                      std::vector{test::random_tensor<double>(r, s), test::random_tensor<double>(r, s)}};
                   }});
  ops.push_back({"sum", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   const double target = r.uniform(-1, 1);
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      // square the scalar so the gradient depends on the input
                                      const Var total = dunet::sum(t, v[0]);
                                      return mse(t, total, t.leaf(Tensor<double>({1}, target)));
                                    }),
                                    std::vector{test::random_tensor<double>(r, s)}};
                 }});
  ops.push_back({"reshape", [&](Rng& r) {
                   const Shape s = shape_ct(r);
                   const auto target = test::random_tensor<double>(r, {s[0] * s[1]});
                   return std::pair{test::LossBuilder([=](Tape<double>& t, const std::vector<Var>& v) {
                                      return probe(t, reshape(t, v[0], {s[0] * s[1]}), target);
                                    }),
                                    std::vector{test::random_tensor<double>(r, s)}};
                 }});

  double worst = 0;
  std::string worst_op;
  const int shapes = 25;
  for (const auto& op : ops)
    for (int i = 0; i < shapes; ++i) {
      auto [build, inputs] = op.make(rng);
      const double e = test::grad_check(build, inputs, 1e-5).max_error;
      if (e > worst) {
        worst = e;
        worst_op = op.name;
      }
    }
  const double secs = seconds_since(t0);
  return {worst < 1e-4 && secs < 60.0,
          std::to_string(ops.size()) + " ops x " + std::to_string(shapes) + " shapes, worst rel err " +
              fmt("%.2e", worst) + " (" + worst_op + "), " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- convolution

Outcome conv_oracle() {
  Rng rng(11);
  double worst = 0;
  std::size_t cases = 0;
  for (std::size_t cin = 1; cin <= 4; ++cin)
    for (std::size_t cout = 1; cout <= 4; ++cout)
      for (std::size_t k : {1u, 3u, 5u, 15u})
        for (std::size_t d : {1u, 2u, 4u, 512u})
          for (std::size_t T : {1u, 2u, 7u, 16u, 33u, 64u}) {
            const std::size_t dd = d;
            const auto x = test::random_tensor<double>(rng, {cin, T});
            const auto w = test::random_tensor<double>(rng, {cout, cin, k});
            const auto b = test::random_tensor<double>(rng, {cout});
            const auto got = run_conv(x, w, b, dd, false), want = test::naive_conv1d(x, w, b, dd);
            for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
            const auto y = test::random_tensor<double>(rng, {cout, T});
            const auto bt = test::random_tensor<double>(rng, {cin});
            const auto got_t = run_conv(y, w, bt, dd, true), want_t = test::naive_conv1d_transpose(y, w, bt, dd);
            for (std::size_t i = 0; i < got_t.size(); ++i) worst = std::max(worst, std::abs(got_t[i] - want_t[i]));
            ++cases;
          }
  double adj = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = std::vector<std::size_t>{1, 2, 3, 5, 15}[rng.index(5)];
    const std::size_t d = 1 + rng.index(k == 1 ? 16 : 15 / (k - 1));
    const std::size_t cin = 1 + rng.index(4), cout = 1 + rng.index(4), T = 1 + rng.index(64);
    const auto x = test::random_tensor<double>(rng, {cin, T});
    const auto y = test::random_tensor<double>(rng, {cout, T});
    const auto w = test::random_tensor<double>(rng, {cout, cin, k});
    const double lhs = test::dot(run_conv(x, w, Tensor<double>({cout}), d, false), y);
    const double rhs = test::dot(x, run_conv(y, w, Tensor<double>({cin}), d, true));
    adj = std::max(adj, std::abs(lhs - rhs));
  }
  return {worst < 1e-10 && adj < 1e-9, std::to_string(cases) + " grid cases, max oracle diff " + fmt("%.2e", worst) +
                                           "; 100 adjoint trials, max gap " + fmt("%.2e", adj)};
}

// ---------------------------------------------------------------- schedule

Outcome schedule_exactness() {
  const DilationSchedule expected{{1, 2, 4}, {4, 8, 16}, {16, 32, 64}, {64, 128, 256}, {256, 512, 1024}, {1024, 2048, 4096}};
  const auto s = dilation_schedule(6, 3, DilationMode::adaptive());
  const auto rf = receptive_field(s, 15);
  return {s == expected && rf == 133771 && rf > 16384 && max_dilation(s) == 4096,
          "schedule " + std::string(s == expected ? "exact" : "WRONG") + ", receptive field " + std::to_string(rf) +
              " vs segment 16384"};
}

// ---------------------------------------------------------------- structure

Outcome structural_identity() {
  double worst = 0;
  std::string where;
  Rng rng(5);
  for (Arch arch : {Arch::dilated_dense, Arch::dilated, Arch::wave_unet})
    for (std::uint64_t seed : {1u, 2u}) {
      ModelConfig cfg;
      cfg.arch = arch;
      cfg.init_seed = seed;
      Model<float> model(cfg);
      for (std::size_t i = 0; i < model.params().size(); ++i)
        if (model.graph().params[i].is_bias)
          for (auto& v : model.params()[i].data()) v = static_cast<float>(rng.uniform(-0.2, 0.2));
      const auto mix = test::random_tensor<float>(rng, {cfg.channels, cfg.segment_length}, -1.0f, 1.0f);
      const auto out = model.separate(mix);
      const std::size_t n = mix.size();
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0;
        for (std::size_t k = 0; k < cfg.sources; ++k) s += out[k * n + i];
        const double e = std::abs(s - mix[i]);
        if (e > worst) {
          worst = e;
          where = to_string(arch);
        }
      }
    }
  return {worst <= 1e-5, "3 architectures x 2 seeds at full size, float32, max |sum - mixture| " + fmt("%.2e", worst) +
                             (where.empty() ? "" : " (" + where + ")")};
}

// ---------------------------------------------------------------- channels

Outcome channel_arithmetic() {
  std::size_t graphs = 0, checks = 0, bad = 0;
  for (std::size_t B = 1; B <= 6; ++B)
    for (std::size_t L = 1; L <= 4; ++L)
      for (std::size_t f : {1u, 4u, 15u}) {
        ModelConfig cfg;
        cfg.num_blocks = B;
        cfg.layers_per_block = L;
        cfg.base_filters = f;
        cfg.segment_length = 64;
        const auto g = build_dilated_dense_unet(cfg);
        ++graphs;
        auto layer = [&](const std::string& name) -> const Layer& {
          for (const auto& l : g.layers)
            if (l.name == name) return l;
          throw std::runtime_error("missing " + name);
        };
        auto expect = [&](std::size_t got, std::size_t want) {
          ++checks;
          bad += got != want;
        };
        std::size_t in = cfg.channels;
        for (std::size_t b = 1; b <= B; ++b) {
          const std::size_t g_rate = f * b;
          const std::string p = "down" + std::to_string(b);
          for (std::size_t j = 1; j <= L; ++j) expect(layer(p + ".conv" + std::to_string(j)).in_channels, in + (j - 1) * g_rate);
          expect(layer(p + ".transition").in_channels, in + L * g_rate);
          in = g_rate;
        }
        const std::size_t gb = f * (B + 1);
        for (std::size_t j = 1; j <= cfg.bottleneck_layers; ++j)
          expect(layer("bottleneck.conv" + std::to_string(j)).in_channels, in + (j - 1) * gb);
        expect(layer("bottleneck.transition").in_channels, in + cfg.bottleneck_layers * gb);
        in = gb;
        for (std::size_t u = 1; u <= B; ++u) {
          const std::size_t g_rate = f * (B + 1 - u), skip = g_rate;
          const std::string p = "up" + std::to_string(u);
          for (std::size_t j = 1; j <= L; ++j)
            expect(layer(p + ".conv" + std::to_string(j)).in_channels, in + skip + (j - 1) * g_rate);
          expect(layer(p + ".transition").in_channels, in + L * g_rate);
          in = g_rate;
        }
        for (const auto& l : g.layers) {
          if (l.kind == LayerKind::input || l.kind == LayerKind::residual) continue;
          std::size_t wired = 0;
          for (std::size_t s : l.inputs) wired += g.layers[s].out_channels;
          expect(l.in_channels, wired);
        }
      }
  return {bad == 0, std::to_string(graphs) + " dense graphs, " + std::to_string(checks) + " width checks, " +
                        std::to_string(bad) + " mismatches"};
}

// ---------------------------------------------------------------- overfit

Outcome overfit() {
  const auto t0 = Clock::now();
  ModelConfig cfg;
  cfg.arch = Arch::dilated_dense;
  cfg.num_blocks = 2;
  cfg.layers_per_block = 3;
  cfg.base_filters = 4;
  cfg.sources = 2;
  cfg.channels = 1;
  cfg.segment_length = 1024;
  cfg.init_seed = 3;
  Model<float> model(cfg);
  Tensor<float> sources({2, 1, 1024});
  for (std::size_t t = 0; t < 1024; ++t) {
    const double x = 2 * std::numbers::pi * static_cast<double>(t) / kTargetRate;
    sources[t] = static_cast<float>(0.4 * std::sin(110.0 * x));
    sources[1024 + t] = static_cast<float>(0.3 * std::sin(1300.0 * x + 0.5));
  }
  const std::vector<Segment<float>> batch{augment_and_mix(sources, std::vector<double>{1.0, 1.0})};
  auto adam = AdamState<float>::zeros_like(model.params());
  double loss = 0, first = 0;
  int step = 0;
  for (; step < 2000; ++step) {
    loss = train_step<float>(model, batch, adam, 1e-3, step + 1);
    if (step == 0) first = loss;
    if (loss < 1e-3) break;
  }
  const double secs = seconds_since(t0);
  return {loss < 1e-3 && secs < 600.0, "loss " + fmt("%.3e", first) + " -> " + fmt("%.3e", loss) + " after " +
                                           std::to_string(step + 1) + " steps, " + fmt("%.1f", secs) + " s"};
}

// ---------------------------------------------------------------- sdr

Outcome sdr_oracle() {
  Rng rng(17);
  const auto s = test::random_tensor<double>(rng, {2, 5000});
  Tensor<double> half = s;
  for (auto& v : half.data()) v *= 0.5;
  const double six = sdr(s, half);
  const double zero = sdr(s, Tensor<double>(s.shape()));

  bool silence_ok = true;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t W = 100, n = 3 + rng.index(6);
    const auto ref = test::random_tensor<double>(rng, {1, n * W});
    auto est = ref;
    for (auto& v : est.data()) v += rng.uniform(-0.5, 0.5);
    const auto base = windowed_sdr(ref, est, W);
    const std::size_t at = rng.index(n + 1);
    Tensor<double> ref2({1, (n + 1) * W}), est2({1, (n + 1) * W});
    for (std::size_t t = 0, src = 0; t < (n + 1) * W; ++t) {
      if (t / W == at) {
        ref2[t] = rng.uniform(-1e-4, 1e-4);
        est2[t] = rng.uniform(-1, 1);
      } else {
        ref2[t] = ref[src];
        est2[t] = est[src];
        ++src;
      }
    }
    const auto more = windowed_sdr(ref2, est2, W);
    silence_ok = silence_ok && more.silent == base.silent + 1 && mean_of(more.scores) == mean_of(base.scores) &&
                 median_of(more.scores) == median_of(base.scores);
  }
  return {std::abs(six - 6.0206) <= 1e-3 && zero == 0.0 && silence_ok,
          "sdr(s, s/2) = " + fmt("%.6f", six) + " dB, sdr(s, 0) = " + fmt("%g", zero) +
              " dB, silent windows " + (silence_ok ? "never move" : "MOVE") + " mean/median over 50 trials"};
}

// ---------------------------------------------------------------- ablation

Outcome toy_ablation() {
  const auto t0 = Clock::now();
  int wins = 0;
  std::string detail;
  std::ostringstream quiet;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    RunConfig rc = toy_run_config();
    rc.train.seed = rc.model.init_seed = seed;
    const auto root = scratch("ablation_" + std::to_string(seed));
    rc.data_root = root.string();
    write_tone_dataset(root, rc.model.source_names(), 4, 3 * kTargetRate, seed);
    const auto grid = ablation_grid(rc.model);
    auto mean_sdr = [](const AblationResult& r) {
      double s = 0;
      for (const auto& src : r.report.sources) s += src.mean_sdr;
      return s / static_cast<double>(r.report.sources.size());
    };
    const double fixed1 = mean_sdr(run_ablation<float>(grid[0], rc, quiet));
    const double adaptive = mean_sdr(run_ablation<float>(grid[2], rc, quiet));
    wins += adaptive >= fixed1;
    detail += (detail.empty() ? "" : "; ") + std::string("seed ") + std::to_string(seed) + ": adaptive " +
              fmt("%.2f", adaptive) + " vs fixed(1) " + fmt("%.2f", fixed1) + " dB";
    fs::remove_all(root);
  }
  return {wins >= 2, std::to_string(wins) + "/3 seeds favor adaptive (" + detail + "), " +
                         fmt("%.0f", seconds_since(t0)) + " s"};
}

// ---------------------------------------------------------------- smoke

Outcome full_scale_smoke() {
  const auto t0 = Clock::now();
  const auto root = scratch("smoke");
  Rng rng(1);
  for (const char* split : {"train", "validation"})
    for (int n = 0; n < 2; ++n) {
      const auto dir = root / split / ("track_" + std::to_string(n));
      fs::create_directories(dir);
      for (const auto& stem : kMusdbStems) {
        Tensor<float> wave({2, 40000});
        const double f = rng.uniform(50, 2000), a = rng.uniform(0.1, 0.3);
        for (std::size_t c = 0; c < 2; ++c)
          for (std::size_t t = 0; t < 40000; ++t)
            wave.at(c, t) = static_cast<float>(a * std::sin(2 * std::numbers::pi * f * t / kTargetRate + c) +
                                               0.02 * rng.uniform(-1, 1));
        write_wav(dir / (stem + ".wav"), wave, kTargetRate);
      }
    }
  const ModelConfig cfg;  // full default Dilated Dense U-Net
  Model<float> model(cfg);
  TrainConfig tc;
  tc.batch_size = 16;
  tc.epochs = 1;
  tc.steps_per_epoch = 10;
  tc.val_segments = 1;
  tc.checkpoint_path = (root / "smoke.ckpt").string();
  SegmentSampler<float> sampler(scan_dataset(root, Split::train), cfg.segment_length);
  SegmentSampler<float> val_sampler(scan_dataset(root, Split::validation), cfg.segment_length);
  const auto val = validation_segments(val_sampler, tc.val_segments, tc.seed);
  auto state = TrainState<float>::fresh(model);
  const auto rows = train_loop<float>(model, sampler, val, tc, state);
  bool finite = rows.size() == 10;
  for (const auto& r : rows) finite = finite && std::isfinite(r.train_loss);
  const bool ckpt = fs::exists(tc.checkpoint_path) && load_checkpoint(tc.checkpoint_path).step == 10;
  rusage usage{};
  getrusage(RUSAGE_SELF, &usage);
  const double peak_gb = static_cast<double>(usage.ru_maxrss) / (1024.0 * 1024.0);
  fs::remove_all(root);
  return {finite && ckpt && peak_gb < 8.0,
          "10 steps x batch 16 at default config (" + std::to_string(model.graph().parameter_count()) +
              " params): loss " + (rows.empty() ? std::string("-") : fmt("%.4f", rows.front().train_loss)) + " -> " +
              (rows.empty() ? std::string("-") : fmt("%.4f", rows.back().train_loss)) + ", peak RSS " +
              fmt("%.2f", peak_gb) + " GB, " + fmt("%.0f", seconds_since(t0)) + " s"};
}

// ---------------------------------------------------------------- formats

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

Outcome format_round_trips() {
  const auto root = scratch("formats");
  ModelConfig cfg;
  cfg.num_blocks = 2;
  cfg.base_filters = 3;
  cfg.segment_length = 128;
  Model<float> model(cfg);
  auto adam = AdamState<float>::zeros_like(model.params());
  Rng rng(23);
  for (auto& m : adam.m)
    for (auto& v : m.data()) v = static_cast<float>(rng.uniform(-1, 1));
  adam.t = 17;
  save_checkpoint(make_checkpoint(model, &adam, 3, 17), root / "a.ckpt");
  save_checkpoint(load_checkpoint(root / "a.ckpt"), root / "b.ckpt");
  const bool ckpt_same = slurp(root / "a.ckpt") == slurp(root / "b.ckpt");

  Tensor<float> audio({2, 5000});
  for (auto& v : audio.data()) v = static_cast<float>(rng.uniform(-1, 1));
  audio[0] = -1.0f;
  audio[1] = 1.0f;
  write_wav(root / "f.wav", audio, kTargetRate, WavCodec::float32);
  const auto f32 = load_wav<float>(root / "f.wav");
  bool bit_exact = f32.samples.shape() == audio.shape();
  for (std::size_t i = 0; bit_exact && i < audio.size(); ++i)
    bit_exact = std::bit_cast<std::uint32_t>(f32.samples[i]) == std::bit_cast<std::uint32_t>(audio[i]);

  write_wav(root / "p.wav", audio, kTargetRate, WavCodec::pcm16);
  const auto p16 = load_wav<float>(root / "p.wav");
  double worst = 0;
  for (std::size_t i = 0; i < audio.size(); ++i)
    worst = std::max(worst, std::abs(static_cast<double>(p16.samples[i]) - audio[i]));
  fs::remove_all(root);
  return {ckpt_same && bit_exact && worst <= 1.0 / 32768.0,
          std::string("checkpoint ") + (ckpt_same ? "byte-identical" : "DIFFERS") + ", float32 WAV " +
              (bit_exact ? "bit-exact" : "NOT bit-exact") + ", PCM16 max error " + fmt("%.3e", worst) + " (bound " +
              fmt("%.3e", 1.0 / 32768.0) + ")"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradients", gradient_suite},     {"conv", conv_oracle},
      {"schedule", schedule_exactness},  {"structure", structural_identity},
      {"channels", channel_arithmetic},  {"overfit", overfit},
      {"sdr", sdr_oracle},               {"ablation", toy_ablation},
      {"smoke", full_scale_smoke},       {"formats", format_round_trips},
  };
  std::vector<std::string> wanted(argv + 1, argv + argc);
  int failed = 0;
  for (const auto& [name, run] : criteria) {
    if (!wanted.empty() && std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s %-10s %s\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str());
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
