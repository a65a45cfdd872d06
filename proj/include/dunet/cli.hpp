#pragma once

// Command implementations behind tools/dunet. Each returns a process exit code:
// 0 success, 1 usage or configuration error, 2 numeric abort, 3 data error.

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/checkpoint.hpp"
#include "dunet/config.hpp"
#include "dunet/dataset.hpp"
#include "dunet/eval.hpp"
#include "dunet/model.hpp"
#include "dunet/schedule.hpp"
#include "dunet/train.hpp"
#include "dunet/wav.hpp"

namespace dunet {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitNumeric = 2, kExitData = 3 };

/// Everything a run needs: model, training and paths.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::string data_root;
  std::string checkpoint_out;
  std::string history_csv;

  /// Routes one setting to the owning section. Unknown keys throw.
  void set(const std::string& key, const std::string& value) {
    if (model.set(key, value) || train.set(key, value)) return;
    if (key == "data_root") data_root = value;
    else if (key == "checkpoint_out") checkpoint_out = value;
    else if (key == "history_csv") history_csv = value;
    else throw ConfigError("unknown key '" + key + "'");
  }

  void validate() const {
    model.validate();
    train.validate();
  }

  std::string to_text() const {
    return model.to_text() + train.to_text() + "data_root = " + data_root + "\ncheckpoint_out = " + checkpoint_out +
           "\nhistory_csv = " + history_csv + "\n";
  }
};

inline RunConfig parse_run_config(std::string_view text) {
  RunConfig rc;
  for (const auto& e : parse_key_values(text)) {
    try {
      rc.set(e.key, e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  return rc;
}

/// `key=value` overrides from the command line, applied after the file.
inline void apply_overrides(RunConfig& rc, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    try {
      rc.set(detail::trim(o.substr(0, eq)), detail::trim(o.substr(eq + 1)));
    } catch (const ConfigError& err) {
      throw ConfigError("override '" + o + "': " + err.what());
    }
  }
}

inline RunConfig load_run_config(const std::string& path) {
  if (path.empty()) return {};
  try {
    return parse_run_config(read_text_file(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

/// Runs `body`, mapping exceptions to exit codes with a message on `err`.
inline int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NumericAbort& e) {
    err << "error: " << e.what() << " at step " << e.step() << '\n';
    return kExitNumeric;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ContractError& e) {
    err << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const Error& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitData;
  }
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
};

namespace detail {

/// History rows of an earlier run up to and including `last_step`, header excluded.
inline std::vector<std::string> history_prefix(const std::filesystem::path& path, std::uint64_t last_step) {
  std::vector<std::string> rows;
  std::ifstream in(path);
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma == std::string::npos) continue;
    if (std::stoull(line.substr(0, comma)) <= last_step) rows.push_back(line);
  }
  return rows;
}

template <typename Scalar>
int run_training(const RunConfig& rc, const TrainArgs& args, std::ostream& err) {
  std::optional<Checkpoint> resume;
  ModelConfig model_cfg = rc.model;
  if (!args.resume.empty()) {
    resume = load_checkpoint(args.resume);
    if (!args.config.empty() && !(resume->config == rc.model))
      throw ConfigError("model settings in '" + args.config + "' differ from checkpoint '" + args.resume + "'");
    model_cfg = resume->config;
  }
  model_cfg.validate();
  Model<Scalar> model(model_cfg);
  model.graph().validate();
  auto state = TrainState<Scalar>::fresh(model);
  if (resume) {
    restore_checkpoint(*resume, model, &state.adam);
    state.epoch = resume->epoch;
    state.step = resume->step;
  }

  const auto stems = model_cfg.source_names();
  const auto train_set = scan_dataset(rc.data_root, Split::train, stems);
  const auto val_set = scan_dataset(rc.data_root, Split::validation, stems);
  if (train_set.tracks.empty()) throw DataError("no training tracks under '" + rc.data_root + "/train'");
  for (const auto& t : train_set.tracks)
    if (t.channels != model_cfg.channels)
      throw DataError("track '" + t.name + "' has " + std::to_string(t.channels) + " channel(s), config says " +
                      std::to_string(model_cfg.channels));
  err << "train: " << train_set.tracks.size() << " train / " << val_set.tracks.size() << " validation tracks, "
      << model.graph().parameter_count() << " parameters, " << to_string(rc.train.precision) << '\n';

  SegmentSampler<Scalar> sampler(train_set, model_cfg.segment_length);
  SegmentSampler<Scalar> val_sampler(val_set, model_cfg.segment_length);
  const auto val = validation_segments(val_sampler, rc.train.val_segments, rc.train.seed);

  const std::string history_path = rc.history_csv.empty() ? rc.checkpoint_out + ".history.csv" : rc.history_csv;
  const auto kept = resume ? history_prefix(history_path, resume->step) : std::vector<std::string>{};
  std::ofstream history(history_path, std::ios::trunc);
  if (!history) throw Error("cannot write history '" + history_path + "'");
  history << history_csv_header();
  for (const auto& row : kept) history << row << '\n';
  history.flush();

  TrainConfig tcfg = rc.train;
  tcfg.checkpoint_path = rc.checkpoint_out;
  TrainHooks hooks;
  hooks.on_row = [&](const HistoryRow& row) {
    history << history_csv_row(row);
    history.flush();
    if (row.val_loss || row.step % 100 == 0)
      err << "epoch " << row.epoch << " step " << row.step << " loss " << detail::format_double(row.train_loss)
          << (row.val_loss ? " val " + detail::format_double(*row.val_loss) : std::string()) << '\n';
  };
  hooks.on_checkpoint = [&](const std::filesystem::path& p) { err << "checkpoint " << p.string() << '\n'; };
  train_loop<Scalar>(model, sampler, val, tcfg, state, hooks);
  save_checkpoint(make_checkpoint(model, &state.adam, state.epoch, state.step), rc.checkpoint_out);
  err << "wrote " << rc.checkpoint_out << " and " << history_path << '\n';
  return kExitOk;
}

}  // namespace detail

/// File values, then --set overrides, then dedicated flags.
inline RunConfig resolve_train_config(const TrainArgs& args) {
  RunConfig rc = load_run_config(args.config);
  apply_overrides(rc, args.overrides);
  if (!args.data.empty()) rc.data_root = args.data;
  if (!args.out.empty()) rc.checkpoint_out = args.out;
  if (args.seed) rc.train.seed = *args.seed;
  if (rc.data_root.empty()) throw ConfigError("no dataset root (--data or data_root)");
  if (rc.checkpoint_out.empty()) throw ConfigError("no output checkpoint (--out or checkpoint_out)");
  if (args.resume.empty()) rc.validate();
  else rc.train.validate();
  return rc;
}

inline int cmd_train(const TrainArgs& args, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const RunConfig rc = resolve_train_config(args);
    return rc.train.precision == Precision::float32 ? detail::run_training<float>(rc, args, err)
                                                    : detail::run_training<double>(rc, args, err);
  });
}

// ---------------------------------------------------------------- separate

struct SeparateArgs {
  std::string checkpoint;
  std::string input;
  std::string outdir;
};

inline int cmd_separate(const SeparateArgs& args, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    const auto ck = load_checkpoint(args.checkpoint);
    Model<float> model(ck.config);
    restore_checkpoint(ck, model);
    const auto wav = load_wav<float>(args.input);
    if (wav.samples.dim(0) != ck.config.channels)
      throw DataError("'" + args.input + "' has " + std::to_string(wav.samples.dim(0)) + " channel(s), model expects " +
                      std::to_string(ck.config.channels));
    if (wav.sample_rate != kTargetRate)
      err << "warning: '" << args.input << "' is " << wav.sample_rate << " Hz; model was built for " << kTargetRate
          << " Hz\n";
    const auto est = separate_track(model, wav.samples);
    std::filesystem::create_directories(args.outdir);
    const auto names = ck.config.source_names();
    const std::size_t C = wav.samples.dim(0), T = wav.samples.dim(1);
    for (std::size_t k = 0; k < names.size(); ++k) {
      Tensor<float> one({C, T});
      std::copy_n(est.ptr() + k * C * T, C * T, one.ptr());
      const auto path = std::filesystem::path(args.outdir) / (names[k] + ".wav");
      write_wav(path, one, wav.sample_rate, WavCodec::float32);
      err << "wrote " << path.string() << '\n';
    }
    return kExitOk;
  });
}

// ---------------------------------------------------------------- evaluate

struct EvaluateArgs {
  std::string checkpoint;
  std::string data;
  std::string report;
};

inline std::filesystem::path with_suffix(const std::filesystem::path& p, const std::string& suffix) {
  auto out = p;
  out.replace_extension();
  return out.string() + suffix;
}

inline int cmd_evaluate(const EvaluateArgs& args, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    if (args.report.empty()) throw ConfigError("no report path (--report)");
    const auto ck = load_checkpoint(args.checkpoint);
    Model<float> model(ck.config);
    restore_checkpoint(ck, model);
    const auto set = scan_dataset(args.data, Split::test, ck.config.source_names());
    if (set.tracks.empty()) throw DataError("test split under '" + args.data + "' is empty");
    const auto report = evaluate(model, set);
    const std::filesystem::path csv = args.report;
    if (csv.has_parent_path()) std::filesystem::create_directories(csv.parent_path());
    std::ofstream(csv, std::ios::trunc) << report_csv(report);
    std::ofstream(with_suffix(csv, ".tracks.csv"), std::ios::trunc) << track_csv(report);
    std::ofstream(with_suffix(csv, ".txt"), std::ios::trunc) << report_table(report);
    err << report_table(report);
    return kExitOk;
  });
}

// ---------------------------------------------------------------- inspect

inline std::string inspect_text(const ModelConfig& cfg) {
  cfg.validate();
  const auto graph = build_model(cfg);
  graph.validate();
  std::ostringstream os;
  os << "arch: " << to_string(cfg.arch) << '\n' << graph.describe();
  if (cfg.arch != Arch::wave_unet) {
    const auto sched = dilation_schedule(cfg.num_blocks, cfg.layers_per_block, cfg.dilation);
    os << "dilation schedule (" << cfg.dilation.str() << "):";
    for (const auto& block : sched) {
      os << " [";
      for (std::size_t i = 0; i < block.size(); ++i) os << (i ? "," : "") << block[i];
      os << ']';
    }
    os << "\nmax dilation: " << max_dilation(sched) << '\n'
       << "receptive field (downstream path): " << receptive_field(sched, cfg.kernel_down) << '\n';
  }
  os << "receptive field (full network): " << static_cast<long long>(graph.receptive_fields().back()) << '\n'
     << "parameters: " << graph.parameter_count() << '\n'
     << "forward MACs per segment: " << graph.forward_macs() << '\n';
  return os.str();
}

struct InspectArgs {
  std::string config;
  std::vector<std::string> overrides;
};

inline int cmd_inspect(const InspectArgs& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    RunConfig rc = load_run_config(args.config);
    apply_overrides(rc, args.overrides);
    out << inspect_text(rc.model);
    return kExitOk;
  });
}

// ---------------------------------------------------------------- ablate

struct AblationRun {
  std::string label;
  ModelConfig model;
};

/// Dilation schemes on the plain network, then 1 vs 3 blocks, dense vs plain, at fixed 512.
inline std::vector<AblationRun> ablation_grid(const ModelConfig& base) {
  std::vector<AblationRun> runs;
  auto with = [&](std::string label, Arch arch, std::size_t blocks, DilationMode d) {
    ModelConfig m = base;
    m.arch = arch;
    m.num_blocks = blocks;
    m.dilation = d;
    runs.push_back({std::move(label), m});
  };
  with("plain_fixed1", Arch::dilated, base.num_blocks, DilationMode::fixed(1));
  with("plain_fixed512", Arch::dilated, base.num_blocks, DilationMode::fixed(512));
  with("plain_adaptive", Arch::dilated, base.num_blocks, DilationMode::adaptive());
  for (std::size_t blocks : {1u, 3u}) {
    with("dense_fixed512_b" + std::to_string(blocks), Arch::dilated_dense, blocks, DilationMode::fixed(512));
    with("plain_fixed512_b" + std::to_string(blocks), Arch::dilated, blocks, DilationMode::fixed(512));
  }
  return runs;
}

/// Reduced configuration for desk-scale ablations on synthetic two-tone data.
inline RunConfig toy_run_config() {
  RunConfig rc;
  rc.model.num_blocks = 4;
  rc.model.layers_per_block = 3;
  rc.model.base_filters = 4;
  rc.model.kernel_down = 15;
  rc.model.kernel_up = 5;
  rc.model.sources = 2;
  rc.model.channels = 1;
  rc.model.segment_length = 1024;
  rc.model.stems = {"low", "high"};
  rc.train.lr = 1e-3;
  rc.train.batch_size = 4;
  rc.train.epochs = 1;
  rc.train.steps_per_epoch = 1000;
  rc.train.val_segments = 0;
  return rc;
}

struct AblationResult {
  std::string label;
  std::string hash;
  ModelConfig model;
  SdrReport report;
};

/// Trains one configuration from scratch and scores it on the test split.
template <typename Scalar>
AblationResult run_ablation(const AblationRun& run, const RunConfig& rc, std::ostream& err) {
  Model<Scalar> model(run.model);
  const auto stems = run.model.source_names();
  const auto train_set = scan_dataset(rc.data_root, Split::train, stems);
  const auto test_set = scan_dataset(rc.data_root, Split::test, stems);
  if (train_set.tracks.empty() || test_set.tracks.empty())
    throw DataError("ablation needs train and test tracks under '" + rc.data_root + "'");
  SegmentSampler<Scalar> sampler(train_set, run.model.segment_length);
  auto state = TrainState<Scalar>::fresh(model);
  TrainConfig tcfg = rc.train;
  tcfg.checkpoint_path.clear();
  train_loop<Scalar>(model, sampler, {}, tcfg, state);
  AblationResult r{run.label, config_hash(run.model.to_text() + tcfg.to_text()), run.model, evaluate(model, test_set)};
  err << "ablate: " << run.label << " (" << r.hash << ")";
  for (const auto& s : r.report.sources) err << ' ' << s.source << ' ' << detail::format_double(s.mean_sdr);
  err << '\n';
  return r;
}

inline std::string ablation_csv(const std::vector<AblationResult>& results, std::uint64_t seed) {
  std::string s = "run,config_hash,arch,num_blocks,dilation,seed,source,mean_sdr_db,median_sdr_db,windows\n";
  for (const auto& r : results)
    for (const auto& src : r.report.sources)
      s += r.label + "," + r.hash + "," + to_string(r.model.arch) + "," + std::to_string(r.model.num_blocks) + "," +
           r.model.dilation.str() + "," + std::to_string(seed) + "," + src.source + "," +
           detail::format_double(src.mean_sdr) + "," + detail::format_double(src.median_sdr) + "," +
           std::to_string(src.windows) + "\n";
  return s;
}

struct AblateArgs {
  std::string data;
  std::string out;
  std::string config;
  bool toy = false;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  /// Subset of run labels; empty runs the whole grid.
  std::vector<std::string> only;
};

inline int cmd_ablate(const AblateArgs& args, std::ostream& err = std::cerr) {
  return guarded(err, [&] {
    if (args.out.empty()) throw ConfigError("no output directory (--out)");
    RunConfig rc = args.toy ? toy_run_config() : RunConfig{};
    if (!args.config.empty()) {
      const auto text = read_text_file(args.config);
      for (const auto& e : parse_key_values(text)) {
        try {
          rc.set(e.key, e.value);
        } catch (const ConfigError& x) {
          throw ConfigError(args.config + ": line " + std::to_string(e.line) + ": " + x.what());
        }
      }
    }
    apply_overrides(rc, args.overrides);
    if (args.seed) rc.train.seed = rc.model.init_seed = *args.seed;
    if (!args.data.empty()) rc.data_root = args.data;
    std::filesystem::create_directories(args.out);
    if (rc.data_root.empty()) {
      if (!args.toy) throw ConfigError("no dataset root (--data or data_root)");
      rc.data_root = (std::filesystem::path(args.out) / "toy_data").string();
      write_tone_dataset(rc.data_root, rc.model.source_names(), 4, 3 * kTargetRate, rc.train.seed);
      err << "ablate: synthesized two-tone data in " << rc.data_root << '\n';
    }
    rc.validate();
    std::vector<AblationResult> results;
    for (const auto& run : ablation_grid(rc.model)) {
      if (!args.only.empty() && std::find(args.only.begin(), args.only.end(), run.label) == args.only.end()) continue;
      run.model.validate();
      results.push_back(rc.train.precision == Precision::float32 ? run_ablation<float>(run, rc, err)
                                                                  : run_ablation<double>(run, rc, err));
    }
    std::ofstream(std::filesystem::path(args.out) / "ablation.csv", std::ios::trunc) << ablation_csv(results, rc.train.seed);
    err << "wrote " << (std::filesystem::path(args.out) / "ablation.csv").string() << '\n';
    return kExitOk;
  });
}

}  // namespace dunet
