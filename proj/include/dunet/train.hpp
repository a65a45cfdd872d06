#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/adam.hpp"
#include "dunet/checkpoint.hpp"
#include "dunet/config.hpp"
#include "dunet/dataset.hpp"
#include "dunet/model.hpp"
#include "dunet/ops.hpp"
#include "dunet/random.hpp"

namespace dunet {

enum class Precision { float32, float64 };

inline std::string to_string(Precision p) { return p == Precision::float32 ? "float32" : "float64"; }

struct TrainConfig {
  double lr = 1e-4;
  std::size_t batch_size = 16;
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 2000;
  std::uint64_t seed = 0;
  Precision precision = Precision::float32;
  std::string checkpoint_path;
  /// Epochs between checkpoints; the final epoch is always written.
  std::size_t checkpoint_interval = 1;
  /// Fixed validation segments drawn once per run; 0 disables validation.
  std::size_t val_segments = 16;
  double augment_min = 0.7;
  double augment_max = 1.0;

  void validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("lr must be > 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (checkpoint_interval < 1) throw ConfigError("checkpoint_interval must be >= 1");
    if (!(augment_min > 0.0 && augment_min <= augment_max))
      throw ConfigError("augmentation interval must satisfy 0 < augment_min <= augment_max");
  }

  bool set(std::string_view key, std::string_view value) {
    using detail::parse_int;
    if (key == "lr") lr = detail::parse_double(key, value);
    else if (key == "batch_size") batch_size = parse_int<std::size_t>(key, value);
    else if (key == "epochs") epochs = parse_int<std::size_t>(key, value);
    else if (key == "steps_per_epoch") steps_per_epoch = parse_int<std::size_t>(key, value);
    else if (key == "seed") seed = parse_int<std::uint64_t>(key, value);
    else if (key == "precision") {
      if (value == "float32") precision = Precision::float32;
      else if (value == "float64") precision = Precision::float64;
      else throw ConfigError("precision must be 'float32' or 'float64'");
    } else if (key == "checkpoint_path") checkpoint_path = std::string(value);
    else if (key == "checkpoint_interval") checkpoint_interval = parse_int<std::size_t>(key, value);
    else if (key == "val_segments") val_segments = parse_int<std::size_t>(key, value);
    else if (key == "augment_min") augment_min = detail::parse_double(key, value);
    else if (key == "augment_max") augment_max = detail::parse_double(key, value);
    else return false;
    return true;
  }

  std::string to_text() const {
    std::ostringstream os;
    os << "lr = " << detail::format_double(lr) << '\n'
       << "batch_size = " << batch_size << '\n'
       << "epochs = " << epochs << '\n'
       << "steps_per_epoch = " << steps_per_epoch << '\n'
       << "seed = " << seed << '\n'
       << "precision = " << to_string(precision) << '\n'
       << "checkpoint_path = " << checkpoint_path << '\n'
       << "checkpoint_interval = " << checkpoint_interval << '\n'
       << "val_segments = " << val_segments << '\n'
       << "augment_min = " << detail::format_double(augment_min) << '\n'
       << "augment_max = " << detail::format_double(augment_max) << '\n';
    return os.str();
  }
};

/// Mean over sources of the per-source MSE. With equal-sized sources this is
/// the MSE over the whole [K, C, T] tensor, derived residual source included.
template <typename Scalar>
Var separation_loss(Tape<Scalar>& tape, Var preds, Var targets) {
  if (tape.shape(preds) != tape.shape(targets))
    throw DimensionError("separation_loss: predictions " + shape_str(tape.shape(preds)) + " vs targets " +
                         shape_str(tape.shape(targets)));
  if (tape.shape(preds).size() != 3) throw DimensionError("separation_loss expects [K, C, T] tensors");
  return mse(tape, preds, targets);
}

template <typename Scalar>
double separation_loss(const Tensor<Scalar>& preds, const Tensor<Scalar>& targets) {
  if (preds.shape() != targets.shape() || preds.rank() != 3)
    throw DimensionError("separation_loss: predictions " + shape_str(preds.shape()) + " vs targets " +
                         shape_str(targets.shape()));
  const std::size_t K = preds.dim(0), n = preds.size() / K;
  double total = 0;
  for (std::size_t k = 0; k < K; ++k) {
    double acc = 0;
    for (std::size_t i = k * n; i < (k + 1) * n; ++i) {
      const double d = static_cast<double>(preds[i]) - static_cast<double>(targets[i]);
      acc += d * d;
    }
    total += acc / static_cast<double>(n);
  }
  return total / static_cast<double>(K);
}

template <typename Scalar>
struct BatchResult {
  double loss = 0;
  std::vector<double> sample_losses;
  std::vector<Tensor<Scalar>> grads;
};

/// Loss and parameter gradients averaged over the batch. Each segment gets its
/// own tape so peak memory is one sample's activations; gradients are summed
/// in batch order.
template <typename Scalar>
BatchResult<Scalar> batch_gradients(const Model<Scalar>& model, std::span<const Segment<Scalar>> batch) {
  if (batch.empty()) throw ContractError("batch_gradients: empty batch");
  BatchResult<Scalar> out;
  for (const auto& p : model.params()) out.grads.emplace_back(p.shape());
  for (const auto& seg : batch) {
    Tape<Scalar> tape;
    const auto vars = model.register_params(tape, true);
    const Var preds = model.forward(tape, vars, tape.leaf(seg.mixture));
    const Var loss = separation_loss(tape, preds, tape.leaf(seg.sources));
    out.sample_losses.push_back(static_cast<double>(tape.value(loss)[0]));
    tape.backward(loss);
    for (std::size_t i = 0; i < vars.size(); ++i) {
      const auto g = tape.grad(vars[i]);
      auto& acc = out.grads[i];
      for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
    }
  }
  const auto inv = static_cast<Scalar>(1.0 / static_cast<double>(batch.size()));
  for (auto& g : out.grads)
    for (auto& v : g.data()) v *= inv;
  for (double l : out.sample_losses) out.loss += l;
  out.loss /= static_cast<double>(batch.size());
  return out;
}

/// Mean separation loss without gradients.
template <typename Scalar>
double mean_loss(const Model<Scalar>& model, std::span<const Segment<Scalar>> segments) {
  if (segments.empty()) return std::nan("");
  double total = 0;
  for (const auto& seg : segments) total += separation_loss(model.separate(seg.mixture), seg.sources);
  return total / static_cast<double>(segments.size());
}

/// One optimizer step on a fixed batch. Throws NumericAbort before touching
/// the parameters if the loss is not finite.
template <typename Scalar>
double train_step(Model<Scalar>& model, std::span<const Segment<Scalar>> batch, AdamState<Scalar>& adam,
                  double lr, long step_index) {
  auto result = batch_gradients(model, batch);
  if (!std::isfinite(result.loss)) throw NumericAbort("non-finite training loss", step_index);
  AdamOptions opt;
  opt.lr = lr;
  adam_step<Scalar>(model.params(), result.grads, adam, opt);
  return result.loss;
}

template <typename Scalar>
struct TrainState {
  AdamState<Scalar> adam;
  std::uint64_t epoch = 0;  // completed epochs
  std::uint64_t step = 0;   // completed optimizer steps

  static TrainState fresh(const Model<Scalar>& model) { return {AdamState<Scalar>::zeros_like(model.params()), 0, 0}; }
};

struct HistoryRow {
  std::uint64_t step = 0;
  std::uint64_t epoch = 0;
  double train_loss = 0;
  std::optional<double> val_loss;

  bool operator==(const HistoryRow&) const = default;
};

inline std::string history_csv_header() { return "step,epoch,train_loss,val_loss\n"; }

inline std::string history_csv_row(const HistoryRow& r) {
  std::string s = std::to_string(r.step) + "," + std::to_string(r.epoch) + "," + detail::format_double(r.train_loss) + ",";
  if (r.val_loss) s += detail::format_double(*r.val_loss);
  return s + "\n";
}

inline void write_history_csv(const std::filesystem::path& path, std::span<const HistoryRow> rows) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw Error("cannot write history '" + path.string() + "'");
  f << history_csv_header();
  for (const auto& r : rows) f << history_csv_row(r);
}

namespace detail {
inline constexpr std::uint64_t kTrainStream = 0x7472;
inline constexpr std::uint64_t kValStream = 0x7661;
}  // namespace detail

/// Unaugmented validation segments, fixed by the run seed.
template <typename Scalar>
std::vector<Segment<Scalar>> validation_segments(const SegmentSampler<Scalar>& sampler, std::size_t count,
                                                 std::uint64_t seed) {
  std::vector<Segment<Scalar>> out;
  if (sampler.empty()) return out;
  Rng rng({seed, detail::kValStream});
  for (std::size_t i = 0; i < count; ++i) out.push_back(sampler.draw(rng));
  return out;
}

/// The training batch for global step `step`; depends only on (seed, step).
template <typename Scalar>
std::vector<Segment<Scalar>> training_batch(const SegmentSampler<Scalar>& sampler, const TrainConfig& cfg,
                                            std::uint64_t step) {
  Rng rng({cfg.seed, step, detail::kTrainStream});
  std::vector<Segment<Scalar>> batch;
  for (std::size_t i = 0; i < cfg.batch_size; ++i) {
    Segment<Scalar> raw = sampler.draw(rng);
    Segment<Scalar> s = augment_and_mix(std::move(raw.sources), rng, cfg.augment_min, cfg.augment_max);
    s.track = std::move(raw.track);
    s.offset = raw.offset;
    batch.push_back(std::move(s));
  }
  return batch;
}

struct TrainHooks {
  std::function<void(const HistoryRow&)> on_row;
  std::function<void(const std::filesystem::path&)> on_checkpoint;
};

/// Runs epochs state.epoch .. cfg.epochs-1. Returns one row per step; the last
/// row of each epoch carries the validation loss. Resuming from a state saved
/// at an epoch boundary reproduces the uninterrupted run exactly.
template <typename Scalar>
std::vector<HistoryRow> train_loop(Model<Scalar>& model, const SegmentSampler<Scalar>& train,
                                   std::span<const Segment<Scalar>> val, const TrainConfig& cfg,
                                   TrainState<Scalar>& state, const TrainHooks& hooks = {}) {
  cfg.validate();
  std::vector<HistoryRow> history;
  if (state.epoch >= cfg.epochs || cfg.steps_per_epoch == 0) return history;
  if (train.empty()) throw DataError("training split has no track long enough for one segment");
  for (std::uint64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    for (std::size_t s = 0; s < cfg.steps_per_epoch; ++s) {
      const auto batch = training_batch(train, cfg, state.step);
      HistoryRow row;
      row.train_loss = train_step<Scalar>(model, batch, state.adam, cfg.lr, static_cast<long>(state.step + 1));
      row.step = ++state.step;
      row.epoch = epoch + 1;
      if (s + 1 == cfg.steps_per_epoch && !val.empty()) row.val_loss = mean_loss(model, val);
      if (hooks.on_row) hooks.on_row(row);
      history.push_back(row);
    }
    state.epoch = epoch + 1;
    if (!cfg.checkpoint_path.empty() && (state.epoch % cfg.checkpoint_interval == 0 || state.epoch == cfg.epochs)) {
      save_checkpoint(make_checkpoint(model, &state.adam, state.epoch, state.step), cfg.checkpoint_path);
      if (hooks.on_checkpoint) hooks.on_checkpoint(cfg.checkpoint_path);
    }
  }
  return history;
}

}  // namespace dunet
