#pragma once

#include <cmath>
#include <cstddef>
#include <iomanip>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dunet/config.hpp"
#include "dunet/ops.hpp"
#include "dunet/random.hpp"
#include "dunet/schedule.hpp"

namespace dunet {

enum class LayerKind { input, conv, conv_transpose, transition, decimate, upsample, head, residual };
enum class Activation { none, leaky_relu, tanh };

inline std::string to_string(LayerKind k) {
  switch (k) {
    case LayerKind::input: return "input";
    case LayerKind::conv: return "conv";
    case LayerKind::conv_transpose: return "conv_t";
    case LayerKind::transition: return "transition";
    case LayerKind::decimate: return "decimate";
    case LayerKind::upsample: return "upsample";
    case LayerKind::head: return "head";
    case LayerKind::residual: return "residual";
  }
  return "?";
}

/// One node of the network. Its input is the channel concatenation of the
/// outputs of `inputs`, in order.
struct Layer {
  LayerKind kind = LayerKind::input;
  std::string name;
  std::vector<std::size_t> inputs;
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel = 0;
  std::size_t dilation = 0;
  Activation activation = Activation::none;
  std::size_t time_length = 0;
  std::ptrdiff_t weight = -1;
  std::ptrdiff_t bias = -1;

  bool has_weights() const { return weight >= 0; }
  bool operator==(const Layer&) const = default;
};

struct ParamSpec {
  std::string name;
  Shape shape;
  std::size_t fan_in = 0;
  std::size_t fan_out = 0;
  bool is_bias = false;
  bool operator==(const ParamSpec&) const = default;
};

/// Immutable topology plus parameter declarations.
struct ModelGraph {
  ModelConfig config;
  std::vector<Layer> layers;
  std::vector<ParamSpec> params;
  std::vector<std::size_t> heads;
  std::size_t residual = 0;

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += shape_size(p.shape);
    return n;
  }

  /// Multiply-accumulates of one forward pass over one segment.
  double forward_macs() const {
    double macs = 0;
    for (const auto& l : layers)
      if (l.has_weights())
        macs += static_cast<double>(l.in_channels) * l.out_channels * l.kernel * l.time_length;
    return macs;
  }

  /// Receptive field (in input samples) of each layer's output along the longest path.
  std::vector<double> receptive_fields() const {
    std::vector<double> rf(layers.size(), 1.0), jump(layers.size(), 1.0);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      double r = 1.0, j = 1.0;
      for (std::size_t src : l.inputs) {
        r = std::max(r, rf[src]);
        j = jump[src];
      }
      if (l.has_weights()) r += static_cast<double>(l.kernel - 1) * static_cast<double>(l.dilation) * j;
      if (l.kind == LayerKind::decimate) j *= 2.0;
      if (l.kind == LayerKind::upsample) {
        r += j;  // interpolation reads one extra neighbor
        j /= 2.0;
      }
      rf[i] = r;
      jump[i] = j;
    }
    return rf;
  }

  /// Channel arithmetic, time lengths and parameter uniqueness.
  void validate() const {
    std::set<std::string> names;
    for (const auto& p : params)
      if (!names.insert(p.name).second) throw ConfigError("duplicate parameter name " + p.name);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      std::size_t sum = 0;
      for (std::size_t src : l.inputs) {
        if (src >= i) throw ConfigError(l.name + " consumes a later layer");
        sum += layers[src].out_channels;
        const std::size_t expect = l.kind == LayerKind::upsample ? l.time_length / 2
                                   : l.kind == LayerKind::decimate ? 2 * l.time_length
                                                                   : l.time_length;
        if (l.kind != LayerKind::decimate && layers[src].time_length != expect)
          throw ConfigError(l.name + " mixes time lengths");
      }
      if (l.kind == LayerKind::input) continue;
      if (l.kind == LayerKind::residual) {
        if (l.out_channels != layers[l.inputs[0]].out_channels) throw ConfigError("residual width mismatch");
        continue;
      }
      if (sum != l.in_channels)
        throw ConfigError(l.name + " declares " + std::to_string(l.in_channels) + " input channels but is wired to " +
                          std::to_string(sum));
    }
  }

  std::string describe() const;
};

namespace detail {

class GraphBuilder {
 public:
  explicit GraphBuilder(const ModelConfig& cfg) { g_.config = cfg; }

  std::size_t input() {
    Layer l;
    l.kind = LayerKind::input;
    l.name = "mixture";
    l.out_channels = g_.config.channels;
    l.time_length = g_.config.segment_length;
    return push(std::move(l));
  }

  std::size_t conv(LayerKind kind, std::string name, std::vector<std::size_t> inputs, std::size_t out,
                   std::size_t kernel, std::size_t dilation, Activation act) {
    Layer l;
    l.kind = kind;
    l.name = std::move(name);
    l.in_channels = width(inputs);
    l.out_channels = out;
    l.kernel = kernel;
    l.dilation = dilation;
    l.activation = act;
    l.time_length = g_.layers[inputs.front()].time_length;
    l.inputs = std::move(inputs);
    const bool transposed = kind == LayerKind::conv_transpose;
    l.weight = param(l.name + ".weight",
                     transposed ? Shape{l.in_channels, out, kernel} : Shape{out, l.in_channels, kernel},
                     l.in_channels * kernel, out * kernel, false);
    l.bias = param(l.name + ".bias", Shape{out}, l.in_channels * kernel, out * kernel, true);
    return push(std::move(l));
  }

  std::size_t resample(LayerKind kind, std::string name, std::size_t src) {
    Layer l;
    l.kind = kind;
    l.name = std::move(name);
    l.inputs = {src};
    l.in_channels = l.out_channels = g_.layers[src].out_channels;
    const std::size_t t = g_.layers[src].time_length;
    l.time_length = kind == LayerKind::decimate ? (t + 1) / 2 : 2 * t;
    return push(std::move(l));
  }

  void heads(std::size_t features, std::size_t mixture) {
    const auto names = g_.config.source_names();
    for (std::size_t k = 0; k + 1 < g_.config.sources; ++k)
      g_.heads.push_back(conv(LayerKind::head, "head." + names[k], {features, mixture}, g_.config.channels, 1, 1,
                              Activation::tanh));
    Layer r;
    r.kind = LayerKind::residual;
    r.name = "residual." + names.back();
    r.inputs = {mixture};
    r.inputs.insert(r.inputs.end(), g_.heads.begin(), g_.heads.end());
    r.in_channels = width(r.inputs);
    r.out_channels = g_.config.channels;
    r.time_length = g_.config.segment_length;
    g_.residual = push(std::move(r));
  }

  const Layer& layer(std::size_t i) const { return g_.layers[i]; }

  ModelGraph finish() {
    g_.validate();
    return std::move(g_);
  }

 private:
  std::size_t width(const std::vector<std::size_t>& inputs) const {
    std::size_t w = 0;
    for (std::size_t i : inputs) w += g_.layers[i].out_channels;
    return w;
  }

  std::ptrdiff_t param(std::string name, Shape shape, std::size_t fan_in, std::size_t fan_out, bool bias) {
    g_.params.push_back({std::move(name), std::move(shape), fan_in, fan_out, bias});
    return static_cast<std::ptrdiff_t>(g_.params.size() - 1);
  }

  std::size_t push(Layer l) {
    g_.layers.push_back(std::move(l));
    return g_.layers.size() - 1;
  }

  ModelGraph g_;
};

/// L layers of width `width`; dense mode feeds each layer the block input plus
/// all earlier layer outputs (plus `extra` at the end) and closes with a
/// kernel-1 transition on [block input, all layer outputs].
inline std::size_t conv_block(GraphBuilder& b, const std::string& prefix, LayerKind kind, std::size_t block_in,
                              std::vector<std::size_t> extra, std::size_t width, std::size_t kernel,
                              const std::vector<std::size_t>& dilations, bool dense, Activation act) {
  if (!dense) {
    std::vector<std::size_t> first{block_in};
    first.insert(first.end(), extra.begin(), extra.end());
    std::size_t prev = b.conv(kind, prefix + ".conv1", first, width, kernel, dilations[0], act);
    for (std::size_t l = 1; l < dilations.size(); ++l)
      prev = b.conv(kind, prefix + ".conv" + std::to_string(l + 1), {prev}, width, kernel, dilations[l], act);
    return prev;
  }
  std::vector<std::size_t> produced{block_in};
  for (std::size_t l = 0; l < dilations.size(); ++l) {
    std::vector<std::size_t> in = produced;
    in.insert(in.end(), extra.begin(), extra.end());
    produced.push_back(b.conv(kind, prefix + ".conv" + std::to_string(l + 1), in, width, kernel, dilations[l], act));
  }
  return b.conv(LayerKind::transition, prefix + ".transition", produced, width, 1, 1, act);
}

}  // namespace detail

/// Which connections of the Dilated Dense U-Net are dense. All false gives the plain Dilated U-Net.
struct DenseOptions {
  bool within_blocks = true;
  bool bottleneck = true;
  bool skips = true;
};

/// Dilated U-Net family: B down blocks of L dilated convs at widths f*b, a
/// bottleneck at f*(B+1), B up blocks of transposed dilated convs mirroring
/// the down path, one skip per block pair and K-1 tanh heads.
inline ModelGraph build_dilated_graph(const ModelConfig& cfg, DenseOptions dense) {
  cfg.validate();
  const std::size_t B = cfg.num_blocks, f = cfg.base_filters;
  const auto schedule = dilation_schedule(B, cfg.layers_per_block, cfg.dilation);
  const auto act = Activation::leaky_relu;

  detail::GraphBuilder b(cfg);
  const std::size_t mixture = b.input();
  std::size_t prev = mixture;
  std::vector<std::size_t> skips(B + 1);
  for (std::size_t blk = 1; blk <= B; ++blk) {
    prev = detail::conv_block(b, "down" + std::to_string(blk), LayerKind::conv, prev, {}, f * blk, cfg.kernel_down,
                              schedule[blk - 1], dense.within_blocks, act);
    skips[blk] = prev;
  }

  const std::vector<std::size_t> ones(cfg.bottleneck_layers, 1);
  prev = detail::conv_block(b, "bottleneck", LayerKind::conv, prev, {}, f * (B + 1), cfg.kernel_down, ones,
                            dense.bottleneck, act);

  for (std::size_t u = 1; u <= B; ++u) {
    const std::size_t paired = B + 1 - u;
    auto dilations = schedule[paired - 1];
    if (cfg.upstream_order == UpstreamOrder::reversed) std::reverse(dilations.begin(), dilations.end());
    const std::string prefix = "up" + std::to_string(u);
    if (dense.within_blocks && !dense.skips) {
      // Skip joins the block input once instead of every layer.
      std::vector<std::size_t> produced{prev, skips[paired]};
      for (std::size_t l = 0; l < dilations.size(); ++l)
        produced.push_back(b.conv(LayerKind::conv_transpose, prefix + ".conv" + std::to_string(l + 1), produced,
                                  f * paired, cfg.kernel_up, dilations[l], act));
      prev = b.conv(LayerKind::transition, prefix + ".transition", produced, f * paired, 1, 1, act);
    } else {
      prev = detail::conv_block(b, prefix, LayerKind::conv_transpose, prev, {skips[paired]}, f * paired,
                                cfg.kernel_up, dilations, dense.within_blocks, act);
    }
  }

  b.heads(prev, mixture);
  return b.finish();
}

inline ModelGraph build_dilated_unet(const ModelConfig& cfg) { return build_dilated_graph(cfg, {false, false, false}); }

inline ModelGraph build_dilated_dense_unet(const ModelConfig& cfg, DenseOptions dense = {}) {
  return build_dilated_graph(cfg, dense);
}

/// Wave-U-Net: depth conv+decimate stages down, one bottleneck conv, depth
/// upsample+conv stages up with a skip from the matching down conv.
inline ModelGraph build_wave_unet_baseline(const ModelConfig& cfg) {
  cfg.validate();
  const std::size_t D = cfg.wave_depth, f = cfg.base_filters;
  const auto act = Activation::leaky_relu;
  detail::GraphBuilder b(cfg);
  const std::size_t mixture = b.input();
  std::size_t prev = mixture;
  std::vector<std::size_t> skips(D + 1);
  for (std::size_t i = 1; i <= D; ++i) {
    const std::string name = "down" + std::to_string(i);
    skips[i] = b.conv(LayerKind::conv, name, {prev}, f * i, cfg.kernel_down, 1, act);
    prev = b.resample(LayerKind::decimate, name + ".decimate", skips[i]);
  }
  prev = b.conv(LayerKind::conv, "bottleneck", {prev}, f * (D + 1), cfg.kernel_down, 1, act);
  for (std::size_t i = D; i >= 1; --i) {
    const std::string name = "up" + std::to_string(i);
    const std::size_t up = b.resample(LayerKind::upsample, name + ".upsample", prev);
    prev = b.conv(LayerKind::conv, name, {up, skips[i]}, f * i, cfg.kernel_up, 1, act);
  }
  b.heads(prev, mixture);
  return b.finish();
}

inline ModelGraph build_model(const ModelConfig& cfg) {
  switch (cfg.arch) {
    case Arch::wave_unet: return build_wave_unet_baseline(cfg);
    case Arch::dilated: return build_dilated_unet(cfg);
    case Arch::dilated_dense: return build_dilated_dense_unet(cfg);
  }
  throw ConfigError("unknown arch");
}

inline std::string ModelGraph::describe() const {
  std::ostringstream os;
  const auto rf = receptive_fields();
  os << std::left << std::setw(5) << "#" << std::setw(28) << "layer" << std::setw(11) << "kind" << std::right
     << std::setw(7) << "kernel" << std::setw(10) << "dilation" << std::setw(8) << "in" << std::setw(8) << "out"
     << std::setw(8) << "time" << std::setw(14) << "receptive" << '\n';
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    os << std::left << std::setw(5) << i << std::setw(28) << l.name << std::setw(11) << to_string(l.kind) << std::right
       << std::setw(7) << (l.kernel ? std::to_string(l.kernel) : "-") << std::setw(10)
       << (l.dilation ? std::to_string(l.dilation) : "-") << std::setw(8) << l.in_channels << std::setw(8)
       << l.out_channels << std::setw(8) << l.time_length << std::setw(14) << static_cast<long long>(rf[i]) << '\n';
  }
  return os.str();
}

/// A graph plus its parameter values.
template <typename Scalar>
class Model {
 public:
  explicit Model(const ModelConfig& cfg) : graph_(build_model(cfg)) { initialize(cfg.init_seed); }

  const ModelGraph& graph() const { return graph_; }
  const ModelConfig& config() const { return graph_.config; }
  std::vector<Tensor<Scalar>>& params() { return params_; }
  const std::vector<Tensor<Scalar>>& params() const { return params_; }

  /// Glorot-uniform weights in +-sqrt(6 / (fan_in + fan_out)), zero biases.
  void initialize(std::uint64_t seed) {
    Rng rng(seed);
    params_.clear();
    for (const auto& spec : graph_.params) {
      Tensor<Scalar> t(spec.shape);
      if (!spec.is_bias) {
        const double a = std::sqrt(6.0 / static_cast<double>(spec.fan_in + spec.fan_out));
        for (auto& v : t.data()) v = static_cast<Scalar>(rng.uniform(-a, a));
      }
      params_.push_back(std::move(t));
    }
  }

  std::vector<Var> register_params(Tape<Scalar>& tape, bool requires_grad) const {
    std::vector<Var> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(tape.leaf(p, requires_grad));
    return vars;
  }

  /// Records the network on `tape`. Returns [K, C, T]: K-1 tanh estimates,
  /// then the mixture minus their sum, so the sources add up to the mixture.
  Var forward(Tape<Scalar>& tape, std::span<const Var> param_vars, Var mixture) const {
    const auto& m = tape.value(mixture);
    const auto& cfg = config();
    if (m.rank() != 2 || m.dim(0) != cfg.channels || m.dim(1) != cfg.segment_length)
      throw DimensionError("mixture shape " + shape_str(m.shape()) + " does not match model input [" +
                           std::to_string(cfg.channels) + "," + std::to_string(cfg.segment_length) + "]");
    if (param_vars.size() != graph_.params.size()) throw DimensionError("parameter count mismatch");
    const Scalar slope = static_cast<Scalar>(cfg.leaky_slope);

    std::vector<Var> out(graph_.layers.size());
    for (std::size_t i = 0; i < graph_.layers.size(); ++i) {
      const Layer& l = graph_.layers[i];
      std::vector<Var> ins;
      for (std::size_t src : l.inputs) ins.push_back(out[src]);
      auto joined = [&] { return ins.size() == 1 ? ins[0] : concat_channels(tape, ins); };
      switch (l.kind) {
        case LayerKind::input: out[i] = mixture; break;
        case LayerKind::conv:
        case LayerKind::transition:
        case LayerKind::head:
          out[i] = conv1d(tape, joined(), param_vars[l.weight], param_vars[l.bias], l.dilation);
          break;
        case LayerKind::conv_transpose:
          out[i] = conv1d_transpose(tape, joined(), param_vars[l.weight], param_vars[l.bias], l.dilation);
          break;
        case LayerKind::decimate: out[i] = decimate2(tape, ins[0]); break;
        case LayerKind::upsample: out[i] = upsample_linear2(tape, ins[0]); break;
        case LayerKind::residual: {
          Var total = ins[1];
          for (std::size_t k = 2; k < ins.size(); ++k) total = add(tape, total, ins[k]);
          out[i] = sub(tape, ins[0], total);
          break;
        }
      }
      if (l.activation == Activation::leaky_relu) out[i] = leaky_relu(tape, out[i], slope);
      else if (l.activation == Activation::tanh) out[i] = dunet::tanh(tape, out[i]);
    }

    std::vector<Var> sources;
    for (std::size_t h : graph_.heads) sources.push_back(out[h]);
    sources.push_back(out[graph_.residual]);
    return reshape(tape, concat_channels(tape, sources), {cfg.sources, cfg.channels, cfg.segment_length});
  }

  /// Inference on one [C, T] segment.
  Tensor<Scalar> separate(const Tensor<Scalar>& mixture) const {
    Tape<Scalar> tape;
    const auto vars = register_params(tape, false);
    const Var m = tape.leaf(mixture);
    return tape.value(forward(tape, vars, m));
  }

 private:
  ModelGraph graph_;
  std::vector<Tensor<Scalar>> params_;
};

}  // namespace dunet
