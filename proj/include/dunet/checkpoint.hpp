#pragma once

// Binary checkpoint, all integers little-endian:
//
//   "DUNETCKP"                      8 bytes magic
//   u32 version                     currently 1
//   u32 n, n bytes                  ModelConfig as canonical key = value text
//   u64 epoch, u64 step
//   u32 count                       parameter tensors, graph order
//   per tensor: u16 n, n bytes name; u8 rank; rank x u32 extents; f32 data
//   u8 has_optimizer
//   if set: i64 adam step, then m and v for every tensor (f32, same shapes)

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dunet/adam.hpp"
#include "dunet/config.hpp"
#include "dunet/error.hpp"
#include "dunet/model.hpp"
#include "dunet/tensor.hpp"

namespace dunet {

inline constexpr char kCheckpointMagic[8] = {'D', 'U', 'N', 'E', 'T', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

struct OptimizerSnapshot {
  std::int64_t t = 0;
  std::vector<Tensor<float>> m, v;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::vector<NamedTensor> params;
  std::optional<OptimizerSnapshot> optimizer;
};

namespace detail {

class ByteWriter {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void bytes(const std::string& s) { out_ += s; }
  void floats(const Tensor<float>& t) {
    for (float f : t.data()) u32(std::bit_cast<std::uint32_t>(f));
  }
  std::string take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int n) {
    for (int i = 0; i < n; ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(const std::string& bytes) : bytes_(bytes) {}

  std::uint64_t get(int n, const std::string& what) {
    need(static_cast<std::size_t>(n), what);
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += static_cast<std::size_t>(n);
    return v;
  }
  std::string str(std::size_t n, const std::string& what) {
    need(n, what);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void floats(Tensor<float>& t, const std::string& what) {
    need(t.size() * 4, what);
    for (auto& f : t.data()) f = std::bit_cast<float>(static_cast<std::uint32_t>(get(4, what)));
  }
  bool done() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const std::string& what) {
    if (bytes_.size() - pos_ < n) throw FormatError("checkpoint truncated while reading " + what);
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::string encode_checkpoint(const Checkpoint& ck) {
  detail::ByteWriter w;
  w.bytes(std::string(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  const std::string cfg = ck.config.to_text();
  w.u32(static_cast<std::uint32_t>(cfg.size()));
  w.bytes(cfg);
  w.u64(ck.epoch);
  w.u64(ck.step);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& p : ck.params) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name);
    w.u8(static_cast<std::uint8_t>(p.value.rank()));
    for (std::size_t d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    w.floats(p.value);
  }
  w.u8(ck.optimizer ? 1 : 0);
  if (ck.optimizer) {
    if (ck.optimizer->m.size() != ck.params.size() || ck.optimizer->v.size() != ck.params.size())
      throw ContractError("optimizer state does not cover every parameter");
    w.u64(static_cast<std::uint64_t>(ck.optimizer->t));
    for (const auto& m : ck.optimizer->m) w.floats(m);
    for (const auto& v : ck.optimizer->v) w.floats(v);
  }
  return w.take();
}

namespace detail {
inline std::size_t remaining_floats(const ByteReader& r) { return r.remaining() / 4; }
}  // namespace detail

inline Checkpoint decode_checkpoint(const std::string& bytes) {
  detail::ByteReader r(bytes);
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 8) != 0)
    throw FormatError("not a checkpoint: bad magic");
  r.str(8, "magic");
  const auto version = static_cast<std::uint32_t>(r.get(4, "version"));
  if (version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(version) + " (expected " +
                      std::to_string(kCheckpointVersion) + ")");
  Checkpoint ck;
  const auto cfg_len = static_cast<std::size_t>(r.get(4, "config length"));
  try {
    ck.config = parse_model_config(r.str(cfg_len, "config"));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what());
  }
  ck.epoch = r.get(8, "epoch");
  ck.step = r.get(8, "step");
  const auto count = static_cast<std::size_t>(r.get(4, "parameter count"));
  for (std::size_t i = 0; i < count; ++i) {
    const std::string slot = "parameter #" + std::to_string(i);
    NamedTensor p;
    p.name = r.str(static_cast<std::size_t>(r.get(2, slot + " name")), slot + " name");
    const std::string what = "parameter '" + p.name + "'";
    const auto rank = static_cast<std::size_t>(r.get(1, what + " rank"));
    Shape shape(rank);
    for (auto& d : shape) d = static_cast<std::size_t>(r.get(4, what + " shape"));
    std::size_t n = 1;
    for (std::size_t d : shape) n = d == 0 || n <= detail::remaining_floats(r) / d ? n * d : detail::remaining_floats(r) + 1;
    if (n > detail::remaining_floats(r)) throw FormatError("checkpoint truncated while reading " + what + " data");
    p.value = Tensor<float>(shape);
    r.floats(p.value, what + " data");
    ck.params.push_back(std::move(p));
  }
  const auto has_opt = r.get(1, "optimizer flag");
  if (has_opt > 1) throw FormatError("bad optimizer flag " + std::to_string(has_opt));
  if (has_opt) {
    OptimizerSnapshot s;
    s.t = static_cast<std::int64_t>(r.get(8, "optimizer step"));
    for (auto* moments : {&s.m, &s.v}) {
      const char* tag = moments == &s.m ? "first moment" : "second moment";
      for (const auto& p : ck.params) {
        Tensor<float> t(p.value.shape());
        r.floats(t, std::string(tag) + " of parameter '" + p.name + "'");
        moments->push_back(std::move(t));
      }
    }
    ck.optimizer = std::move(s);
  }
  if (!r.done()) throw FormatError("trailing bytes after checkpoint");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  const std::string bytes = encode_checkpoint(ck);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f || !f.write(bytes.data(), static_cast<std::streamsize>(bytes.size())))
      throw Error("cannot write checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open checkpoint '" + path.string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode_checkpoint(bytes);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

/// Snapshot of a model (and optionally its Adam state), narrowed to float32.
template <typename Scalar>
Checkpoint make_checkpoint(const Model<Scalar>& model, const AdamState<Scalar>* adam, std::uint64_t epoch,
                           std::uint64_t step) {
  Checkpoint ck;
  ck.config = model.config();
  ck.epoch = epoch;
  ck.step = step;
  const auto& specs = model.graph().params;
  for (std::size_t i = 0; i < specs.size(); ++i) ck.params.push_back({specs[i].name, model.params()[i].template cast<float>()});
  if (adam) {
    OptimizerSnapshot s;
    s.t = adam->t;
    for (const auto& m : adam->m) s.m.push_back(m.template cast<float>());
    for (const auto& v : adam->v) s.v.push_back(v.template cast<float>());
    ck.optimizer = std::move(s);
  }
  return ck;
}

/// Copies checkpoint tensors into `model` by name. Every graph parameter must
/// appear exactly once with the graph's shape, and nothing else may appear.
template <typename Scalar>
void restore_checkpoint(const Checkpoint& ck, Model<Scalar>& model, AdamState<Scalar>* adam = nullptr) {
  const auto& specs = model.graph().params;
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < ck.params.size(); ++i)
    if (!index.emplace(ck.params[i].name, i).second)
      throw FormatError("parameter '" + ck.params[i].name + "' appears twice in checkpoint");
  for (const auto& p : ck.params) {
    bool known = false;
    for (const auto& s : specs) known = known || s.name == p.name;
    if (!known) throw FormatError("checkpoint parameter '" + p.name + "' does not exist in the model");
  }
  std::vector<std::size_t> order;
  for (const auto& s : specs) {
    const auto it = index.find(s.name);
    if (it == index.end()) throw FormatError("checkpoint lacks parameter '" + s.name + "'");
    const auto& shape = ck.params[it->second].value.shape();
    if (shape != s.shape)
      throw DimensionError("parameter '" + s.name + "': checkpoint shape " + shape_str(shape) + " vs model shape " +
                           shape_str(s.shape));
    order.push_back(it->second);
  }
  for (std::size_t i = 0; i < specs.size(); ++i) model.params()[i] = ck.params[order[i]].value.template cast<Scalar>();
  if (adam) {
    if (!ck.optimizer) {
      *adam = AdamState<Scalar>::zeros_like(model.params());
      return;
    }
    AdamState<Scalar> s;
    s.t = ck.optimizer->t;
    for (std::size_t i : order) {
      s.m.push_back(ck.optimizer->m[i].template cast<Scalar>());
      s.v.push_back(ck.optimizer->v[i].template cast<Scalar>());
    }
    *adam = std::move(s);
  }
}

}  // namespace dunet
