#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "dunet/error.hpp"

namespace dunet {

enum class Arch { wave_unet, dilated, dilated_dense };

inline std::string to_string(Arch a) {
  switch (a) {
    case Arch::wave_unet: return "wave_unet";
    case Arch::dilated: return "dilated";
    case Arch::dilated_dense: return "dilated_dense";
  }
  return "?";
}

inline Arch parse_arch(std::string_view s) {
  if (s == "wave_unet") return Arch::wave_unet;
  if (s == "dilated") return Arch::dilated;
  if (s == "dilated_dense") return Arch::dilated_dense;
  throw ConfigError("unknown arch '" + std::string(s) + "' (expected wave_unet, dilated or dilated_dense)");
}

/// Adaptive doubling schedule, or one rate for every layer.
struct DilationMode {
  enum class Kind { adaptive, fixed };
  Kind kind = Kind::adaptive;
  std::size_t rate = 1;

  static DilationMode adaptive() { return {}; }
  static DilationMode fixed(std::size_t n) { return {Kind::fixed, n}; }

  std::string str() const { return kind == Kind::adaptive ? "adaptive" : "fixed:" + std::to_string(rate); }
  bool operator==(const DilationMode&) const = default;
};

enum class UpstreamOrder { reversed, same };

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename Int>
Int parse_int(std::string_view key, std::string_view s) {
  Int v{};
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ConfigError("key '" + std::string(key) + "': expected an integer, got '" + std::string(s) + "'");
  return v;
}

inline double parse_double(std::string_view key, std::string_view s) {
  try {
    std::size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used == s.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("key '" + std::string(key) + "': expected a number, got '" + std::string(s) + "'");
}

/// Shortest text that parses back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace detail

inline DilationMode parse_dilation(std::string_view s) {
  if (s == "adaptive") return DilationMode::adaptive();
  if (s.starts_with("fixed:")) {
    const auto n = detail::parse_int<std::size_t>("dilation", s.substr(6));
    if (n < 1) throw ConfigError("fixed dilation must be >= 1");
    return DilationMode::fixed(n);
  }
  throw ConfigError("dilation must be 'adaptive' or 'fixed:N', got '" + std::string(s) + "'");
}

/// Architecture description shared by all three networks.
struct ModelConfig {
  Arch arch = Arch::dilated_dense;
  std::size_t num_blocks = 6;
  std::size_t layers_per_block = 3;
  std::size_t base_filters = 15;
  std::size_t kernel_down = 15;
  std::size_t kernel_up = 5;
  DilationMode dilation;
  double leaky_slope = 0.2;
  std::size_t sources = 4;
  std::size_t channels = 2;
  std::size_t segment_length = 16384;
  std::uint64_t init_seed = 0;
  /// Conv layers per path in the Wave-U-Net baseline.
  std::size_t wave_depth = 12;
  std::size_t bottleneck_layers = 3;
  UpstreamOrder upstream_order = UpstreamOrder::reversed;
  /// Source names, also the stem file names. Empty: vocals/drums/bass/other for K = 4, else source_k.
  std::vector<std::string> stems;

  bool operator==(const ModelConfig&) const = default;

  std::vector<std::string> source_names() const {
    if (!stems.empty()) return stems;
    if (sources == 4) return {"vocals", "drums", "bass", "other"};
    std::vector<std::string> names;
    for (std::size_t k = 1; k <= sources; ++k) names.push_back("source_" + std::to_string(k));
    return names;
  }

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw ConfigError(msg);
    };
    need(num_blocks >= 1, "num_blocks must be >= 1");
    need(layers_per_block >= 1, "layers_per_block must be >= 1");
    need(base_filters >= 1, "base_filters must be >= 1");
    need(kernel_down >= 1 && kernel_up >= 1, "kernel sizes must be >= 1");
    need(sources >= 2, "sources must be >= 2");
    need(channels >= 1, "channels must be >= 1");
    need(segment_length >= 1, "segment_length must be >= 1");
    need(leaky_slope > 0.0 && leaky_slope < 1.0, "leaky_slope must lie in (0, 1)");
    need(dilation.rate >= 1, "dilation rate must be >= 1");
    need(bottleneck_layers >= 1, "bottleneck_layers must be >= 1");
    need(stems.empty() || stems.size() == sources,
         "stems lists " + std::to_string(stems.size()) + " names but sources = " + std::to_string(sources));
    if (arch == Arch::wave_unet) {
      need(wave_depth >= 1 && wave_depth < 63, "wave_depth must be in [1, 62]");
      const std::size_t factor = std::size_t{1} << wave_depth;
      need(segment_length % factor == 0, "segment_length " + std::to_string(segment_length) +
                                             " is not divisible by 2^" + std::to_string(wave_depth));
    }
  }

  /// Applies one `key = value` setting. Returns false for keys this struct does not own.
  bool set(std::string_view key, std::string_view value) {
    using detail::parse_int;
    if (key == "arch") arch = parse_arch(value);
    else if (key == "num_blocks") num_blocks = parse_int<std::size_t>(key, value);
    else if (key == "layers_per_block") layers_per_block = parse_int<std::size_t>(key, value);
    else if (key == "base_filters") base_filters = parse_int<std::size_t>(key, value);
    else if (key == "kernel_down") kernel_down = parse_int<std::size_t>(key, value);
    else if (key == "kernel_up") kernel_up = parse_int<std::size_t>(key, value);
    else if (key == "dilation") dilation = parse_dilation(value);
    else if (key == "leaky_slope") leaky_slope = detail::parse_double(key, value);
    else if (key == "sources") sources = parse_int<std::size_t>(key, value);
    else if (key == "channels") channels = parse_int<std::size_t>(key, value);
    else if (key == "segment_length") segment_length = parse_int<std::size_t>(key, value);
    else if (key == "init_seed") init_seed = parse_int<std::uint64_t>(key, value);
    else if (key == "wave_depth") wave_depth = parse_int<std::size_t>(key, value);
    else if (key == "bottleneck_layers") bottleneck_layers = parse_int<std::size_t>(key, value);
    else if (key == "upstream_order") {
      if (value == "reversed") upstream_order = UpstreamOrder::reversed;
      else if (value == "same") upstream_order = UpstreamOrder::same;
      else throw ConfigError("upstream_order must be 'reversed' or 'same'");
    } else if (key == "stems") stems = detail::split_list(value);
    else return false;
    return true;
  }

  /// Canonical `key = value` text; parsing it back yields an equal config.
  std::string to_text() const {
    std::ostringstream os;
    os << "arch = " << to_string(arch) << '\n'
       << "num_blocks = " << num_blocks << '\n'
       << "layers_per_block = " << layers_per_block << '\n'
       << "base_filters = " << base_filters << '\n'
       << "kernel_down = " << kernel_down << '\n'
       << "kernel_up = " << kernel_up << '\n'
       << "dilation = " << dilation.str() << '\n'
       << "leaky_slope = " << detail::format_double(leaky_slope) << '\n'
       << "sources = " << sources << '\n'
       << "channels = " << channels << '\n'
       << "segment_length = " << segment_length << '\n'
       << "init_seed = " << init_seed << '\n'
       << "wave_depth = " << wave_depth << '\n'
       << "bottleneck_layers = " << bottleneck_layers << '\n'
       << "upstream_order = " << (upstream_order == UpstreamOrder::reversed ? "reversed" : "same") << '\n'
       << "stems = ";
    for (std::size_t i = 0; i < stems.size(); ++i) os << (i ? "," : "") << stems[i];
    os << '\n';
    return os.str();
  }
};

/// One `key = value` line of a config file.
struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Parses UTF-8 `key = value` lines; `#` starts a comment, blank lines are skipped.
inline std::vector<ConfigEntry> parse_key_values(std::string_view text) {
  std::vector<ConfigEntry> entries;
  std::size_t line_no = 0, start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string trimmed = detail::trim(line);
    if (trimmed.empty()) continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + trimmed + "'");
    ConfigEntry e{detail::trim(std::string_view(trimmed).substr(0, eq)),
                  detail::trim(std::string_view(trimmed).substr(eq + 1)), line_no};
    if (e.key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    entries.push_back(std::move(e));
  }
  return entries;
}

inline ModelConfig parse_model_config(std::string_view text) {
  ModelConfig cfg;
  for (const auto& e : parse_key_values(text)) {
    try {
      if (!cfg.set(e.key, e.value))
        throw ConfigError("unknown key '" + e.key + "'");
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
  return cfg;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// FNV-1a 64-bit over the canonical text, as 16 hex digits.
inline std::string config_hash(std::string_view canonical_text) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical_text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = hex[h & 0xf];
  return out;
}

}  // namespace dunet
