#pragma once

#include <cstddef>
#include <vector>

#include "dunet/config.hpp"

namespace dunet {

/// Dilation rates per block, num_blocks rows of layers_per_block entries.
using DilationSchedule = std::vector<std::vector<std::size_t>>;

/// Adaptive: rates double inside a block and each block restarts at the rate
/// its predecessor ended on, so (6, 3) spans 1 ... 4096. Fixed: every rate is n.
inline DilationSchedule dilation_schedule(std::size_t blocks, std::size_t layers, DilationMode mode) {
  DilationSchedule schedule(blocks, std::vector<std::size_t>(layers, mode.rate));
  if (mode.kind == DilationMode::Kind::fixed) return schedule;
  std::size_t rate = 1;
  for (auto& block : schedule) {
    for (std::size_t l = 0; l < layers; ++l) {
      block[l] = rate;
      if (l + 1 < layers) rate *= 2;
    }
  }
  return schedule;
}

/// 1 + (k - 1) * sum of rates: input samples seen by one output of the stacked path.
inline std::size_t receptive_field(const DilationSchedule& schedule, std::size_t kernel) {
  std::size_t total = 0;
  for (const auto& block : schedule)
    for (std::size_t d : block) total += d;
  return 1 + (kernel - 1) * total;
}

inline std::size_t max_dilation(const DilationSchedule& schedule) {
  std::size_t m = 0;
  for (const auto& block : schedule)
    for (std::size_t d : block) m = d > m ? d : m;
  return m;
}

}  // namespace dunet
