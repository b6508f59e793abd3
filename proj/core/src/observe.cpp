#include "metaexp/env.hpp"

namespace metaexp::env {

int observation_len(ObsMode mode, int width, int height) {
  return mode == ObsMode::local3x3 ? 3 * 3 * kObsChannels : width * height * kObsChannels;
}

namespace {

// one cell's channel block: one-hot over the 8 special types under the
// palette relabeling (plain floor leaves them all zero), then the agent flag
void write_cell(std::vector<double>& out, std::size_t base, Tile t,
                const std::array<std::uint8_t, 8>& palette, bool agent_here) {
  if (t != Tile::normal) {
    const int special = static_cast<int>(t) - 1;  // 0..7
    out[base + palette[static_cast<std::size_t>(special)]] = 1.0;
  }
  if (agent_here) out[base + kSpecialTileTypes] = 1.0;
}

}  // namespace

std::vector<double> encode_observation(const GridState& g,
                                       const std::array<std::uint8_t, 8>& palette_perm,
                                       ObsMode mode) {
  if (mode == ObsMode::global) {
    std::vector<double> out(static_cast<std::size_t>(g.width) * g.height * kObsChannels, 0.0);
    for (int y = 0; y < g.height; ++y) {
      for (int x = 0; x < g.width; ++x) {
        const std::size_t base =
            (static_cast<std::size_t>(y) * g.width + x) * kObsChannels;
        write_cell(out, base, g.at(x, y), palette_perm, x == g.agent_x && y == g.agent_y);
      }
    }
    return out;
  }
  // 3x3 window centered on the agent; off-board cells read as wall
  std::vector<double> out(3 * 3 * kObsChannels, 0.0);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = g.agent_x + dx, y = g.agent_y + dy;
      const std::size_t base =
          (static_cast<std::size_t>(dy + 1) * 3 + (dx + 1)) * kObsChannels;
      const Tile t = g.in_bounds(x, y) ? g.at(x, y) : Tile::wall;
      write_cell(out, base, t, palette_perm, dx == 0 && dy == 0);
    }
  }
  return out;
}

}  // namespace metaexp::env
