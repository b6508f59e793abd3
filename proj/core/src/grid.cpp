#include <sstream>

#include "metaexp/env.hpp"

namespace metaexp::env {

const char* tile_name(Tile t) {
  switch (t) {
    case Tile::normal: return "normal";
    case Tile::goal: return "goal";
    case Tile::ice: return "ice";
    case Tile::death: return "death";
    case Tile::wall: return "wall";
    case Tile::lock: return "lock";
    case Tile::key: return "key";
    case Tile::teleporter: return "teleporter";
    case Tile::energy: return "energy";
  }
  return "?";
}

const char* family_name(Family f) {
  switch (f) {
    case Family::krazy: return "krazy";
    case Family::maze: return "maze";
    case Family::pointmass: return "pointmass";
  }
  return "?";
}

std::optional<Family> family_from_name(const std::string& name) {
  if (name == "krazy") return Family::krazy;
  if (name == "maze") return Family::maze;
  if (name == "pointmass") return Family::pointmass;
  return std::nullopt;
}

void GridState::validate() const {
  check(width > 0 && height > 0, "GridState: non-positive dimensions");
  check(tiles.size() == static_cast<std::size_t>(width) * height, "GridState: tile count mismatch");
  check(in_bounds(agent_x, agent_y), "GridState: agent out of bounds");
  check(energy >= 0, "GridState: negative energy");
  check(goal_taken.empty() || goal_taken.size() == tiles.size(),
        "GridState: goal_taken size mismatch");
  int teleporters = 0;
  for (Tile t : tiles) {
    if (t == Tile::teleporter) ++teleporters;
  }
  check(teleporters == 0 || teleporters == 2, "GridState: teleporters must come as one pair");
}

void TaskSpec::validate() const {
  check(horizon >= 1, "TaskSpec: horizon must be at least 1");
  std::array<bool, 8> seen8{};
  for (std::uint8_t p : palette_perm) {
    check(p < 8, "TaskSpec: palette_perm entry out of range");
    check(!seen8[p], "TaskSpec: palette_perm is not a permutation");
    seen8[p] = true;
  }
  std::array<bool, 4> seen4{};
  for (std::uint8_t p : dynamics_perm) {
    check(p < 4, "TaskSpec: dynamics_perm entry out of range");
    check(!seen4[p], "TaskSpec: dynamics_perm is not a permutation");
    seen4[p] = true;
  }
}

double tile_fraction(const EpisodeInfo& info) {
  int touched = 0;
  for (int t = 0; t < 9; ++t) {
    if (t == static_cast<int>(Tile::wall)) continue;  // never stood on
    if (info.touched_types & (1u << t)) ++touched;
  }
  return static_cast<double>(touched) / kVisitableTileTypes;
}

namespace {

char tile_char(Tile t) {
  switch (t) {
    case Tile::normal: return '.';
    case Tile::goal: return 'G';
    case Tile::ice: return 'I';
    case Tile::death: return 'D';
    case Tile::wall: return '#';
    case Tile::lock: return 'L';
    case Tile::key: return 'K';
    case Tile::teleporter: return 'T';
    case Tile::energy: return 'E';
  }
  return '?';
}

Tile tile_from_char(char c) {
  switch (c) {
    case '.': return Tile::normal;
    case 'G': return Tile::goal;
    case 'I': return Tile::ice;
    case 'D': return Tile::death;
    case '#': return Tile::wall;
    case 'L': return Tile::lock;
    case 'K': return Tile::key;
    case 'T': return Tile::teleporter;
    case 'E': return Tile::energy;
    default: throw ContractViolation(std::string("load_grid: unknown tile character '") + c + "'");
  }
}

}  // namespace

std::string dump_grid(const GridState& g) {
  g.validate();
  std::ostringstream out;
  out << g.width << " " << g.height << " " << g.agent_x << " " << g.agent_y << " " << g.energy
      << " " << g.keys_held << "\n";
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) out << tile_char(g.at(x, y));
    out << "\n";
  }
  return out.str();
}

GridState load_grid(const std::string& text) {
  std::istringstream in(text);
  GridState g;
  in >> g.width >> g.height >> g.agent_x >> g.agent_y >> g.energy >> g.keys_held;
  check(static_cast<bool>(in), "load_grid: malformed header");
  g.tiles.resize(static_cast<std::size_t>(g.width) * g.height, Tile::normal);
  std::string row;
  std::getline(in, row);  // rest of the header line
  for (int y = 0; y < g.height; ++y) {
    check(static_cast<bool>(std::getline(in, row)), "load_grid: missing row");
    check(static_cast<int>(row.size()) == g.width, "load_grid: row width mismatch");
    for (int x = 0; x < g.width; ++x) g.set(x, y, tile_from_char(row[static_cast<std::size_t>(x)]));
  }
  g.goal_taken.assign(g.tiles.size(), 0);
  g.validate();
  return g;
}

}  // namespace metaexp::env
