#include <algorithm>

#include "metaexp/env.hpp"

namespace metaexp::env {

namespace {

constexpr int kDx[4] = {0, 1, 0, -1};
constexpr int kDy[4] = {-1, 0, 1, 0};

}  // namespace

// Depth-first carve on the odd lattice (recursive backtracker, explicit
// stack).  A requested side of n yields an odd board of n|1 cells with a
// solid border, so a 20x20 request plays on the inner 19x19 region.
GridState maze_generate(std::uint64_t layout_seed, int size) {
  check(size >= 5, "maze_generate: size must be at least 5");
  const int n = size | 1;
  GridState g;
  g.width = n;
  g.height = n;
  g.tiles.assign(static_cast<std::size_t>(n) * n, Tile::wall);
  g.goal_taken.assign(g.tiles.size(), 0);

  Rng rng(layout_seed);
  const int cells = (n - 1) / 2;  // lattice cells sit at odd coordinates
  auto carve = [&](int x, int y) { g.set(x, y, Tile::normal); };

  std::vector<std::uint8_t> visited(static_cast<std::size_t>(cells) * cells, 0);
  auto cell_id = [&](int cx, int cy) { return static_cast<std::size_t>(cy) * cells + cx; };

  std::vector<std::pair<int, int>> stack;
  const int sx = static_cast<int>(rng.below(static_cast<std::uint64_t>(cells)));
  const int sy = static_cast<int>(rng.below(static_cast<std::uint64_t>(cells)));
  stack.emplace_back(sx, sy);
  visited[cell_id(sx, sy)] = 1;
  carve(2 * sx + 1, 2 * sy + 1);

  while (!stack.empty()) {
    auto [cx, cy] = stack.back();
    int dirs[4] = {0, 1, 2, 3};
    rng.shuffle(std::span<int>(dirs));
    bool advanced = false;
    for (int d : dirs) {
      const int nx = cx + kDx[d], ny = cy + kDy[d];
      if (nx < 0 || nx >= cells || ny < 0 || ny >= cells || visited[cell_id(nx, ny)]) continue;
      visited[cell_id(nx, ny)] = 1;
      carve(2 * cx + 1 + kDx[d], 2 * cy + 1 + kDy[d]);  // knock through the wall between
      carve(2 * nx + 1, 2 * ny + 1);
      stack.emplace_back(nx, ny);
      advanced = true;
      break;
    }
    if (!advanced) stack.pop_back();
  }

  // goal at a uniformly drawn dead end
  auto ends = maze_dead_ends(g);
  check(!ends.empty(), "maze_generate: maze has no dead ends");
  const auto [gx, gy] = ends[static_cast<std::size_t>(rng.below(ends.size()))];
  g.set(gx, gy, Tile::goal);

  g.agent_x = 2 * sx + 1;  // placeholder; reset() draws the real start
  g.agent_y = 2 * sy + 1;
  g.validate();
  return g;
}

std::vector<std::pair<int, int>> maze_dead_ends(const GridState& g) {
  std::vector<std::pair<int, int>> ends;
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      if (g.at(x, y) == Tile::wall) continue;
      int open = 0;
      for (int d = 0; d < 4; ++d) {
        const int nx = x + kDx[d], ny = y + kDy[d];
        if (g.in_bounds(nx, ny) && g.at(nx, ny) != Tile::wall) ++open;
      }
      if (open == 1) ends.emplace_back(x, y);
    }
  }
  return ends;
}

namespace {

class MazeEnv final : public Env {
 public:
  MazeEnv(GridState pristine, TaskSpec spec, MazeConfig cfg, ObsMode mode,
          std::optional<std::pair<int, int>> fixed_start)
      : pristine_(std::move(pristine)),
        spec_(spec),
        cfg_(cfg),
        mode_(mode),
        fixed_start_(fixed_start) {
    spec_.validate();
    pristine_.validate();
  }

  std::vector<double> reset(Rng& rng) override {
    g_ = pristine_;
    if (fixed_start_) {
      g_.agent_x = fixed_start_->first;
      g_.agent_y = fixed_start_->second;
    } else {
      std::vector<int> open;
      for (int i = 0; i < g_.width * g_.height; ++i) {
        if (g_.tiles[static_cast<std::size_t>(i)] != Tile::wall) open.push_back(i);
      }
      // start must differ from the goal; re-draw until it does
      int cell;
      do {
        cell = open[static_cast<std::size_t>(rng.below(open.size()))];
      } while (g_.tiles[static_cast<std::size_t>(cell)] == Tile::goal);
      g_.agent_x = cell % g_.width;
      g_.agent_y = cell / g_.width;
    }
    done_ = false;
    info_ = EpisodeInfo{};
    info_.touched_types |= 1u << static_cast<int>(g_.at(g_.agent_x, g_.agent_y));
    return encode_observation(g_, spec_.palette_perm, mode_);
  }

  StepResult step(int action) override {
    check(!done_, "MazeEnv::step: episode already finished");
    check(action >= 0 && action < 4, "MazeEnv::step: action out of range");
    ++info_.steps;
    StepResult r;
    const int a = spec_.dynamics_perm[static_cast<std::size_t>(action)];
    const int x = g_.agent_x + kDx[a], y = g_.agent_y + kDy[a];
    if (!g_.in_bounds(x, y) || g_.at(x, y) == Tile::wall) {
      r.reward -= cfg_.wall_penalty;  // bumping costs a little; position unchanged
      ++info_.wall_bumps;
    } else {
      g_.agent_x = x;
      g_.agent_y = y;
      info_.touched_types |= 1u << static_cast<int>(g_.at(x, y));
      if (g_.at(x, y) == Tile::goal) {
        r.reward += 1.0;
        ++info_.goals_reached;
        done_ = true;
      }
    }
    r.done = done_;
    r.obs = encode_observation(g_, spec_.palette_perm, mode_);
    return r;
  }

  int obs_len() const override { return observation_len(mode_, pristine_.width, pristine_.height); }
  const EpisodeInfo& info() const override { return info_; }
  const TaskSpec& task() const override { return spec_; }

 private:
  GridState pristine_;
  TaskSpec spec_;
  MazeConfig cfg_;
  ObsMode mode_;
  std::optional<std::pair<int, int>> fixed_start_;
  GridState g_;
  EpisodeInfo info_;
  bool done_ = true;
};

}  // namespace

std::unique_ptr<Env> make_maze_env(GridState pristine, const TaskSpec& spec, const MazeConfig& cfg,
                                   ObsMode mode, std::optional<std::pair<int, int>> start) {
  return std::make_unique<MazeEnv>(std::move(pristine), spec, cfg, mode, start);
}

}  // namespace metaexp::env
