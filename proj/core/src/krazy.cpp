#include <algorithm>
#include <numeric>

#include "metaexp/env.hpp"

namespace metaexp::env {

namespace {

constexpr int kDx[4] = {0, 1, 0, -1};  // 0=up 1=right 2=down 3=left
constexpr int kDy[4] = {-1, 0, 1, 0};

}  // namespace

GridState krazy_generate(std::uint64_t layout_seed, const KrazyConfig& cfg) {
  check(cfg.width >= 3 && cfg.height >= 3, "krazy_generate: board too small");
  const int cells = cfg.width * cfg.height;
  const int special = cfg.n_goal + cfg.n_death + cfg.n_ice + cfg.n_wall + cfg.n_lock + cfg.n_key +
                      2 * cfg.n_teleporter_pairs + cfg.n_energy;
  check(cfg.n_teleporter_pairs <= 1, "krazy_generate: at most one teleporter pair supported");
  check(special < cells, "krazy_generate: tile densities leave no floor");

  Rng rng(layout_seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    GridState g;
    g.width = cfg.width;
    g.height = cfg.height;
    g.tiles.assign(static_cast<std::size_t>(cells), Tile::normal);
    g.goal_taken.assign(static_cast<std::size_t>(cells), 0);
    g.energy = cfg.initial_energy;

    std::vector<int> order(static_cast<std::size_t>(cells));
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<int>(order));
    std::size_t next = 0;
    auto place = [&](Tile t, int count) {
      for (int i = 0; i < count; ++i) g.tiles[static_cast<std::size_t>(order[next++])] = t;
    };
    place(Tile::goal, cfg.n_goal);
    place(Tile::death, cfg.n_death);
    place(Tile::ice, cfg.n_ice);
    place(Tile::wall, cfg.n_wall);
    place(Tile::lock, cfg.n_lock);
    place(Tile::key, cfg.n_key);
    place(Tile::teleporter, 2 * cfg.n_teleporter_pairs);
    place(Tile::energy, cfg.n_energy);

    bool has_floor = false;
    for (Tile t : g.tiles) has_floor |= t == Tile::normal;
    if (!has_floor) continue;  // degenerate draw; try a fresh layout

    g.agent_x = order[next] % cfg.width;  // placeholder; reset() draws the real start
    g.agent_y = order[next] / cfg.width;
    g.validate();
    return g;
  }
  throw ContractViolation("krazy_generate: no passable start cell after 100 layout attempts");
}

namespace {

class KrazyEnv final : public Env {
 public:
  KrazyEnv(GridState pristine, TaskSpec spec, KrazyConfig cfg, ObsMode mode,
           std::optional<std::pair<int, int>> fixed_start)
      : pristine_(std::move(pristine)),
        spec_(spec),
        cfg_(cfg),
        mode_(mode),
        fixed_start_(fixed_start) {
    spec_.validate();
    pristine_.validate();
    slide_cap_ = std::max(pristine_.width, pristine_.height);
  }

  std::vector<double> reset(Rng& rng) override {
    g_ = pristine_;
    g_.energy = cfg_.initial_energy;
    g_.keys_held = 0;
    g_.goal_taken.assign(g_.tiles.size(), 0);
    if (fixed_start_) {
      g_.agent_x = fixed_start_->first;
      g_.agent_y = fixed_start_->second;
      check(g_.in_bounds(g_.agent_x, g_.agent_y), "KrazyEnv: fixed start out of bounds");
    } else {
      std::vector<int> floor;
      for (int i = 0; i < g_.width * g_.height; ++i) {
        if (g_.tiles[static_cast<std::size_t>(i)] == Tile::normal) floor.push_back(i);
      }
      check(!floor.empty(), "KrazyEnv: no floor cell to start on");
      const int cell = floor[static_cast<std::size_t>(rng.below(floor.size()))];
      g_.agent_x = cell % g_.width;
      g_.agent_y = cell / g_.width;
    }
    done_ = false;
    info_ = EpisodeInfo{};
    touch(g_.agent_x, g_.agent_y);
    return encode_observation(g_, spec_.palette_perm, mode_);
  }

  StepResult step(int action) override {
    check(!done_, "KrazyEnv::step: episode already finished");
    check(action >= 0 && action < 4, "KrazyEnv::step: action out of range");
    ++info_.steps;
    StepResult r;

    const int a = spec_.dynamics_perm[static_cast<std::size_t>(action)];
    // out of energy: the agent can no longer move, but time still passes
    if (g_.energy > 0) {
      const int dx = kDx[a], dy = kDy[a];
      int x = g_.agent_x + dx, y = g_.agent_y + dy;
      if (blocked(x, y)) {
        ++info_.wall_bumps;
      } else {
        g_.agent_x = x;
        g_.agent_y = y;
        g_.energy -= 1;  // one unit per move; sliding and teleporting ride free
        touch(x, y);
        // ice carries the agent onward until ground or an obstruction
        int slides = 0;
        while (g_.at(g_.agent_x, g_.agent_y) == Tile::ice) {
          const int nx = g_.agent_x + dx, ny = g_.agent_y + dy;
          if (blocked(nx, ny)) break;
          g_.agent_x = nx;
          g_.agent_y = ny;
          touch(nx, ny);
          check(++slides <= slide_cap_, "KrazyEnv: ice slide exceeded board span");
        }
        if (g_.at(g_.agent_x, g_.agent_y) == Tile::teleporter) {
          auto [tx, ty] = paired_teleporter(g_.agent_x, g_.agent_y);
          g_.agent_x = tx;
          g_.agent_y = ty;
          touch(tx, ty);
        }
        apply_tile_effect(r);
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
  bool blocked(int x, int y) const {
    if (!g_.in_bounds(x, y)) return true;
    const Tile t = g_.at(x, y);
    if (t == Tile::wall) return true;
    if (t == Tile::lock && g_.keys_held == 0) return true;
    return false;
  }

  std::pair<int, int> paired_teleporter(int x, int y) const {
    for (int i = 0; i < g_.width * g_.height; ++i) {
      if (g_.tiles[static_cast<std::size_t>(i)] != Tile::teleporter) continue;
      const int px = i % g_.width, py = i / g_.width;
      if (px != x || py != y) return {px, py};
    }
    throw ContractViolation("KrazyEnv: teleporter has no pair");
  }

  void apply_tile_effect(StepResult& r) {
    const int x = g_.agent_x, y = g_.agent_y;
    const std::size_t cell = static_cast<std::size_t>(y) * g_.width + x;
    switch (g_.at(x, y)) {
      case Tile::goal:
        if (!g_.goal_taken[cell]) {
          g_.goal_taken[cell] = 1;
          r.reward += 1.0;  // each goal cell pays once; the episode keeps going
          ++info_.goals_reached;
          g_.set(x, y, Tile::normal);
        }
        break;
      case Tile::key:
        g_.keys_held |= 1u;
        g_.set(x, y, Tile::normal);
        break;
      case Tile::energy:
        g_.energy += cfg_.energy_refill;
        g_.set(x, y, Tile::normal);
        break;
      case Tile::death:
        done_ = true;
        ++info_.deaths;
        break;
      default:
        break;
    }
  }

  void touch(int x, int y) { info_.touched_types |= 1u << static_cast<int>(g_.at(x, y)); }

  GridState pristine_;
  TaskSpec spec_;
  KrazyConfig cfg_;
  ObsMode mode_;
  std::optional<std::pair<int, int>> fixed_start_;
  GridState g_;
  EpisodeInfo info_;
  bool done_ = true;
  int slide_cap_ = 0;
};

}  // namespace

std::unique_ptr<Env> make_krazy_env(GridState pristine, const TaskSpec& spec,
                                    const KrazyConfig& cfg, ObsMode mode,
                                    std::optional<std::pair<int, int>> start) {
  return std::make_unique<KrazyEnv>(std::move(pristine), spec, cfg, mode, start);
}

}  // namespace metaexp::env
