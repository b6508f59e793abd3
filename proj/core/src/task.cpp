#include <numeric>

#include "metaexp/env.hpp"

namespace metaexp::env {

std::unique_ptr<Env> make_pointmass_env(const TaskSpec& spec, const PointmassConfig& cfg);

TaskSpec sample_task(Family family, Rng& rng, const EnvConfig& cfg) {
  TaskSpec t;
  t.family = family;
  t.layout_seed = rng.next_u64();
  switch (family) {
    case Family::krazy: {
      // color and control permutations are part of the task draw
      rng.shuffle(std::span<std::uint8_t>(t.palette_perm));
      rng.shuffle(std::span<std::uint8_t>(t.dynamics_perm));
      t.horizon = cfg.krazy.horizon;
      break;
    }
    case Family::maze:
      t.horizon = cfg.maze.horizon;
      break;
    case Family::pointmass:
      t.horizon = cfg.pointmass.horizon;
      break;
  }
  t.validate();
  return t;
}

std::unique_ptr<Env> make_env(const TaskSpec& spec, const EnvConfig& cfg) {
  spec.validate();
  switch (spec.family) {
    case Family::krazy:
      return make_krazy_env(krazy_generate(spec.layout_seed, cfg.krazy), spec, cfg.krazy,
                            cfg.obs_mode);
    case Family::maze:
      return make_maze_env(maze_generate(spec.layout_seed, cfg.maze.size), spec, cfg.maze,
                           cfg.obs_mode);
    case Family::pointmass:
      return make_pointmass_env(spec, cfg.pointmass);
  }
  throw ContractViolation("make_env: unknown family");
}

}  // namespace metaexp::env
