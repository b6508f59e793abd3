#include <cmath>
#include <cstring>
#include <queue>

#include "metaexp/env.hpp"
#include "metaexp/oracle.hpp"

namespace metaexp::oracle {

namespace {

using env::EnvConfig;
using env::Family;
using env::GridState;
using env::ObsMode;
using env::TaskSpec;
using env::Tile;

// corridor-to-corridor flood fill; true when every non-wall cell is reachable
// from the agent's cell
bool fully_connected(const GridState& g) {
  std::vector<std::uint8_t> seen(g.tiles.size(), 0);
  std::queue<std::pair<int, int>> q;
  q.push({g.agent_x, g.agent_y});
  seen[static_cast<std::size_t>(g.agent_y) * g.width + g.agent_x] = 1;
  const int dx[4] = {0, 1, 0, -1}, dy[4] = {-1, 0, 1, 0};
  while (!q.empty()) {
    auto [x, y] = q.front();
    q.pop();
    for (int d = 0; d < 4; ++d) {
      const int nx = x + dx[d], ny = y + dy[d];
      if (!g.in_bounds(nx, ny) || g.at(nx, ny) == Tile::wall) continue;
      auto& s = seen[static_cast<std::size_t>(ny) * g.width + nx];
      if (!s) {
        s = 1;
        q.push({nx, ny});
      }
    }
  }
  for (std::size_t i = 0; i < g.tiles.size(); ++i) {
    if (g.tiles[i] != Tile::wall && !seen[i]) return false;
  }
  return true;
}

double maze_connectivity_failures(std::uint64_t seed, int layouts) {
  int failures = 0;
  for (int i = 0; i < layouts; ++i) {
    GridState g = env::maze_generate(mix_key(seed, {0xa3e1u, static_cast<std::uint64_t>(i)}), 20);
    // start anywhere on a corridor; generator leaves the agent on one
    if (!fully_connected(g)) ++failures;
  }
  return failures;
}

double dynamics_equivariance_gap(std::uint64_t seed, int tasks) {
  EnvConfig cfg;
  double gap = 0.0;
  for (int i = 0; i < tasks; ++i) {
    Rng task_rng = Rng::from_key(seed, {0xd19u, static_cast<std::uint64_t>(i)});
    TaskSpec permuted = env::sample_task(Family::krazy, task_rng, cfg);
    permuted.palette_perm = {0, 1, 2, 3, 4, 5, 6, 7};  // isolate the dynamics swap
    TaskSpec identity = permuted;
    identity.dynamics_perm = {0, 1, 2, 3};

    auto ep = env::make_env(permuted, cfg);
    auto ei = env::make_env(identity, cfg);
    Rng rp = Rng::from_key(seed, {0xd20u, static_cast<std::uint64_t>(i)});
    Rng ri = Rng::from_key(seed, {0xd20u, static_cast<std::uint64_t>(i)});
    std::vector<double> op = ep->reset(rp);
    std::vector<double> oi = ei->reset(ri);
    Rng act = Rng::from_key(seed, {0xd21u, static_cast<std::uint64_t>(i)});
    for (int t = 0; t < 48; ++t) {
      for (std::size_t k = 0; k < op.size(); ++k) gap = std::max(gap, std::abs(op[k] - oi[k]));
      const int a = static_cast<int>(act.below(4));
      // acting a under the permuted task must equal acting perm(a) under the
      // identity task
      auto sp = ep->step(a);
      auto si = ei->step(static_cast<int>(permuted.dynamics_perm[static_cast<std::size_t>(a)]));
      gap = std::max(gap, std::abs(sp.reward - si.reward));
      gap = std::max(gap, sp.done == si.done ? 0.0 : 1.0);
      op = sp.obs;
      oi = si.obs;
      if (sp.done || si.done) break;
    }
  }
  return gap;
}

double palette_covariance_gap(std::uint64_t seed, int tasks) {
  EnvConfig cfg;
  cfg.obs_mode = ObsMode::global;
  double gap = 0.0;
  for (int i = 0; i < tasks; ++i) {
    Rng task_rng = Rng::from_key(seed, {0x9a1u, static_cast<std::uint64_t>(i)});
    TaskSpec colored = env::sample_task(Family::krazy, task_rng, cfg);
    colored.dynamics_perm = {0, 1, 2, 3};  // isolate the color swap
    TaskSpec plain = colored;
    plain.palette_perm = {0, 1, 2, 3, 4, 5, 6, 7};

    auto ec = env::make_env(colored, cfg);
    auto eb = env::make_env(plain, cfg);
    Rng rc = Rng::from_key(seed, {0x9a2u, static_cast<std::uint64_t>(i)});
    Rng rb = Rng::from_key(seed, {0x9a2u, static_cast<std::uint64_t>(i)});
    std::vector<double> oc = ec->reset(rc);
    std::vector<double> ob = eb->reset(rb);
    Rng act = Rng::from_key(seed, {0x9a3u, static_cast<std::uint64_t>(i)});
    for (int t = 0; t < 16; ++t) {
      const std::size_t cells = oc.size() / env::kObsChannels;
      for (std::size_t c = 0; c < cells; ++c) {
        const double* bc = oc.data() + c * env::kObsChannels;
        const double* bb = ob.data() + c * env::kObsChannels;
        for (int ch = 0; ch < env::kSpecialTileTypes; ++ch) {
          const int mapped = colored.palette_perm[static_cast<std::size_t>(ch)];
          gap = std::max(gap, std::abs(bc[mapped] - bb[ch]));
        }
        gap = std::max(gap, std::abs(bc[8] - bb[8]));  // agent channel is color-free
      }
      const int a = static_cast<int>(act.below(4));
      auto sc = ec->step(a);
      auto sb = eb->step(a);
      gap = std::max(gap, std::abs(sc.reward - sb.reward));
      oc = sc.obs;
      ob = sb.obs;
      if (sc.done || sb.done) break;
    }
  }
  return gap;
}

double reward_conservation_excess(std::uint64_t seed, int episodes) {
  EnvConfig cfg;
  double excess = 0.0;
  for (int i = 0; i < episodes; ++i) {
    Rng task_rng = Rng::from_key(seed, {0xc0u, static_cast<std::uint64_t>(i)});
    TaskSpec spec = env::sample_task(Family::krazy, task_rng, cfg);
    auto e = env::make_env(spec, cfg);
    Rng r = Rng::from_key(seed, {0xc1u, static_cast<std::uint64_t>(i)});
    e->reset(r);
    double total = 0.0;
    for (int t = 0; t < cfg.krazy.horizon; ++t) {
      auto s = e->step(static_cast<int>(r.below(4)));
      total += s.reward;
      if (s.done) break;
    }
    excess = std::max(excess, total - cfg.krazy.n_goal);
    // distinct-goal accounting can never exceed the board's goal count
    excess = std::max(excess, static_cast<double>(e->info().goals_reached - cfg.krazy.n_goal));
  }
  return excess;
}

double replay_determinism_mismatches(std::uint64_t seed, int tasks) {
  EnvConfig cfg;
  int mismatches = 0;
  for (int i = 0; i < tasks; ++i) {
    Rng task_rng = Rng::from_key(seed, {0xde7u, static_cast<std::uint64_t>(i)});
    const TaskSpec spec = env::sample_task(Family::krazy, task_rng, cfg);
    auto run = [&](std::vector<double>& flat) {
      auto e = env::make_env(spec, cfg);
      Rng r = Rng::from_key(seed, {0xde8u, static_cast<std::uint64_t>(i)});
      auto obs = e->reset(r);
      flat.insert(flat.end(), obs.begin(), obs.end());
      Rng act = Rng::from_key(seed, {0xde9u, static_cast<std::uint64_t>(i)});
      for (int t = 0; t < 32; ++t) {
        auto s = e->step(static_cast<int>(act.below(4)));
        flat.push_back(s.reward);
        flat.insert(flat.end(), s.obs.begin(), s.obs.end());
        if (s.done) break;
      }
    };
    std::vector<double> a, b;
    run(a);
    run(b);
    if (a.size() != b.size() ||
        std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) != 0) {
      ++mismatches;
    }
  }
  return mismatches;
}

}  // namespace

std::vector<Check> env_checks(std::uint64_t seed) {
  std::vector<Check> out;
  out.push_back(make_check("env maze_connectivity_failures", maze_connectivity_failures(seed, 100), 0.0));
  out.push_back(make_check("env dynamics_equivariance_gap", dynamics_equivariance_gap(seed, 20), 0.0));
  out.push_back(make_check("env palette_covariance_gap", palette_covariance_gap(seed, 20), 0.0));
  out.push_back(make_check("env reward_conservation_excess", reward_conservation_excess(seed, 50), 0.0));
  out.push_back(make_check("env replay_determinism_mismatches", replay_determinism_mismatches(seed, 10), 0.0));
  return out;
}

}  // namespace metaexp::oracle
