#pragma once

#include <span>

#include "metaexp/env.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rollout.hpp"
#include "metaexp/surrogate.hpp"

namespace metaexp::meta {

struct Rl2Config {
  int episodes_per_trial = 5;  // k consecutive episodes on one task
  int explore_episodes = 3;    // p, the trial prefix flagged as exploration
  double gamma = 0.99;
  rl::SurrogateKind outer_kind = rl::SurrogateKind::ppo_clip;
  double clip_eps = 0.2;
  double ent_coeff = 1e-3;
  bool normalize_adv = true;

  void validate() const;  // requires k >= p + 1
};

// One trial: k episodes on the same task, recurrent state carried across the
// episode boundaries and zeroed only at the trial start.
struct TrialData {
  env::TaskSpec spec;
  std::int64_t task_index = -1;
  std::vector<rl::Trajectory> episodes;  // first explore_episodes are explore-flagged

  int total_steps() const;
};

// the previous-transition fields feeding the rnn input at (episode, step):
// zeros at the trial start, carried across episode boundaries with the
// boundary flag raised on the first step of every later episode
struct PrevTransition {
  int action = -1;
  double reward = 0.0;
  double boundary = 0.0;
};
PrevTransition rl2_prev_transition(std::span<const rl::Trajectory> episodes, int episode,
                                   int step);

TrialData rl2_trial(env::Env& e, const rl::GruPolicy& policy, const ParamVector& params,
                    const Rl2Config& cfg, int horizon, Rng& rng, std::int64_t task_index = -1);

// Unrolls the rnn over the stored trial (params may be tape-attached),
// recomputes per-step log-probs, and scores them against return-to-go
// advantages.  The standard variant targets the true trial rewards; the
// exploration-masked variant zeroes explore-episode rewards in the targets
// while the forward pass always sees the true rewards.
ad::Tensor rl2_surrogate(std::span<const TrialData> trials, const rl::GruPolicy& policy,
                         const ParamVector& params, const Rl2Config& cfg);
ad::Tensor erl2_surrogate(std::span<const TrialData> trials, const rl::GruPolicy& policy,
                          const ParamVector& params, const Rl2Config& cfg);

}  // namespace metaexp::meta
