#pragma once

#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "metaexp/ad.hpp"
#include "metaexp/env.hpp"
#include "metaexp/rng.hpp"

namespace metaexp::rl {

// One episode as recorded during collection.  observations[t] is what the
// agent saw when it chose actions[t]; log_probs are the sampling-time
// log-likelihoods the PPO ratio is taken against.
struct Trajectory {
  std::vector<std::vector<double>> observations;
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> log_probs;
  bool explore_flag = false;  // exploration episodes are excluded from masked returns
  std::int64_t task_index = -1;
  env::EpisodeInfo info;

  int length() const { return static_cast<int>(actions.size()); }
  double total_reward() const;
  void validate() const;
};

using PolicyFn = std::function<ad::Tensor(std::span<const double> obs)>;

// Runs one episode: reset, then act until done or `horizon` steps.
Trajectory collect_rollout(env::Env& e, const PolicyFn& policy, int horizon, Rng& rng,
                           bool explore_flag = false, std::int64_t task_index = -1);

// debug dump: one line per timestep, tab-separated
// t, action, reward, done, log_prob, explore_flag
void dump_trajectory(std::ostream& out, const Trajectory& t);

// reward-to-go: out[t] = sum_{j>=t} gamma^(j-t) * r[j]
std::vector<double> discounted_returns(std::span<const double> rewards, double gamma);

// Reward-to-go over the episodes of one trial laid end to end, with rewards
// collected during exploration episodes zeroed before summation -- the
// exploration steps still receive credit from later exploitation rewards.
// With no exploration episodes this reduces exactly to discounted_returns on
// the concatenation.  A trial without any exploitation episode has no
// learning signal and is rejected.
std::vector<double> masked_returns(std::span<const Trajectory> trial, double gamma);

// generalized advantage estimation over one episode; values has one entry
// per timestep plus a trailing bootstrap entry
std::vector<double> gae_advantages(const Trajectory& traj, std::span<const double> values,
                                   double gamma, double lambda);

struct NormStats {
  double mean = 0.0;
  double stddev = 1.0;
  bool applied = false;
};
// in-place shift to zero mean / unit variance; batches too small or too flat
// to normalize are left untouched (reported via the return value)
NormStats normalize_advantages(std::span<double> advantages);

}  // namespace metaexp::rl
