#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metaexp/ad.hpp"
#include "metaexp/params.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rollout.hpp"

namespace metaexp::oracle {

// One independently verifiable claim: an observed error (or statistic) and
// the bound it must stay under.  The suites below are pure functions of the
// seed so a failure is replayable.
struct Check {
  std::string name;
  double observed = 0.0;
  double tolerance = 0.0;
  bool pass = false;
};

Check make_check(std::string name, double observed, double tolerance);
bool all_pass(const std::vector<Check>& checks);
std::string format_report(const std::vector<Check>& checks);

// --- gradient oracles (finite differences against the reverse sweep) -------

// every differentiable primitive, `instances` random-shape cases each,
// inputs sampled away from kinks and clip boundaries
std::vector<Check> fd_primitive_checks(std::uint64_t seed, int instances);

// composed programs: sum of squares, a 2-layer tanh net, a 3-step recurrent
// rollout surrogate with frozen actions, and a differentiated-through
// gradient step (the second-order path)
std::vector<Check> fd_composed_checks(std::uint64_t seed);

// --- enumerable meta-MDP (the estimator oracles' test bed) ------------------

// Softmax policy with one independent logits row per state.  Observations are
// one-hot state encodings, so action probabilities are exact softmaxes of raw
// parameters and every trajectory probability is available in closed form.
class TabularPolicy : public rl::Policy {
 public:
  TabularPolicy(int n_states, int n_actions);

  ParamVector init_params(Rng&) const override;  // zeros: the uniform policy
  ad::Tensor logits(const ParamVector& params, std::span<const double> obs) const override;
  int n_actions() const override { return n_actions_; }
  int n_states() const { return n_states_; }

 private:
  int n_states_;
  int n_actions_;
};

// Deterministic two-step decision tree with two actions: the first action
// branches from the root to one of two leaf states, the second action ends
// the episode.  A task is one reward table, so each task has exactly four
// trajectories and expectations over (explore, exploit) pairs are small sums.
struct EnumTask {
  double reward[3][2] = {};  // [state][action]; state 0 = root, 1 + a = leaves
};

struct EnumMdp {
  static constexpr int kStates = 3;
  static constexpr int kActions = 2;
  static constexpr int kSteps = 2;
  std::vector<EnumTask> tasks;  // equally weighted
};

EnumMdp default_enum_mdp();  // two tasks with opposing action preferences

// undiscounted return of the (a0, a1) trajectory
double enum_return(const EnumTask& task, int a0, int a1);

// probability of the (a0, a1) trajectory under params, differentiable when
// params are tape-attached
ad::Tensor enum_traj_prob(const rl::Policy& policy, const ParamVector& params, int a0, int a1);

// the (a0, a1) trajectory exactly as collection would record it, with
// log-probs evaluated under the (detached) sampling parameters
rl::Trajectory enum_trajectory(const EnumTask& task, int a0, int a1, const rl::Policy& policy,
                               const ParamVector& sampling_params, bool explore_flag);

// one sampled trajectory (used by the variance-ordering comparison)
rl::Trajectory enum_sample_trajectory(const EnumTask& task, const rl::Policy& policy,
                                      const ParamVector& params, Rng& rng, bool explore_flag);

// --- estimator oracles (enumerable meta-MDP, brute-force expectations) -----

// exhaustive-expectation gradient of each meta objective vs the exactly
// differentiated (and finite-difference checked) true objective on the
// enumerable problem; includes both exploration credit modes, the
// held-fixed-sampling baseline, the closed-form score-function cases and the
// credit-mode variance ordering
std::vector<Check> estimator_checks(std::uint64_t seed);

// --- environment oracles ----------------------------------------------------

// rulebook facts checked mechanically across many generated layouts:
// connectivity, reward accounting, observation relabeling equivariance
std::vector<Check> env_checks(std::uint64_t seed);

}  // namespace metaexp::oracle
