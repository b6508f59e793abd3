#include <cmath>
#include <numeric>

#include "metaexp/oracle.hpp"

namespace metaexp::oracle {

TabularPolicy::TabularPolicy(int n_states, int n_actions)
    : n_states_(n_states), n_actions_(n_actions) {
  check(n_states >= 1 && n_actions >= 2, "tabular policy: needs >= 1 state and >= 2 actions");
}

ParamVector TabularPolicy::init_params(Rng&) const {
  ParamVector p;
  p.add("table", ad::Tensor::zeros({n_states_, n_actions_}));
  return p;
}

ad::Tensor TabularPolicy::logits(const ParamVector& params, std::span<const double> obs) const {
  check(static_cast<int>(obs.size()) == n_states_,
        "tabular policy: observation length != state count");
  int state = 0;
  for (int s = 1; s < n_states_; ++s) {
    if (obs[static_cast<std::size_t>(s)] > obs[static_cast<std::size_t>(state)]) state = s;
  }
  ad::Tensor flat = ad::reshape(params.at("table"), {n_states_ * n_actions_});
  std::vector<int> idx(static_cast<std::size_t>(n_actions_));
  std::iota(idx.begin(), idx.end(), state * n_actions_);
  return ad::index_select(flat, std::move(idx));
}

EnumMdp default_enum_mdp() {
  // opposing preferences: what pays in one task costs in the other, with an
  // asymmetric leaf so neither the root nor the leaf choice is degenerate
  EnumMdp mdp;
  EnumTask a;
  a.reward[0][0] = 1.0;
  a.reward[0][1] = 0.2;
  a.reward[1][0] = 2.0;
  a.reward[1][1] = 0.5;
  a.reward[2][0] = 0.3;
  a.reward[2][1] = 1.1;
  EnumTask b;
  b.reward[0][0] = 0.1;
  b.reward[0][1] = 1.4;
  b.reward[1][0] = 0.4;
  b.reward[1][1] = 2.5;
  b.reward[2][0] = 3.0;
  b.reward[2][1] = 0.2;
  mdp.tasks = {a, b};
  return mdp;
}

namespace {

std::vector<double> one_hot(int state) {
  std::vector<double> v(EnumMdp::kStates, 0.0);
  v[static_cast<std::size_t>(state)] = 1.0;
  return v;
}

double log_prob_at(const rl::Policy& policy, const ParamVector& params, int state, int action) {
  auto lsm = ad::log_softmax(policy.logits(params.detached(), one_hot(state)));
  return lsm.values()[static_cast<std::size_t>(action)];
}

}  // namespace

double enum_return(const EnumTask& task, int a0, int a1) {
  return task.reward[0][a0] + task.reward[1 + a0][a1];
}

ad::Tensor enum_traj_prob(const rl::Policy& policy, const ParamVector& params, int a0, int a1) {
  auto step_lp = [&](int state, int action) {
    ad::Tensor lsm = ad::log_softmax(policy.logits(params, one_hot(state)));
    return ad::reshape(ad::index_select(lsm, {action}), {});
  };
  return ad::exp(ad::add(step_lp(0, a0), step_lp(1 + a0, a1)));
}

rl::Trajectory enum_trajectory(const EnumTask& task, int a0, int a1, const rl::Policy& policy,
                               const ParamVector& sampling_params, bool explore_flag) {
  rl::Trajectory t;
  t.observations = {one_hot(0), one_hot(1 + a0)};
  t.actions = {a0, a1};
  t.rewards = {task.reward[0][a0], task.reward[1 + a0][a1]};
  t.dones = {0, 1};
  t.log_probs = {log_prob_at(policy, sampling_params, 0, a0),
                 log_prob_at(policy, sampling_params, 1 + a0, a1)};
  t.explore_flag = explore_flag;
  t.validate();
  return t;
}

rl::Trajectory enum_sample_trajectory(const EnumTask& task, const rl::Policy& policy,
                                      const ParamVector& params, Rng& rng, bool explore_flag) {
  const ParamVector frozen = params.detached();
  auto a0s = rl::sample_action(policy.logits(frozen, one_hot(0)), rng);
  auto a1s = rl::sample_action(policy.logits(frozen, one_hot(1 + a0s.action)), rng);
  rl::Trajectory t = enum_trajectory(task, a0s.action, a1s.action, policy, frozen, explore_flag);
  // keep the sampling-time log-probs from the actual draw
  t.log_probs = {a0s.log_prob.item(), a1s.log_prob.item()};
  return t;
}

}  // namespace metaexp::oracle
