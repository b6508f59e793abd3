#include "metaexp/rl2.hpp"

namespace metaexp::meta {

void Rl2Config::validate() const {
  if (explore_episodes < 0) throw ConfigError("rl2 config: explore_episodes must be >= 0");
  if (episodes_per_trial < explore_episodes + 1) {
    throw ConfigError("rl2 config: episodes_per_trial must leave at least one exploit episode");
  }
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("rl2 config: gamma outside [0, 1]");
  if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("rl2 config: clip_eps outside (0, 1)");
}

int TrialData::total_steps() const {
  int n = 0;
  for (const rl::Trajectory& t : episodes) n += t.length();
  return n;
}

PrevTransition rl2_prev_transition(std::span<const rl::Trajectory> episodes, int episode,
                                   int step) {
  check(episode >= 0 && episode < static_cast<int>(episodes.size()),
        "rl2_prev_transition: episode out of range");
  const rl::Trajectory& e = episodes[static_cast<std::size_t>(episode)];
  check(step >= 0 && step < e.length(), "rl2_prev_transition: step out of range");
  if (step > 0) {
    const auto i = static_cast<std::size_t>(step - 1);
    return {e.actions[i], e.rewards[i], 0.0};
  }
  if (episode == 0) return {-1, 0.0, 0.0};  // trial start: previous-step fields are zeros
  const rl::Trajectory& prev = episodes[static_cast<std::size_t>(episode - 1)];
  check(prev.length() > 0, "rl2_prev_transition: empty previous episode");
  const auto last = static_cast<std::size_t>(prev.length() - 1);
  return {prev.actions[last], prev.rewards[last], 1.0};
}

TrialData rl2_trial(env::Env& e, const rl::GruPolicy& policy, const ParamVector& params,
                    const Rl2Config& cfg, int horizon, Rng& rng, std::int64_t task_index) {
  cfg.validate();
  check(horizon >= 1, "rl2_trial: horizon must be at least 1");
  const int obs_len = e.obs_len();
  const int n_actions = e.n_actions();
  check(policy.config().input_len == rl::rl2_input_len(obs_len, n_actions),
        "rl2_trial: rnn input width does not match the task's observation/action sizes");
  check(policy.config().n_actions == n_actions,
        "rl2_trial: rnn action head does not match the task's action count");

  TrialData trial;
  trial.spec = e.task();
  trial.task_index = task_index;
  ad::Tensor h = policy.initial_state();
  int prev_action = -1;
  double prev_reward = 0.0;
  for (int ep = 0; ep < cfg.episodes_per_trial; ++ep) {
    rl::Trajectory traj;
    traj.explore_flag = ep < cfg.explore_episodes;
    traj.task_index = task_index;
    std::vector<double> obs = e.reset(rng);
    for (int t = 0; t < horizon; ++t) {
      const double boundary = (ep > 0 && t == 0) ? 1.0 : 0.0;
      const auto x = rl::rl2_input(obs, prev_action, prev_reward, boundary, obs_len, n_actions);
      auto [logits, h_next] =
          policy.step(params, h, ad::Tensor::constant({static_cast<int>(x.size())}, x));
      h = std::move(h_next);
      const rl::ActionSample s = rl::sample_action(logits, rng);
      const env::StepResult r = e.step(s.action);
      traj.observations.push_back(std::move(obs));
      traj.actions.push_back(s.action);
      traj.rewards.push_back(r.reward);
      traj.dones.push_back(r.done ? 1 : 0);
      traj.log_probs.push_back(s.log_prob.item());
      prev_action = s.action;
      prev_reward = r.reward;
      obs = r.obs;
      if (r.done) break;
    }
    traj.info = e.info();
    traj.validate();
    trial.episodes.push_back(std::move(traj));
  }
  return trial;
}

namespace {

ad::Tensor trial_surrogate(std::span<const TrialData> trials, const rl::GruPolicy& policy,
                           const ParamVector& params, const Rl2Config& cfg, bool masked) {
  cfg.validate();
  check(!trials.empty(), "rl2 surrogate: empty trial batch");
  const int n_actions = policy.config().n_actions;

  std::vector<double> advantages;
  for (const TrialData& trial : trials) {
    check(!trial.episodes.empty(), "rl2 surrogate: empty trial");
    std::vector<double> targets;
    if (masked) {
      targets = rl::masked_returns(trial.episodes, cfg.gamma);
    } else {
      std::vector<double> rewards;
      for (const rl::Trajectory& t : trial.episodes) {
        rewards.insert(rewards.end(), t.rewards.begin(), t.rewards.end());
      }
      targets = rl::discounted_returns(rewards, cfg.gamma);
    }
    advantages.insert(advantages.end(), targets.begin(), targets.end());
  }
  if (cfg.normalize_adv) rl::normalize_advantages(advantages);

  std::vector<rl::StepTerm> terms;
  terms.reserve(advantages.size());
  std::size_t k = 0;
  for (const TrialData& trial : trials) {
    ad::Tensor h = policy.initial_state();
    for (int ep = 0; ep < static_cast<int>(trial.episodes.size()); ++ep) {
      const rl::Trajectory& traj = trial.episodes[static_cast<std::size_t>(ep)];
      const int obs_len = static_cast<int>(traj.observations.at(0).size());
      for (int t = 0; t < traj.length(); ++t) {
        const auto idx = static_cast<std::size_t>(t);
        const PrevTransition prev = rl2_prev_transition(trial.episodes, ep, t);
        const auto x = rl::rl2_input(traj.observations[idx], prev.action, prev.reward,
                                     prev.boundary, obs_len, n_actions);
        auto [logits, h_next] =
            policy.step(params, h, ad::Tensor::constant({static_cast<int>(x.size())}, x));
        h = std::move(h_next);
        terms.push_back({ad::log_softmax(logits), traj.actions[idx], traj.log_probs[idx],
                         advantages[k++]});
      }
    }
  }
  return rl::surrogate_loss(
      terms, {.kind = cfg.outer_kind, .clip_eps = cfg.clip_eps, .ent_coeff = cfg.ent_coeff});
}

}  // namespace

ad::Tensor rl2_surrogate(std::span<const TrialData> trials, const rl::GruPolicy& policy,
                         const ParamVector& params, const Rl2Config& cfg) {
  return trial_surrogate(trials, policy, params, cfg, /*masked=*/false);
}

ad::Tensor erl2_surrogate(std::span<const TrialData> trials, const rl::GruPolicy& policy,
                          const ParamVector& params, const Rl2Config& cfg) {
  return trial_surrogate(trials, policy, params, cfg, /*masked=*/true);
}

}  // namespace metaexp::meta
