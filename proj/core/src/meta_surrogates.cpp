#include "metaexp/meta_surrogates.hpp"

#include <cmath>

namespace metaexp::meta {

const char* credit_mode_name(CreditMode m) {
  switch (m) {
    case CreditMode::per_timestep: return "per_timestep";
    case CreditMode::dice_scalar: return "dice_scalar";
  }
  return "?";
}

void MetaConfig::validate() const {
  if (lambda_explore < 0.0) throw ConfigError("meta config: lambda_explore must be >= 0");
  if (beta <= 0.0) throw ConfigError("meta config: beta must be positive");
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("meta config: gamma outside [0, 1]");
  if (explore_episodes < 0) throw ConfigError("meta config: explore_episodes must be >= 0");
  if (exploit_episodes < 1) throw ConfigError("meta config: exploit_episodes must be >= 1");
  if (meta_grad_steps < 1 || meta_grad_steps > 20) {
    throw ConfigError("meta config: meta_grad_steps outside 1..20");
  }
  if (meta_grad_steps > 1 && outer_kind != rl::SurrogateKind::ppo_clip) {
    throw ConfigError("meta config: meta_grad_steps > 1 requires the ppo_clip outer surrogate");
  }
  if (clip_eps <= 0.0 || clip_eps >= 1.0) throw ConfigError("meta config: clip_eps outside (0, 1)");
}

double trajectory_return(const rl::Trajectory& t, double gamma) {
  double acc = 0.0, w = 1.0;
  for (double r : t.rewards) {
    acc += w * r;
    w *= gamma;
  }
  return acc;
}

namespace {

// outer surrogate for one task's exploit batch under the adapted params
ad::Tensor task_exploit_loss(const TaskData& task, const rl::Policy& policy,
                             const MetaConfig& cfg) {
  check(!task.exploit.empty(), "meta surrogate: task has no exploit trajectories");
  std::vector<double> advantages;
  for (const rl::Trajectory& t : task.exploit) {
    check(!t.explore_flag, "meta surrogate: explore-flagged trajectory in the exploit batch");
    auto rtg = rl::discounted_returns(t.rewards, cfg.gamma);
    advantages.insert(advantages.end(), rtg.begin(), rtg.end());
  }
  if (cfg.normalize_adv) rl::normalize_advantages(advantages);

  std::vector<rl::StepTerm> terms;
  terms.reserve(advantages.size());
  std::size_t k = 0;
  for (const rl::Trajectory& t : task.exploit) {
    for (int i = 0; i < t.length(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      terms.push_back({ad::log_softmax(policy.logits(task.adapted, t.observations[idx])),
                       t.actions[idx], t.log_probs[idx], advantages[k++]});
    }
  }
  return rl::surrogate_loss(
      terms, {.kind = cfg.outer_kind, .clip_eps = cfg.clip_eps, .ent_coeff = cfg.ent_coeff});
}

bool any_on_tape(const ParamVector& p) {
  for (const auto& seg : p.segments()) {
    if (seg.value.on_tape()) return true;
  }
  return false;
}

ad::Tensor exploit_loss(const MetaBatch& batch, const rl::Policy& policy, const MetaConfig& cfg,
                        bool require_connected) {
  check(!batch.tasks.empty(), "meta surrogate: empty task batch");
  std::vector<ad::Tensor> task_losses;
  task_losses.reserve(batch.tasks.size());
  for (const TaskData& task : batch.tasks) {
    const bool connected = any_on_tape(task.adapted);
    if (inner_kind_differentiable(task.inner_kind) || require_connected) {
      check(connected, std::string("meta surrogate: adapted params are tape-disconnected "
                                   "(operator kind ") +
                           inner_kind_name(task.inner_kind) + ")");
    } else {
      check(!connected, std::string("meta surrogate: non-differentiable operator kind ") +
                            inner_kind_name(task.inner_kind) +
                            " produced tape-attached adapted params");
    }
    task_losses.push_back(task_exploit_loss(task, policy, cfg));
  }
  return ad::mean(ad::concat(task_losses));
}

}  // namespace

ad::Tensor exploration_term(std::span<const ExploreTermTask> tasks, CreditMode mode,
                            bool normalize) {
  check(!tasks.empty(), "exploration_term: empty task batch");
  std::vector<double> coeffs;  // one per explore timestep, task return broadcast
  for (const ExploreTermTask& t : tasks) {
    check(!t.log_probs.empty(), "exploration_term: task has no explore log-probs");
    for (std::size_t i = 0; i < t.log_probs.size(); ++i) coeffs.push_back(t.exploit_return);
  }
  if (mode == CreditMode::per_timestep && normalize) rl::normalize_advantages(coeffs);

  std::vector<ad::Tensor> task_terms;
  task_terms.reserve(tasks.size());
  std::size_t k = 0;
  for (const ExploreTermTask& t : tasks) {
    if (mode == CreditMode::dice_scalar) {
      // detached scalar return times the summed log-likelihood of the task's
      // explore actions -- the scalar-times-sum factorization
      ad::Tensor sum_lp = ad::sum(ad::concat(t.log_probs));
      task_terms.push_back(ad::mul(ad::Tensor::scalar(t.exploit_return), sum_lp));
      k += t.log_probs.size();
    } else {
      std::vector<double> c(t.log_probs.size());
      for (double& v : c) v = coeffs[k++];
      ad::Tensor weighted = ad::mul(ad::concat(t.log_probs),
                                    ad::Tensor::constant({static_cast<int>(c.size())}, c));
      task_terms.push_back(ad::sum(weighted));
    }
  }
  return ad::neg(ad::mean(ad::concat(task_terms)));
}

ad::Tensor maml_surrogate(const MetaBatch& batch, const rl::Policy& policy,
                          const MetaConfig& cfg) {
  return exploit_loss(batch, policy, cfg, /*require_connected=*/true);
}

ad::Tensor emaml_surrogate(const MetaBatch& batch, const rl::Policy& policy,
                           const MetaConfig& cfg) {
  ad::Tensor loss = exploit_loss(batch, policy, cfg, /*require_connected=*/false);
  if (cfg.lambda_explore == 0.0) return loss;  // bit-identical to maml_surrogate

  check(any_on_tape(batch.theta),
        "emaml_surrogate: theta must be tape-attached for the exploration term");
  std::vector<ExploreTermTask> inputs;
  inputs.reserve(batch.tasks.size());
  for (const TaskData& task : batch.tasks) {
    check(!task.explore.empty(), "emaml_surrogate: task has no explore trajectories");
    ExploreTermTask in;
    double ret = 0.0;
    for (const rl::Trajectory& t : task.exploit) ret += trajectory_return(t, cfg.gamma);
    in.exploit_return = ret / static_cast<double>(task.exploit.size());
    for (const rl::Trajectory& t : task.explore) {
      check(t.explore_flag, "emaml_surrogate: unflagged trajectory in the explore batch");
      for (int i = 0; i < t.length(); ++i) {
        const auto idx = static_cast<std::size_t>(i);
        in.log_probs.push_back(ad::reshape(
            ad::index_select(ad::log_softmax(policy.logits(batch.theta, t.observations[idx])),
                             {t.actions[idx]}),
            {}));
      }
    }
    inputs.push_back(std::move(in));
  }
  ad::Tensor term = exploration_term(inputs, cfg.credit_mode, cfg.normalize_adv);
  return ad::add(loss, ad::mul(ad::Tensor::scalar(cfg.lambda_explore), term));
}

}  // namespace metaexp::meta
