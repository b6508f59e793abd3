#pragma once

#include <span>

#include "metaexp/env.hpp"
#include "metaexp/inner_update.hpp"
#include "metaexp/params.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rollout.hpp"
#include "metaexp/surrogate.hpp"

namespace metaexp::meta {

// How the exploration term spreads each task's detached exploit return over
// the explore log-probs: dice_scalar multiplies the per-task scalar with the
// summed log-likelihood; per_timestep attaches the (optionally normalized)
// coefficient to every explore timestep individually.
enum class CreditMode { per_timestep, dice_scalar };
const char* credit_mode_name(CreditMode m);

struct MetaConfig {
  double lambda_explore = 1.0;  // weight of the exploration term (0 = pure adaptation objective)
  double beta = 1e-3;           // meta step size (Adam)
  double gamma = 0.99;
  CreditMode credit_mode = CreditMode::per_timestep;
  int explore_episodes = 2;  // per task (trial prefix for the recurrent algorithms)
  int exploit_episodes = 2;  // per task; >= 1
  rl::SurrogateKind outer_kind = rl::SurrogateKind::ppo_clip;
  double clip_eps = 0.2;
  double ent_coeff = 1e-3;
  int meta_grad_steps = 1;  // > 1 requires the ppo_clip outer surrogate
  double max_grad_norm = 1.0;
  bool normalize_adv = true;  // exploit advantages and per_timestep explore coefficients

  void validate() const;
};

// Everything one task contributes to a meta update.  Exploit trajectories are
// sampled strictly under the adapted parameters; explore trajectories
// strictly under theta.  `adapted` is tape-attached exactly when the operator
// kind is differentiable.
struct TaskData {
  env::TaskSpec spec;
  InnerKind inner_kind = InnerKind::sgd_vpg;
  std::vector<rl::Trajectory> explore;
  ParamVector adapted;
  std::vector<rl::Trajectory> exploit;
};

struct MetaBatch {
  ParamVector theta;  // tape-attached parameters the adaptation started from
  std::vector<TaskData> tasks;
};

// Adaptation objective: mean over tasks of the outer surrogate on exploit
// trajectories with log-probs under the adapted parameters; differentiable
// through the inner update.  Rejects tape-disconnected adapted params.
ad::Tensor maml_surrogate(const MetaBatch& batch, const rl::Policy& policy,
                          const MetaConfig& cfg);

// Adaptation objective plus lambda times the exploration term, which scores
// the pre-update sampling distribution by the post-update returns.  With
// lambda_explore == 0 the term is skipped entirely, making the loss (and its
// gradient) bit-identical to maml_surrogate.
ad::Tensor emaml_surrogate(const MetaBatch& batch, const rl::Policy& policy,
                           const MetaConfig& cfg);

// The exploration term alone, exposed for the closed-form oracles: per task,
// the taped per-step explore log-probs and the detached exploit-return
// coefficient.  Returns the loss contribution (already negated).
struct ExploreTermTask {
  std::vector<ad::Tensor> log_probs;  // scalar tensors differentiating back to theta
  double exploit_return = 0.0;        // detached by construction
};
ad::Tensor exploration_term(std::span<const ExploreTermTask> tasks, CreditMode mode,
                            bool normalize);

// discounted-from-origin return, the R(tau) weighting the exploration term
double trajectory_return(const rl::Trajectory& t, double gamma);

}  // namespace metaexp::meta
