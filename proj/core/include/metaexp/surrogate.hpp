#pragma once

#include <span>

#include "metaexp/ad.hpp"

namespace metaexp::rl {

enum class SurrogateKind { vpg, ppo_clip, cpi };
const char* surrogate_name(SurrogateKind k);

// one timestep's contribution: differentiable log-probs over actions under
// the current parameters, plus detached sampling-time quantities
struct StepTerm {
  ad::Tensor log_probs;  // length n_actions
  int action = 0;
  double old_log_prob = 0.0;
  double advantage = 0.0;
};

struct SurrogateOptions {
  SurrogateKind kind = SurrogateKind::ppo_clip;
  double clip_eps = 0.2;
  double ent_coeff = 0.0;
  // exploration-operator variant: the log-likelihood factor enters negated
  bool flip_log_prob_sign = false;
};

// Scalar loss to MINIMIZE:
//   vpg       -mean_t(log pi(a_t) * A_t)
//   cpi       -mean_t(ratio_t * A_t),             ratio = exp(new - old)
//   ppo_clip  -mean_t(min(ratio*A, clip(ratio, 1-eps, 1+eps)*A))
// each minus ent_coeff * mean_t(entropy).  The clipped objective never
// exceeds the unclipped one; that is asserted per sample.
ad::Tensor surrogate_loss(std::span<const StepTerm> terms, const SurrogateOptions& opt);

}  // namespace metaexp::rl
