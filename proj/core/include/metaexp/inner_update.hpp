#pragma once

#include <span>

#include "metaexp/params.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rollout.hpp"
#include "metaexp/surrogate.hpp"

namespace metaexp::meta {

// The family of task-adaptation operators.  Only the sgd_* kinds keep the
// adapted parameters attached to the caller's tape (the meta gradient flows
// through the update); every other kind returns constants by construction.
enum class InnerKind {
  sgd_vpg,         // differentiable SGD on the score surrogate
  sgd_ppo,         // differentiable SGD on the clipped-ratio surrogate
  random_perturb,  // theta + sigma * standard normal draw
  eps_greedy,      // the perturbation with probability eps_op, else the sgd_vpg step
  sign_flip,       // SGD on the score surrogate with the log-prob sign negated
  perpendicular,   // step of size alpha orthogonal to the gradient
};
const char* inner_kind_name(InnerKind k);
bool inner_kind_differentiable(InnerKind k);

struct InnerOperatorConfig {
  InnerKind kind = InnerKind::sgd_vpg;
  double alpha = 0.01;       // inner step size
  int inner_steps = 1;       // 1..20; > 1 reuses the batch (simple sampling)
  bool simple_sampling = true;
  double sigma = 0.1;        // random_perturb scale
  double eps_op = 0.1;       // eps_greedy mixing probability
  double gamma = 0.99;       // discount for the inner advantages
  double clip_eps = 0.2;     // sgd_ppo only
  double ent_coeff = 0.0;    // entropy bonus inside the inner surrogate
  bool normalize_adv = false;  // normalize inner advantages across the batch

  void validate() const;
};

// One adaptation: theta' = U(theta, explore batch).  When theta is
// tape-attached and the kind is sgd_*, theta' stays attached (gradients flow
// through the update); otherwise theta' is a constant snapshot.  rng feeds
// only the stochastic kinds.
ParamVector inner_update(const ParamVector& theta, std::span<const rl::Trajectory> explore,
                         const rl::Policy& policy, const InnerOperatorConfig& cfg, Rng& rng);

// the surrogate the sgd_* kinds descend, exposed for the oracles: per-step
// terms over the batch with reward-to-go advantages (normalized on request)
ad::Tensor inner_surrogate(const ParamVector& theta, std::span<const rl::Trajectory> explore,
                           const rl::Policy& policy, const InnerOperatorConfig& cfg,
                           bool flip_log_prob_sign = false);

}  // namespace metaexp::meta
