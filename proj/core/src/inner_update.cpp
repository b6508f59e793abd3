#include "metaexp/inner_update.hpp"

#include <cmath>

namespace metaexp::meta {

const char* inner_kind_name(InnerKind k) {
  switch (k) {
    case InnerKind::sgd_vpg: return "sgd_vpg";
    case InnerKind::sgd_ppo: return "sgd_ppo";
    case InnerKind::random_perturb: return "random_perturb";
    case InnerKind::eps_greedy: return "eps_greedy";
    case InnerKind::sign_flip: return "sign_flip";
    case InnerKind::perpendicular: return "perpendicular";
  }
  return "?";
}

bool inner_kind_differentiable(InnerKind k) {
  return k == InnerKind::sgd_vpg || k == InnerKind::sgd_ppo;
}

void InnerOperatorConfig::validate() const {
  if (alpha <= 0.0) throw ConfigError("inner operator: alpha must be positive");
  if (inner_steps < 1 || inner_steps > 20) {
    throw ConfigError("inner operator: inner_steps outside 1..20");
  }
  if (inner_steps > 1 && !simple_sampling) {
    throw ConfigError(
        "inner operator: inner_steps > 1 requires simple_sampling (the adaptation reuses one "
        "explore batch; fresh per-step sampling is not available inside the operator)");
  }
  if (kind == InnerKind::random_perturb || kind == InnerKind::eps_greedy) {
    if (sigma <= 0.0) throw ConfigError("inner operator: sigma must be positive");
  }
  if (kind == InnerKind::eps_greedy && (eps_op < 0.0 || eps_op > 1.0)) {
    throw ConfigError("inner operator: eps_op outside [0, 1]");
  }
  if (gamma < 0.0 || gamma > 1.0) throw ConfigError("inner operator: gamma outside [0, 1]");
}

namespace {

std::vector<rl::StepTerm> batch_terms(const ParamVector& theta,
                                      std::span<const rl::Trajectory> explore,
                                      const rl::Policy& policy,
                                      const InnerOperatorConfig& cfg) {
  std::vector<double> advantages;
  for (const rl::Trajectory& t : explore) {
    auto rtg = rl::discounted_returns(t.rewards, cfg.gamma);
    advantages.insert(advantages.end(), rtg.begin(), rtg.end());
  }
  if (cfg.normalize_adv) rl::normalize_advantages(advantages);

  std::vector<rl::StepTerm> terms;
  terms.reserve(advantages.size());
  std::size_t k = 0;
  for (const rl::Trajectory& t : explore) {
    for (int i = 0; i < t.length(); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      terms.push_back({ad::log_softmax(policy.logits(theta, t.observations[idx])), t.actions[idx],
                       t.log_probs[idx], advantages[k++]});
    }
  }
  return terms;
}

// differentiable gradient step(s): theta_j+1 = theta_j - alpha * dL/dtheta_j
ParamVector sgd_adapt(const ParamVector& theta, std::span<const rl::Trajectory> explore,
                      const rl::Policy& policy, const InnerOperatorConfig& cfg,
                      rl::SurrogateKind surrogate_kind, bool flip_sign, bool keep_graph) {
  rl::SurrogateOptions opts{.kind = surrogate_kind,
                            .clip_eps = cfg.clip_eps,
                            .ent_coeff = cfg.ent_coeff,
                            .flip_log_prob_sign = flip_sign};
  ParamVector cur = theta;
  const ad::Tensor alpha = ad::Tensor::scalar(cfg.alpha);
  for (int step = 0; step < cfg.inner_steps; ++step) {
    ad::Tensor loss = rl::surrogate_loss(batch_terms(cur, explore, policy, cfg), opts);
    std::vector<ad::Tensor> wrt;
    wrt.reserve(cur.size());
    for (const auto& seg : cur.segments()) wrt.push_back(seg.value);
    auto grads = ad::backward(loss, wrt, keep_graph);
    ParamVector next;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      next.add(cur.seg(i).name, ad::sub(cur.seg(i).value, ad::mul(alpha, grads[i])));
    }
    cur = std::move(next);
  }
  return cur;
}

// plain (non-taped) gradient of the surrogate at constant theta, flattened
std::vector<double> flat_gradient(const ParamVector& theta,
                                  std::span<const rl::Trajectory> explore,
                                  const rl::Policy& policy, const InnerOperatorConfig& cfg,
                                  bool flip_sign) {
  ad::Tape tape;
  ParamVector leaves = theta.detached().as_leaves(tape);
  rl::SurrogateOptions opts{.kind = rl::SurrogateKind::vpg,
                            .clip_eps = cfg.clip_eps,
                            .ent_coeff = cfg.ent_coeff,
                            .flip_log_prob_sign = flip_sign};
  ad::Tensor loss = rl::surrogate_loss(batch_terms(leaves, explore, policy, cfg), opts);
  std::vector<ad::Tensor> wrt;
  for (const auto& seg : leaves.segments()) wrt.push_back(seg.value);
  auto grads = ad::backward(loss, wrt, false);
  ParamVector g;
  for (std::size_t i = 0; i < leaves.size(); ++i) g.add(leaves.seg(i).name, grads[i]);
  return g.flatten();
}

ParamVector perturb(const ParamVector& theta, double sigma, Rng& rng) {
  std::vector<double> flat = theta.detached().flatten();
  for (double& v : flat) v += sigma * rng.normal();
  return theta.unflatten(flat);
}

// unit direction orthogonal to g: deterministic orthogonalization of a fixed
// reference direction (all-ones, falling back to basis vectors when the
// gradient is parallel to it)
std::vector<double> orthogonal_direction(const std::vector<double>& g) {
  const std::size_t n = g.size();
  check(n >= 2, "perpendicular operator: needs at least 2 parameters");
  double gnorm = 0.0;
  for (double v : g) gnorm += v * v;
  gnorm = std::sqrt(gnorm);

  std::vector<double> ref(n, 1.0 / std::sqrt(static_cast<double>(n)));
  for (std::size_t fallback = 0; fallback <= n; ++fallback) {
    std::vector<double> d = ref;
    if (gnorm > 1e-12) {
      double dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) dot += ref[i] * g[i] / gnorm;
      for (std::size_t i = 0; i < n; ++i) d[i] -= dot * g[i] / gnorm;
    }
    double dnorm = 0.0;
    for (double v : d) dnorm += v * v;
    dnorm = std::sqrt(dnorm);
    if (dnorm > 1e-8) {
      for (double& v : d) v /= dnorm;
      return d;
    }
    ref.assign(n, 0.0);
    ref[fallback] = 1.0;  // e_0, e_1, ... until one is not parallel to g
  }
  throw NumericFault("no orthogonal direction found", "perpendicular operator");
}

}  // namespace

ad::Tensor inner_surrogate(const ParamVector& theta, std::span<const rl::Trajectory> explore,
                           const rl::Policy& policy, const InnerOperatorConfig& cfg,
                           bool flip_log_prob_sign) {
  check(!explore.empty(), "inner_surrogate: empty explore batch");
  rl::SurrogateOptions opts{.kind = cfg.kind == InnerKind::sgd_ppo ? rl::SurrogateKind::ppo_clip
                                                                   : rl::SurrogateKind::vpg,
                            .clip_eps = cfg.clip_eps,
                            .ent_coeff = cfg.ent_coeff,
                            .flip_log_prob_sign = flip_log_prob_sign};
  return rl::surrogate_loss(batch_terms(theta, explore, policy, cfg), opts);
}

ParamVector inner_update(const ParamVector& theta, std::span<const rl::Trajectory> explore,
                         const rl::Policy& policy, const InnerOperatorConfig& cfg, Rng& rng) {
  cfg.validate();
  check(!explore.empty(), "inner_update: empty explore batch");
  check(theta.size() > 0, "inner_update: empty parameter vector");
  bool taped = false;
  for (const auto& seg : theta.segments()) taped |= seg.value.on_tape();

  switch (cfg.kind) {
    case InnerKind::sgd_vpg:
    case InnerKind::sgd_ppo: {
      const auto surrogate = cfg.kind == InnerKind::sgd_ppo ? rl::SurrogateKind::ppo_clip
                                                            : rl::SurrogateKind::vpg;
      if (taped) return sgd_adapt(theta, explore, policy, cfg, surrogate, false, true);
      ad::Tape scratch;
      ParamVector leaves = theta.as_leaves(scratch);
      return sgd_adapt(leaves, explore, policy, cfg, surrogate, false, false).detached();
    }
    case InnerKind::random_perturb:
      return perturb(theta, cfg.sigma, rng);
    case InnerKind::eps_greedy: {
      // eps_op = 0 never draws, so the result is bit-identical to sgd_vpg
      if (cfg.eps_op > 0.0 && rng.uniform01() < cfg.eps_op) {
        return perturb(theta, cfg.sigma, rng);
      }
      ad::Tape scratch;
      ParamVector leaves = theta.detached().as_leaves(scratch);
      return sgd_adapt(leaves, explore, policy, cfg, rl::SurrogateKind::vpg, false, false)
          .detached();
    }
    case InnerKind::sign_flip: {
      ad::Tape scratch;
      ParamVector leaves = theta.detached().as_leaves(scratch);
      return sgd_adapt(leaves, explore, policy, cfg, rl::SurrogateKind::vpg, true, false)
          .detached();
    }
    case InnerKind::perpendicular: {
      const auto d = orthogonal_direction(flat_gradient(theta, explore, policy, cfg, false));
      std::vector<double> flat = theta.detached().flatten();
      for (std::size_t i = 0; i < flat.size(); ++i) flat[i] += cfg.alpha * d[i];
      return theta.unflatten(flat);
    }
  }
  throw ContractViolation("inner_update: unknown operator kind");
}

}  // namespace metaexp::meta
