#include "metaexp/surrogate.hpp"

namespace metaexp::rl {

const char* surrogate_name(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::vpg: return "vpg";
    case SurrogateKind::ppo_clip: return "ppo_clip";
    case SurrogateKind::cpi: return "cpi";
  }
  return "?";
}

namespace {

// effectively +/- infinity for the one-sided clip below, while keeping every
// forward value finite
constexpr double kUnbounded = 1e300;

}  // namespace

ad::Tensor surrogate_loss(std::span<const StepTerm> terms, const SurrogateOptions& opt) {
  check(!terms.empty(), "surrogate_loss: empty batch");
  check(opt.clip_eps > 0.0 && opt.clip_eps < 1.0, "surrogate_loss: clip_eps outside (0, 1)");
  check(!opt.flip_log_prob_sign || opt.kind == SurrogateKind::vpg,
        "surrogate_loss: sign flip only defined for the vpg objective");

  std::vector<ad::Tensor> objs;
  std::vector<ad::Tensor> ents;
  objs.reserve(terms.size());
  for (const StepTerm& t : terms) {
    check(t.log_probs.defined() && t.log_probs.rank() == 1,
          "surrogate_loss: log_probs must be a vector");
    check(t.action >= 0 && t.action < t.log_probs.size(), "surrogate_loss: action out of range");
    ad::Tensor lp = ad::reshape(ad::index_select(t.log_probs, {t.action}), {});
    if (opt.flip_log_prob_sign) lp = ad::neg(lp);
    const ad::Tensor adv = ad::Tensor::scalar(t.advantage);

    ad::Tensor obj;
    switch (opt.kind) {
      case SurrogateKind::vpg:
        obj = ad::mul(lp, adv);
        break;
      case SurrogateKind::cpi:
        obj = ad::mul(ad::exp(ad::sub(lp, ad::Tensor::scalar(t.old_log_prob))), adv);
        break;
      case SurrogateKind::ppo_clip: {
        ad::Tensor ratio = ad::exp(ad::sub(lp, ad::Tensor::scalar(t.old_log_prob)));
        // min(ratio*A, clip(ratio)*A) resolved by the sign of A: a positive
        // advantage caps the ratio above, a negative one floors it below;
        // either way the clipped sample stops contributing gradient
        if (t.advantage > 0.0) {
          obj = ad::mul(ad::clip(ratio, -kUnbounded, 1.0 + opt.clip_eps), adv);
        } else if (t.advantage < 0.0) {
          obj = ad::mul(ad::clip(ratio, 1.0 - opt.clip_eps, kUnbounded), adv);
        } else {
          obj = ad::Tensor::scalar(0.0);
        }
        const double unclipped = ratio.item() * t.advantage;
        check(obj.item() <= unclipped + 1e-12, "surrogate_loss: clipped objective above unclipped");
        break;
      }
    }
    objs.push_back(obj);

    if (opt.ent_coeff != 0.0) {
      ents.push_back(ad::neg(ad::sum(ad::mul(ad::exp(t.log_probs), t.log_probs))));
    }
  }

  ad::Tensor loss = ad::neg(ad::mean(ad::concat(objs)));
  if (opt.ent_coeff != 0.0) {
    loss = ad::sub(loss, ad::mul(ad::Tensor::scalar(opt.ent_coeff), ad::mean(ad::concat(ents))));
  }
  return loss;
}

}  // namespace metaexp::rl
