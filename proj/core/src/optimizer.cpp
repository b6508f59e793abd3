#include "metaexp/optimizer.hpp"

#include <cmath>

#include "metaexp/errors.hpp"

namespace metaexp::opt {

double global_grad_norm(const ParamVector& grads) {
  double sq = 0.0;
  for (const auto& seg : grads.segments()) {
    for (double g : seg.value.values()) {
      if (!std::isfinite(g)) throw NumericFault("non-finite gradient", "segment " + seg.name);
      sq += g * g;
    }
  }
  return std::sqrt(sq);
}

ClipResult clip_global_norm(const ParamVector& grads, double max_norm) {
  ClipResult r;
  r.pre_norm = global_grad_norm(grads);
  if (max_norm > 0.0 && r.pre_norm > max_norm) {
    r.grads = pv_scale(grads, max_norm / r.pre_norm);
    r.clipped = true;
  } else {
    r.grads = grads.detached();
  }
  return r;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr) {
  check(params.same_schema(grads), "sgd_step: schema mismatch");
  return pv_axpy(params, -lr, grads);
}

Adam::Adam(AdamConfig cfg, const ParamVector& schema_like)
    : cfg_(cfg), schema_(schema_like.detached()) {
  check(cfg_.lr > 0.0, "adam: lr must be positive");
  check(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0, "adam: beta1 outside [0, 1)");
  check(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0, "adam: beta2 outside [0, 1)");
  check(cfg_.eps > 0.0, "adam: eps must be positive");
  const auto n = static_cast<std::size_t>(schema_.total_len());
  m_.assign(n, 0.0);
  v_.assign(n, 0.0);
}

ParamVector Adam::step(const ParamVector& params, const ParamVector& grads) {
  check(params.same_schema(schema_), "adam: params schema mismatch");
  check(grads.same_schema(schema_), "adam: grads schema mismatch");
  global_grad_norm(grads);  // finite check, names the segment on failure

  ++t_;
  const std::vector<double> p = params.flatten();
  const std::vector<double> g = grads.flatten();
  std::vector<double> out(p.size());
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g[i];
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
    const double mhat = m_[i] / bc1;
    const double vhat = v_[i] / bc2;
    out[i] = p[i] - cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
  }
  return params.unflatten(out);
}

}  // namespace metaexp::opt
