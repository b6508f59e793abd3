#pragma once

#include <cstdint>
#include <vector>

#include "metaexp/params.hpp"

namespace metaexp::opt {

// l2 norm over every coordinate of every segment; non-finite coordinates
// raise NumericFault naming the offending segment
double global_grad_norm(const ParamVector& grads);

struct ClipResult {
  ParamVector grads;
  double pre_norm = 0.0;
  bool clipped = false;
};

// rescales so the global norm is at most max_norm; max_norm <= 0 disables
ClipResult clip_global_norm(const ParamVector& grads, double max_norm);

// params - lr * grads
ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// standard Adam with bias correction; moment state is keyed to the schema of
// the vector given at construction and every step() must match it
class Adam {
 public:
  Adam(AdamConfig cfg, const ParamVector& schema_like);

  ParamVector step(const ParamVector& params, const ParamVector& grads);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  ParamVector schema_;
  std::vector<double> m_, v_;
  std::int64_t t_ = 0;
};

}  // namespace metaexp::opt
