#pragma once

#include <span>
#include <utility>

#include "metaexp/ad.hpp"
#include "metaexp/params.hpp"
#include "metaexp/rng.hpp"

namespace metaexp::rl {

// Feedforward categorical policy seen by the gradient-based meta algorithms:
// anything that maps (params, observation) to action logits, differentiably
// when the params are tape-attached.  Lets the estimator oracles swap the
// network for a tabular policy whose probabilities enumerate exactly.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual ParamVector init_params(Rng& rng) const = 0;
  // taped when params are taped; plain arithmetic when they are constants
  virtual ad::Tensor logits(const ParamVector& params, std::span<const double> obs) const = 0;
  virtual int n_actions() const = 0;
};

// Two tanh hidden layers and a logits head.  With bias_dim > 0 a free
// parameter segment is appended to every observation before the first layer,
// giving the inner gradient a direct input-side knob (the "bias transform",
// off by default).
struct MlpConfig {
  int obs_len = 0;
  int n_actions = 4;
  int hidden = 64;
  int bias_dim = 0;
};

class MlpPolicy : public Policy {
 public:
  explicit MlpPolicy(MlpConfig cfg);

  ParamVector init_params(Rng& rng) const override;
  ad::Tensor logits(const ParamVector& params, std::span<const double> obs) const override;
  int n_actions() const override { return cfg_.n_actions; }

  const MlpConfig& config() const { return cfg_; }
  int input_len() const { return cfg_.obs_len + cfg_.bias_dim; }

 private:
  MlpConfig cfg_;
};

// Single GRU cell plus logits head.  The hidden state is carried across
// episode boundaries within a trial and reset to zeros between trials.
struct GruConfig {
  int input_len = 0;
  int n_actions = 4;
  int hidden = 64;
};

class GruPolicy {
 public:
  explicit GruPolicy(GruConfig cfg);

  ParamVector init_params(Rng& rng) const;
  ad::Tensor initial_state() const { return ad::Tensor::zeros({cfg_.hidden}); }
  // returns (logits, next hidden state)
  std::pair<ad::Tensor, ad::Tensor> step(const ParamVector& params, const ad::Tensor& h,
                                         const ad::Tensor& x) const;

  const GruConfig& config() const { return cfg_; }

 private:
  ParamVector init_gate(Rng& rng, const std::string& prefix) const;
  GruConfig cfg_;
};

// draw from the categorical given by logits; log_prob differentiates back to
// the logits when they are tape-attached
struct ActionSample {
  int action = 0;
  ad::Tensor log_prob;
};
ActionSample sample_action(const ad::Tensor& logits, Rng& rng);

// recurrent-policy input: the current observation, one-hot previous action,
// previous reward and an episode-boundary flag; action/reward/flag are zero
// at trial start
int rl2_input_len(int obs_len, int n_actions);
std::vector<double> rl2_input(std::span<const double> obs, int prev_action,
                              double prev_reward, double episode_boundary, int obs_len,
                              int n_actions);

}  // namespace metaexp::rl
