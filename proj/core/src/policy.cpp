#include "metaexp/policy.hpp"

#include <cmath>

namespace metaexp::rl {

namespace {

// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)), the usual small dense init
ad::Tensor init_matrix(Rng& rng, int rows, int cols) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(rows));
  std::vector<double> w(static_cast<std::size_t>(rows) * cols);
  for (double& x : w) x = rng.uniform(-bound, bound);
  return ad::Tensor::constant({rows, cols}, std::move(w));
}

ad::Tensor obs_tensor(std::span<const double> obs) {
  return ad::Tensor::constant({static_cast<int>(obs.size())},
                              std::vector<double>(obs.begin(), obs.end()));
}

// 1/(1+exp(-x)) out of the existing primitives
ad::Tensor sigmoid(const ad::Tensor& x) {
  return ad::div(ad::Tensor::scalar(1.0), ad::add(ad::Tensor::scalar(1.0), ad::exp(ad::neg(x))));
}

}  // namespace

MlpPolicy::MlpPolicy(MlpConfig cfg) : cfg_(cfg) {
  check(cfg_.obs_len > 0, "MlpPolicy: obs_len must be positive");
  check(cfg_.n_actions >= 2, "MlpPolicy: need at least two actions");
  check(cfg_.hidden > 0, "MlpPolicy: hidden width must be positive");
  check(cfg_.bias_dim >= 0, "MlpPolicy: bias_dim must be non-negative");
}

ParamVector MlpPolicy::init_params(Rng& rng) const {
  ParamVector p;
  const int in = input_len();
  p.add("l0.w", init_matrix(rng, in, cfg_.hidden));
  p.add("l0.b", ad::Tensor::zeros({cfg_.hidden}));
  p.add("l1.w", init_matrix(rng, cfg_.hidden, cfg_.hidden));
  p.add("l1.b", ad::Tensor::zeros({cfg_.hidden}));
  p.add("head.w", init_matrix(rng, cfg_.hidden, cfg_.n_actions));
  p.add("head.b", ad::Tensor::zeros({cfg_.n_actions}));
  if (cfg_.bias_dim > 0) p.add("bias.v", ad::Tensor::zeros({cfg_.bias_dim}));
  return p;
}

ad::Tensor MlpPolicy::logits(const ParamVector& params, std::span<const double> obs) const {
  check(static_cast<int>(obs.size()) == cfg_.obs_len,
        "MlpPolicy::logits: observation length mismatch");
  ad::Tensor x = obs_tensor(obs);
  if (cfg_.bias_dim > 0) {
    const ad::Tensor pieces[] = {x, params.at("bias.v")};
    x = ad::concat(pieces);
  }
  ad::Tensor h0 = ad::tanh(ad::add(ad::matmul(x, params.at("l0.w")), params.at("l0.b")));
  ad::Tensor h1 = ad::tanh(ad::add(ad::matmul(h0, params.at("l1.w")), params.at("l1.b")));
  return ad::add(ad::matmul(h1, params.at("head.w")), params.at("head.b"));
}

GruPolicy::GruPolicy(GruConfig cfg) : cfg_(cfg) {
  check(cfg_.input_len > 0, "GruPolicy: input_len must be positive");
  check(cfg_.n_actions >= 2, "GruPolicy: need at least two actions");
  check(cfg_.hidden > 0, "GruPolicy: hidden width must be positive");
}

ParamVector GruPolicy::init_params(Rng& rng) const {
  ParamVector p;
  for (const char* gate : {"z", "r", "h"}) {
    p.add(std::string("gru.w") + gate, init_matrix(rng, cfg_.input_len, cfg_.hidden));
    p.add(std::string("gru.u") + gate, init_matrix(rng, cfg_.hidden, cfg_.hidden));
    p.add(std::string("gru.b") + gate, ad::Tensor::zeros({cfg_.hidden}));
  }
  p.add("head.w", init_matrix(rng, cfg_.hidden, cfg_.n_actions));
  p.add("head.b", ad::Tensor::zeros({cfg_.n_actions}));
  return p;
}

std::pair<ad::Tensor, ad::Tensor> GruPolicy::step(const ParamVector& params, const ad::Tensor& h,
                                                  const ad::Tensor& x) const {
  check(x.size() == cfg_.input_len, "GruPolicy::step: input length mismatch");
  check(h.size() == cfg_.hidden, "GruPolicy::step: hidden length mismatch");
  auto affine = [&](const char* gate, const ad::Tensor& hh) {
    const std::string g(gate);
    return ad::add(ad::add(ad::matmul(x, params.at("gru.w" + g)), ad::matmul(hh, params.at("gru.u" + g))),
                   params.at("gru.b" + g));
  };
  ad::Tensor z = sigmoid(affine("z", h));
  ad::Tensor r = sigmoid(affine("r", h));
  ad::Tensor h_cand = ad::tanh(affine("h", ad::mul(r, h)));
  // h' = (1-z)*h + z*h_cand
  ad::Tensor h_next =
      ad::add(ad::mul(ad::sub(ad::Tensor::scalar(1.0), z), h), ad::mul(z, h_cand));
  ad::Tensor logits = ad::add(ad::matmul(h_next, params.at("head.w")), params.at("head.b"));
  return {logits, h_next};
}

ActionSample sample_action(const ad::Tensor& logits, Rng& rng) {
  check(logits.rank() == 1 && logits.size() >= 2, "sample_action: logits must be a vector");
  ad::Tensor log_probs = ad::log_softmax(logits);
  std::vector<double> probs(log_probs.values().size());
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] = std::exp(log_probs.values()[i]);
  const int a = rng.categorical(probs);
  ActionSample s;
  s.action = a;
  s.log_prob = ad::reshape(ad::index_select(log_probs, {a}), {});
  return s;
}

int rl2_input_len(int obs_len, int n_actions) { return obs_len + n_actions + 2; }

std::vector<double> rl2_input(std::span<const double> obs, int prev_action, double prev_reward,
                              double episode_boundary, int obs_len, int n_actions) {
  check(obs.empty() || static_cast<int>(obs.size()) == obs_len,
        "rl2_input: observation length mismatch");
  check(prev_action < n_actions, "rl2_input: action out of range");
  std::vector<double> x(static_cast<std::size_t>(rl2_input_len(obs_len, n_actions)), 0.0);
  for (std::size_t i = 0; i < obs.size(); ++i) x[i] = obs[i];
  if (prev_action >= 0) x[static_cast<std::size_t>(obs_len + prev_action)] = 1.0;
  x[static_cast<std::size_t>(obs_len + n_actions)] = prev_reward;
  x[static_cast<std::size_t>(obs_len + n_actions) + 1] = episode_boundary;
  return x;
}

}  // namespace metaexp::rl
