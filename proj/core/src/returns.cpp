#include <cmath>

#include "metaexp/rollout.hpp"

namespace metaexp::rl {

std::vector<double> discounted_returns(std::span<const double> rewards, double gamma) {
  check(gamma >= 0.0 && gamma <= 1.0, "discounted_returns: gamma outside [0, 1]");
  std::vector<double> out(rewards.size());
  double acc = 0.0;
  for (std::size_t i = rewards.size(); i-- > 0;) {
    acc = rewards[i] + gamma * acc;
    out[i] = acc;
  }
  return out;
}

std::vector<double> masked_returns(std::span<const Trajectory> trial, double gamma) {
  check(gamma >= 0.0 && gamma <= 1.0, "masked_returns: gamma outside [0, 1]");
  check(!trial.empty(), "masked_returns: empty trial");
  bool has_exploit = false;
  std::size_t total = 0;
  for (const Trajectory& t : trial) {
    has_exploit |= !t.explore_flag;
    total += static_cast<std::size_t>(t.length());
  }
  check(has_exploit, "masked_returns: trial has no exploitation episode");
  std::vector<double> masked;
  masked.reserve(total);
  for (const Trajectory& t : trial) {
    for (double r : t.rewards) masked.push_back(t.explore_flag ? 0.0 : r);
  }
  return discounted_returns(masked, gamma);
}

std::vector<double> gae_advantages(const Trajectory& traj, std::span<const double> values,
                                   double gamma, double lambda) {
  check(gamma >= 0.0 && gamma <= 1.0, "gae_advantages: gamma outside [0, 1]");
  check(lambda >= 0.0 && lambda <= 1.0, "gae_advantages: lambda outside [0, 1]");
  const std::size_t n = traj.rewards.size();
  check(values.size() == n + 1, "gae_advantages: need one value per step plus a bootstrap");
  std::vector<double> adv(n);
  double last = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double not_done = traj.dones[i] ? 0.0 : 1.0;
    const double delta = traj.rewards[i] + gamma * values[i + 1] * not_done - values[i];
    last = delta + gamma * lambda * not_done * last;
    adv[i] = last;
  }
  return adv;
}

NormStats normalize_advantages(std::span<double> advantages) {
  NormStats st;
  const std::size_t n = advantages.size();
  if (n < 2) return st;  // nothing sensible to scale by
  double mean = 0.0;
  for (double a : advantages) mean += a;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double a : advantages) var += (a - mean) * (a - mean);
  var /= static_cast<double>(n);
  const double sd = std::sqrt(var);
  st.mean = mean;
  st.stddev = sd;
  if (sd < 1e-12) return st;  // flat batch; scaling would blow up
  for (double& a : advantages) a = (a - mean) / sd;
  st.applied = true;
  return st;
}

}  // namespace metaexp::rl
