#include "metaexp/rollout.hpp"

#include <ostream>

#include "metaexp/policy.hpp"

namespace metaexp::rl {

double Trajectory::total_reward() const {
  double acc = 0.0;
  for (double r : rewards) acc += r;
  return acc;
}

void Trajectory::validate() const {
  const std::size_t n = actions.size();
  check(observations.size() == n && rewards.size() == n && dones.size() == n &&
            log_probs.size() == n,
        "Trajectory: field lengths disagree");
  for (std::size_t t = 0; t + 1 < n; ++t) {
    check(!dones[t], "Trajectory: done mid-episode");
  }
}

namespace {

[[noreturn]] void rethrow_with_task(std::int64_t task_index) {
  const std::string where = "task " + std::to_string(task_index);
  try {
    throw;
  } catch (const NumericFault& e) {
    throw NumericFault(e.what(), where);
  } catch (const ContractViolation& e) {
    throw ContractViolation(where + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(where + ": " + e.what());
  }
}

}  // namespace

Trajectory collect_rollout(env::Env& e, const PolicyFn& policy, int horizon, Rng& rng,
                           bool explore_flag, std::int64_t task_index) {
  check(horizon >= 1, "collect_rollout: horizon must be at least 1");
  Trajectory traj;
  traj.explore_flag = explore_flag;
  traj.task_index = task_index;
  try {
    std::vector<double> obs = e.reset(rng);
    for (int t = 0; t < horizon; ++t) {
      ad::Tensor logits = policy(obs);
      ActionSample s = sample_action(logits, rng);
      env::StepResult r = e.step(s.action);
      traj.observations.push_back(std::move(obs));
      traj.actions.push_back(s.action);
      traj.rewards.push_back(r.reward);
      traj.dones.push_back(r.done ? 1 : 0);
      traj.log_probs.push_back(s.log_prob.item());
      obs = std::move(r.obs);
      if (r.done) break;
    }
  } catch (...) {
    rethrow_with_task(task_index);
  }
  traj.info = e.info();
  traj.validate();
  return traj;
}

void dump_trajectory(std::ostream& out, const Trajectory& t) {
  char line[160];
  for (int i = 0; i < t.length(); ++i) {
    std::snprintf(line, sizeof(line), "%d\t%d\t%.17g\t%d\t%.17g\t%d\n", i, t.actions[i],
                  t.rewards[i], static_cast<int>(t.dones[i]), t.log_probs[i],
                  t.explore_flag ? 1 : 0);
    out << line;
  }
}

}  // namespace metaexp::rl
