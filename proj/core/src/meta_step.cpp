#include "metaexp/meta_step.hpp"

#include <cmath>

namespace metaexp::meta {

const char* algo_name(Algo a) {
  switch (a) {
    case Algo::maml: return "maml";
    case Algo::emaml: return "emaml";
    case Algo::rl2: return "rl2";
    case Algo::erl2: return "erl2";
  }
  return "?";
}

std::optional<Algo> algo_from_name(const std::string& name) {
  if (name == "maml") return Algo::maml;
  if (name == "emaml") return Algo::emaml;
  if (name == "rl2") return Algo::rl2;
  if (name == "erl2") return Algo::erl2;
  return std::nullopt;
}

bool algo_recurrent(Algo a) { return a == Algo::rl2 || a == Algo::erl2; }

void MetaStepConfig::validate() const {
  meta.validate();
  if (algo_recurrent(algo)) {
    rl2.validate();
    if (meta.meta_grad_steps > 1 && rl2.outer_kind != rl::SurrogateKind::ppo_clip) {
      throw ConfigError("meta config: meta_grad_steps > 1 requires the ppo_clip trial surrogate");
    }
  } else {
    inner.validate();
    if (meta.explore_episodes < 1) {
      throw ConfigError("meta config: gradient adaptation needs at least one explore episode");
    }
    if (algo == Algo::maml && !inner_kind_differentiable(inner.kind)) {
      throw ConfigError(std::string("meta config: maml requires a differentiable inner operator; "
                                    "kind ") +
                        inner_kind_name(inner.kind) +
                        " detaches the adapted params (use emaml, which trains its exploration "
                        "term)");
    }
    if (algo == Algo::emaml && !inner_kind_differentiable(inner.kind) &&
        meta.lambda_explore == 0.0) {
      throw ConfigError(std::string("meta config: lambda_explore = 0 with the non-differentiable "
                                    "operator kind ") +
                        inner_kind_name(inner.kind) + " leaves no gradient path to train");
    }
  }
  if (horizon_override < 0) throw ConfigError("meta config: horizon_override must be >= 0");
}

namespace {

int task_horizon(const MetaStepConfig& cfg, const env::TaskSpec& spec) {
  return cfg.horizon_override > 0 ? cfg.horizon_override : spec.horizon;
}

struct EpisodeAverages {
  double tile_fraction = 0.0, goals = 0.0, deaths = 0.0;
  int krazy_episodes = 0;
};

void fold_heuristics(EpisodeAverages& acc, const env::TaskSpec& spec,
                     const rl::Trajectory& traj) {
  if (spec.family != env::Family::krazy) return;
  acc.tile_fraction += env::tile_fraction(traj.info);
  acc.goals += traj.info.goals_reached;
  acc.deaths += traj.info.deaths;
  ++acc.krazy_episodes;
}

void finish_heuristics(IterationStats& stats, const EpisodeAverages& acc) {
  if (acc.krazy_episodes == 0) return;
  stats.mean_tile_fraction = acc.tile_fraction / acc.krazy_episodes;
  stats.mean_goals = acc.goals / acc.krazy_episodes;
  stats.mean_deaths = acc.deaths / acc.krazy_episodes;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

// gradient step shared by both meta-step flavors: backward, clip, adam
void apply_meta_gradient(const ad::Tensor& loss, const ParamVector& leaves, ParamVector& params,
                         opt::Adam& adam, const MetaConfig& cfg, int grad_step,
                         IterationStats& stats) {
  std::vector<ad::Tensor> wrt;
  wrt.reserve(leaves.size());
  for (const auto& seg : leaves.segments()) wrt.push_back(seg.value);
  auto raw = ad::backward(loss, wrt, false);
  ParamVector grads;
  for (std::size_t i = 0; i < leaves.size(); ++i) grads.add(leaves.seg(i).name, raw[i]);
  auto clip = opt::clip_global_norm(grads, cfg.max_grad_norm);
  if (grad_step == 0) {
    stats.loss = loss.item();
    stats.grad_norm = clip.pre_norm;
    stats.clipped = clip.clipped;
  }
  params = adam.step(params, clip.grads);
}

}  // namespace

IterationStats meta_step(const MetaStepConfig& cfg, const rl::Policy& policy,
                         ParamVector& params, opt::Adam& adam,
                         std::span<const env::TaskSpec> tasks, const WorkerPool& pool,
                         std::int64_t iter) {
  cfg.validate();
  check(!algo_recurrent(cfg.algo), "meta_step: recurrent algorithm passed to the gradient flow");
  check(!tasks.empty(), "meta_step: empty task batch");
  const auto n = static_cast<int>(tasks.size());
  const auto uiter = static_cast<std::uint64_t>(iter);

  // explore episodes under frozen theta, one worker item per task
  std::vector<std::vector<rl::Trajectory>> explore(static_cast<std::size_t>(n));
  const ParamVector frozen = params.detached();
  pool.parallel_for(n, [&](int i) {
    const auto ui = static_cast<std::uint64_t>(i);
    auto e = env::make_env(tasks[static_cast<std::size_t>(i)], cfg.env);
    const rl::PolicyFn act = [&](std::span<const double> obs) {
      return policy.logits(frozen, obs);
    };
    for (int ep = 0; ep < cfg.meta.explore_episodes; ++ep) {
      Rng rng = Rng::from_key(cfg.seed, {kExploreStream, uiter, ui,
                                         static_cast<std::uint64_t>(ep)});
      explore[static_cast<std::size_t>(i)].push_back(
          rl::collect_rollout(*e, act, task_horizon(cfg, tasks[static_cast<std::size_t>(i)]), rng,
                              /*explore_flag=*/true, i));
    }
  });

  // detached adaptation + exploit episodes under the adapted params; the
  // taped adaptation below replays the same arithmetic and rng keys, so the
  // sampling params match the surrogate's adapted params exactly
  std::vector<ParamVector> adapted(static_cast<std::size_t>(n));
  std::vector<std::vector<rl::Trajectory>> exploit(static_cast<std::size_t>(n));
  pool.parallel_for(n, [&](int i) {
    const auto ui = static_cast<std::uint64_t>(i);
    Rng inner_rng = Rng::from_key(cfg.seed, {kInnerStream, uiter, ui});
    adapted[static_cast<std::size_t>(i)] =
        inner_update(frozen, explore[static_cast<std::size_t>(i)], policy, cfg.inner, inner_rng);
    auto e = env::make_env(tasks[static_cast<std::size_t>(i)], cfg.env);
    const ParamVector& theta_prime = adapted[static_cast<std::size_t>(i)];
    const rl::PolicyFn act = [&](std::span<const double> obs) {
      return policy.logits(theta_prime, obs);
    };
    for (int ep = 0; ep < cfg.meta.exploit_episodes; ++ep) {
      Rng rng = Rng::from_key(cfg.seed, {kExploitStream, uiter, ui,
                                         static_cast<std::uint64_t>(ep)});
      exploit[static_cast<std::size_t>(i)].push_back(
          rl::collect_rollout(*e, act, task_horizon(cfg, tasks[static_cast<std::size_t>(i)]), rng,
                              /*explore_flag=*/false, i));
    }
  });

  IterationStats stats;
  EpisodeAverages heur;
  for (int i = 0; i < n; ++i) {
    const auto ui = static_cast<std::size_t>(i);
    std::vector<double> er, xr;
    for (const auto& t : explore[ui]) {
      er.push_back(t.total_reward());
      stats.env_steps += t.length();
      fold_heuristics(heur, tasks[ui], t);
    }
    for (const auto& t : exploit[ui]) {
      xr.push_back(t.total_reward());
      stats.env_steps += t.length();
      fold_heuristics(heur, tasks[ui], t);
    }
    stats.per_task_explore_return.push_back(mean_of(er));
    stats.per_task_exploit_return.push_back(mean_of(xr));
  }
  stats.explore_mean_return = mean_of(stats.per_task_explore_return);
  stats.exploit_mean_return = mean_of(stats.per_task_exploit_return);
  finish_heuristics(stats, heur);

  // meta gradient steps: rebuild the tape against the current params each
  // time; exploit log-probs keep their sampling-time values, so later steps
  // see honest ppo ratios
  for (int gs = 0; gs < cfg.meta.meta_grad_steps; ++gs) {
    ad::Tape tape;
    ParamVector leaves = params.as_leaves(tape);
    MetaBatch batch;
    batch.theta = leaves;
    for (int i = 0; i < n; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      TaskData task;
      task.spec = tasks[ui];
      task.inner_kind = cfg.inner.kind;
      task.explore = explore[ui];
      Rng inner_rng = Rng::from_key(cfg.seed, {kInnerStream, uiter, static_cast<std::uint64_t>(i)});
      task.adapted = inner_update(leaves, task.explore, policy, cfg.inner, inner_rng);
      task.exploit = exploit[ui];
      batch.tasks.push_back(std::move(task));
    }
    ad::Tensor loss = cfg.algo == Algo::maml ? maml_surrogate(batch, policy, cfg.meta)
                                             : emaml_surrogate(batch, policy, cfg.meta);
    apply_meta_gradient(loss, leaves, params, adam, cfg.meta, gs, stats);
  }
  return stats;
}

IterationStats meta_step_recurrent(const MetaStepConfig& cfg, const rl::GruPolicy& policy,
                                   ParamVector& params, opt::Adam& adam,
                                   std::span<const env::TaskSpec> tasks, const WorkerPool& pool,
                                   std::int64_t iter) {
  cfg.validate();
  check(algo_recurrent(cfg.algo), "meta_step_recurrent: gradient algorithm passed to the "
                                  "recurrent flow");
  check(!tasks.empty(), "meta_step_recurrent: empty task batch");
  const auto n = static_cast<int>(tasks.size());
  const auto uiter = static_cast<std::uint64_t>(iter);

  std::vector<TrialData> trials(static_cast<std::size_t>(n));
  const ParamVector frozen = params.detached();
  pool.parallel_for(n, [&](int i) {
    const auto ui = static_cast<std::uint64_t>(i);
    auto e = env::make_env(tasks[static_cast<std::size_t>(i)], cfg.env);
    Rng rng = Rng::from_key(cfg.seed, {kTrialStream, uiter, ui});
    trials[static_cast<std::size_t>(i)] =
        rl2_trial(*e, policy, frozen, cfg.rl2,
                  task_horizon(cfg, tasks[static_cast<std::size_t>(i)]), rng, i);
  });

  IterationStats stats;
  EpisodeAverages heur;
  for (const TrialData& trial : trials) {
    std::vector<double> er, xr;
    for (const rl::Trajectory& t : trial.episodes) {
      (t.explore_flag ? er : xr).push_back(t.total_reward());
      stats.env_steps += t.length();
      fold_heuristics(heur, trial.spec, t);
    }
    stats.per_task_explore_return.push_back(mean_of(er));
    stats.per_task_exploit_return.push_back(mean_of(xr));
  }
  stats.explore_mean_return = mean_of(stats.per_task_explore_return);
  stats.exploit_mean_return = mean_of(stats.per_task_exploit_return);
  finish_heuristics(stats, heur);

  for (int gs = 0; gs < cfg.meta.meta_grad_steps; ++gs) {
    ad::Tape tape;
    ParamVector leaves = params.as_leaves(tape);
    ad::Tensor loss = cfg.algo == Algo::erl2 ? erl2_surrogate(trials, policy, leaves, cfg.rl2)
                                             : rl2_surrogate(trials, policy, leaves, cfg.rl2);
    apply_meta_gradient(loss, leaves, params, adam, cfg.meta, gs, stats);
  }
  return stats;
}

}  // namespace metaexp::meta
