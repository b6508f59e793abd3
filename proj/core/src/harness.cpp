#include "metaexp/harness.hpp"

#include <algorithm>
#include <filesystem>

#include "metaexp/errors.hpp"
#include "metaexp/inner_update.hpp"
#include "metaexp/optimizer.hpp"
#include "metaexp/rl2.hpp"

namespace metaexp::harness {

namespace {

// rng stream words for the experiment layer, disjoint from the meta-step
// streams (which start at 1)
enum HarnessStream : std::uint64_t {
  kRepeatStream = 101,
  kPoolStream = 102,
  kInitStream = 103,
  kEvalKeyStream = 104,
  kHparamStream = 105,
};

// test tasks live in the top half of the layout-seed space, train tasks in
// the bottom half; the partition is what makes pool disjointness checkable
constexpr std::uint64_t kTestSeedBit = std::uint64_t{1} << 63;

int task_horizon(const meta::MetaStepConfig& cfg, const env::TaskSpec& spec) {
  return cfg.horizon_override > 0 ? cfg.horizon_override : spec.horizon;
}

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

bool active_head_matches(const ExperimentConfig& cfg, const PolicyBundle& policy) {
  const bool recurrent = meta::algo_recurrent(cfg.step.algo);
  return recurrent ? (policy.recurrent && !policy.feedforward)
                   : (policy.feedforward && !policy.recurrent);
}

}  // namespace

void ExperimentConfig::validate() const {
  step.validate();
  if (n_train_tasks < 1) throw ConfigError("experiment: n_train_tasks must be >= 1");
  if (n_test_tasks < 1) throw ConfigError("experiment: n_test_tasks must be >= 1");
  if (budget < 1) throw ConfigError("experiment: budget must be positive");
  if (eval_every < 1) throw ConfigError("experiment: eval_every must be >= 1");
  if (repeats < 1) throw ConfigError("experiment: repeats must be >= 1");
  if (mlp_hidden < 1 || gru_hidden < 1) throw ConfigError("experiment: hidden sizes must be >= 1");
  if (mlp_bias_dim < 0) throw ConfigError("experiment: mlp_bias_dim must be >= 0");
  if (n_workers < 0) throw ConfigError("experiment: n_workers must be >= 0");
}

PolicyBundle make_policy(const ExperimentConfig& cfg) {
  // observation and action widths are family/config constants, probed
  // through a throwaway task draw
  Rng probe_rng(0);
  const env::TaskSpec probe = env::sample_task(cfg.family, probe_rng, cfg.step.env);
  const auto e = env::make_env(probe, cfg.step.env);
  PolicyBundle bundle;
  if (meta::algo_recurrent(cfg.step.algo)) {
    bundle.recurrent = std::make_unique<rl::GruPolicy>(
        rl::GruConfig{.input_len = rl::rl2_input_len(e->obs_len(), e->n_actions()),
                      .n_actions = e->n_actions(),
                      .hidden = cfg.gru_hidden});
  } else {
    bundle.feedforward = std::make_unique<rl::MlpPolicy>(rl::MlpConfig{.obs_len = e->obs_len(),
                                                                       .n_actions = e->n_actions(),
                                                                       .hidden = cfg.mlp_hidden,
                                                                       .bias_dim = cfg.mlp_bias_dim});
  }
  return bundle;
}

ParamVector init_policy_params(const ExperimentConfig& cfg, const PolicyBundle& policy, Rng& rng) {
  check(active_head_matches(cfg, policy), "init_policy_params: policy head does not match algo");
  return policy.recurrent ? policy.recurrent->init_params(rng)
                          : policy.feedforward->init_params(rng);
}

std::vector<env::TaskSpec> sample_task_pool(const ExperimentConfig& cfg, bool test_pool, int n,
                                            Rng& rng) {
  check(n >= 1, "sample_task_pool: n must be >= 1");
  std::vector<env::TaskSpec> pool;
  pool.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    env::TaskSpec spec = env::sample_task(cfg.family, rng, cfg.step.env);
    spec.layout_seed = test_pool ? (spec.layout_seed | kTestSeedBit)
                                 : (spec.layout_seed & ~kTestSeedBit);
    pool.push_back(spec);
  }
  return pool;
}

HeuristicMetrics heuristic_metrics(std::span<const rl::Trajectory> rollouts,
                                   std::span<const env::TaskSpec> specs) {
  check(!rollouts.empty(), "heuristic_metrics: empty rollout batch");
  HeuristicMetrics m;
  for (const rl::Trajectory& t : rollouts) {
    check(t.task_index >= 0 && t.task_index < static_cast<std::int64_t>(specs.size()),
          "heuristic_metrics: rollout task_index outside the spec list");
    check(specs[static_cast<std::size_t>(t.task_index)].family == env::Family::krazy,
          "heuristic_metrics: rollout from a non-krazy task");
    m.tile_fraction += env::tile_fraction(t.info);
    m.death_visits += t.info.deaths;
    m.goals_reached += t.info.goals_reached;
  }
  const auto n = static_cast<double>(rollouts.size());
  m.tile_fraction /= n;
  m.death_visits /= n;
  m.goals_reached /= n;
  return m;
}

GapResult evaluate_gap(const ExperimentConfig& cfg, const PolicyBundle& policy,
                       const ParamVector& params, std::span<const env::TaskSpec> test_tasks,
                       const WorkerPool& pool, std::uint64_t eval_key) {
  check(active_head_matches(cfg, policy), "evaluate_gap: policy head does not match algo");
  check(!test_tasks.empty(), "evaluate_gap: empty task pool");
  const auto n = static_cast<int>(test_tasks.size());
  const ParamVector frozen = params.detached();

  GapResult result;
  result.pre.assign(static_cast<std::size_t>(n), 0.0);
  result.post.assign(static_cast<std::size_t>(n), 0.0);
  std::vector<std::vector<rl::Trajectory>> collected(static_cast<std::size_t>(n));

  if (meta::algo_recurrent(cfg.step.algo)) {
    pool.parallel_for(n, [&](int i) {
      const auto ui = static_cast<std::size_t>(i);
      auto e = env::make_env(test_tasks[ui], cfg.step.env);
      Rng rng = Rng::from_key(eval_key, {1, static_cast<std::uint64_t>(i)});
      auto trial = meta::rl2_trial(*e, *policy.recurrent, frozen, cfg.step.rl2,
                                   task_horizon(cfg.step, test_tasks[ui]), rng, i);
      std::vector<double> pre, post;
      for (rl::Trajectory& t : trial.episodes) {
        (t.explore_flag ? pre : post).push_back(t.total_reward());
        collected[ui].push_back(std::move(t));
      }
      result.pre[ui] = mean_of(pre);
      result.post[ui] = mean_of(post);
    });
  } else {
    pool.parallel_for(n, [&](int i) {
      const auto ui = static_cast<std::size_t>(i);
      const auto task = static_cast<std::uint64_t>(i);
      const int horizon = task_horizon(cfg.step, test_tasks[ui]);
      auto e = env::make_env(test_tasks[ui], cfg.step.env);

      std::vector<rl::Trajectory> explore;
      const rl::PolicyFn act_pre = [&](std::span<const double> obs) {
        return policy.feedforward->logits(frozen, obs);
      };
      std::vector<double> pre;
      for (int ep = 0; ep < cfg.step.meta.explore_episodes; ++ep) {
        Rng rng = Rng::from_key(eval_key, {2, task, static_cast<std::uint64_t>(ep)});
        explore.push_back(rl::collect_rollout(*e, act_pre, horizon, rng, /*explore_flag=*/true, i));
        pre.push_back(explore.back().total_reward());
      }
      result.pre[ui] = mean_of(pre);

      // test-time adaptation with the training inner operator
      Rng inner_rng = Rng::from_key(eval_key, {3, task});
      const ParamVector adapted =
          inner_update(frozen, explore, *policy.feedforward, cfg.step.inner, inner_rng);

      const rl::PolicyFn act_post = [&](std::span<const double> obs) {
        return policy.feedforward->logits(adapted, obs);
      };
      std::vector<double> post;
      for (int ep = 0; ep < cfg.step.meta.exploit_episodes; ++ep) {
        Rng rng = Rng::from_key(eval_key, {4, task, static_cast<std::uint64_t>(ep)});
        rl::Trajectory t = rl::collect_rollout(*e, act_post, horizon, rng,
                                               /*explore_flag=*/false, i);
        post.push_back(t.total_reward());
        collected[ui].push_back(std::move(t));
      }
      for (rl::Trajectory& t : explore) collected[ui].push_back(std::move(t));
      result.post[ui] = mean_of(post);
    });
  }

  result.mean_pre = mean_of(result.pre);
  result.mean_post = mean_of(result.post);
  result.mean_gap = result.mean_post - result.mean_pre;
  std::vector<rl::Trajectory> flat;
  for (auto& batch : collected) {
    for (rl::Trajectory& t : batch) {
      result.env_steps += t.length();
      flat.push_back(std::move(t));
    }
  }
  if (cfg.family == env::Family::krazy) {
    result.heuristics = heuristic_metrics(flat, test_tasks);
  }
  return result;
}

std::vector<SweepPoint> grad_steps_sweep(const ExperimentConfig& cfg, const PolicyBundle& policy,
                                         const ParamVector& params,
                                         std::span<const env::TaskSpec> test_tasks, int max_steps,
                                         const WorkerPool& pool, std::uint64_t eval_key) {
  check(!meta::algo_recurrent(cfg.step.algo),
        "grad_steps_sweep: recurrent algorithms have no test-time gradient steps");
  check(active_head_matches(cfg, policy), "grad_steps_sweep: policy head does not match algo");
  check(!test_tasks.empty(), "grad_steps_sweep: empty task pool");
  check(max_steps >= 0 && max_steps <= 20, "grad_steps_sweep: max_steps outside 0..20");
  const auto n = static_cast<int>(test_tasks.size());
  const ParamVector frozen = params.detached();

  // returns[s][i]: mean return after s gradient steps on task i
  std::vector<std::vector<double>> returns(static_cast<std::size_t>(max_steps) + 1,
                                           std::vector<double>(static_cast<std::size_t>(n), 0.0));
  pool.parallel_for(n, [&](int i) {
    const auto ui = static_cast<std::size_t>(i);
    const auto task = static_cast<std::uint64_t>(i);
    const int horizon = task_horizon(cfg.step, test_tasks[ui]);
    auto e = env::make_env(test_tasks[ui], cfg.step.env);

    std::vector<rl::Trajectory> explore;
    const rl::PolicyFn act_pre = [&](std::span<const double> obs) {
      return policy.feedforward->logits(frozen, obs);
    };
    for (int ep = 0; ep < cfg.step.meta.explore_episodes; ++ep) {
      Rng rng = Rng::from_key(eval_key, {5, task, static_cast<std::uint64_t>(ep)});
      explore.push_back(rl::collect_rollout(*e, act_pre, horizon, rng, /*explore_flag=*/true, i));
    }

    for (int s = 0; s <= max_steps; ++s) {
      ParamVector theta = frozen;
      if (s > 0) {
        meta::InnerOperatorConfig inner = cfg.step.inner;
        inner.inner_steps = s;
        Rng inner_rng = Rng::from_key(eval_key, {6, task, static_cast<std::uint64_t>(s)});
        theta = inner_update(frozen, explore, *policy.feedforward, inner, inner_rng);
      }
      const rl::PolicyFn act = [&](std::span<const double> obs) {
        return policy.feedforward->logits(theta, obs);
      };
      std::vector<double> rets;
      for (int ep = 0; ep < cfg.step.meta.exploit_episodes; ++ep) {
        Rng rng = Rng::from_key(
            eval_key, {7, task, static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(ep)});
        rets.push_back(
            rl::collect_rollout(*e, act, horizon, rng, /*explore_flag=*/false, i).total_reward());
      }
      returns[static_cast<std::size_t>(s)][ui] = mean_of(rets);
    }
  });

  std::vector<SweepPoint> sweep;
  for (int s = 0; s <= max_steps; ++s) {
    sweep.push_back({s, mean_of(returns[static_cast<std::size_t>(s)])});
  }
  return sweep;
}

RepeatResult run_repeat(const ExperimentConfig& cfg, int repeat) {
  cfg.validate();
  check(repeat >= 0, "run_repeat: repeat must be >= 0");
  const auto r = static_cast<std::uint64_t>(repeat);

  ExperimentConfig run = cfg;
  run.step.seed = mix_key(cfg.step.seed, {kRepeatStream, r});
  if (cfg.resample_hparams) {
    // the one stability knob the reference setup gives as a bounded range
    Rng h = Rng::from_key(cfg.step.seed, {kHparamStream, r});
    run.step.meta.max_grad_norm = h.uniform(0.9, 1.0);
  }

  const PolicyBundle policy = make_policy(run);
  Rng init_rng = Rng::from_key(run.step.seed, {kInitStream});
  ParamVector params = init_policy_params(run, policy, init_rng);
  opt::Adam adam({.lr = run.step.meta.beta}, params);
  const WorkerPool pool(run.n_workers);

  Rng test_rng = Rng::from_key(run.step.seed, {kPoolStream, 1});
  const auto test_tasks = sample_task_pool(run, /*test_pool=*/true, run.n_test_tasks, test_rng);

  RepeatResult result;
  std::int64_t iter = 0;
  while (result.env_steps < run.budget) {
    Rng train_rng = Rng::from_key(run.step.seed, {kPoolStream, 0, static_cast<std::uint64_t>(iter)});
    const auto train_tasks =
        sample_task_pool(run, /*test_pool=*/false, run.n_train_tasks, train_rng);

    const meta::IterationStats stats =
        meta::algo_recurrent(run.step.algo)
            ? meta::meta_step_recurrent(run.step, *policy.recurrent, params, adam, train_tasks,
                                        pool, iter)
            : meta::meta_step(run.step, *policy.feedforward, params, adam, train_tasks, pool, iter);
    check(stats.env_steps > 0, "run_repeat: iteration consumed no environment steps");
    result.env_steps += stats.env_steps;

    if ((iter + 1) % run.eval_every == 0 || result.env_steps >= run.budget) {
      const std::uint64_t eval_key =
          mix_key(run.step.seed, {kEvalKeyStream, static_cast<std::uint64_t>(iter)});
      const GapResult gap = evaluate_gap(run, policy, params, test_tasks, pool, eval_key);
      CurvePoint point;
      point.env_steps = static_cast<double>(result.env_steps);
      point.pre_return = gap.mean_pre;
      point.post_return = gap.mean_post;
      point.gap = gap.mean_gap;
      point.heuristics = gap.heuristics;
      result.curve.push_back(point);
    }
    ++iter;
  }
  result.final_params = std::move(params);
  return result;
}

csv::Table curve_table(const ExperimentConfig& cfg, std::span<const CurvePoint> curve) {
  csv::Table t({"env_steps", "algo", "env", "seed", "pre_return", "post_return", "gap",
                "tile_fraction", "death_visits", "goals_reached"});
  for (const CurvePoint& p : curve) {
    std::vector<std::string> row = {csv::format_double(p.env_steps),
                                    meta::algo_name(cfg.step.algo),
                                    env::family_name(cfg.family),
                                    std::to_string(cfg.step.seed),
                                    csv::format_double(p.pre_return),
                                    csv::format_double(p.post_return),
                                    csv::format_double(p.gap)};
    if (p.heuristics) {
      row.push_back(csv::format_double(p.heuristics->tile_fraction));
      row.push_back(csv::format_double(p.heuristics->death_visits));
      row.push_back(csv::format_double(p.heuristics->goals_reached));
    } else {
      row.insert(row.end(), {"", "", ""});
    }
    t.add_row(std::move(row));
  }
  return t;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto path_of = [&](const std::string& name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  ExperimentResult result;
  for (int r = 0; r < cfg.repeats; ++r) {
    RepeatResult rr = run_repeat(cfg, r);
    curve_table(cfg, rr.curve).write_file(path_of("curve_repeat_" + std::to_string(r) + ".csv"));
    if (r == 0) {
      result.checkpoint_path = path_of("checkpoint.bin");
      save_checkpoint(result.checkpoint_path, rr.final_params);
    }
    result.repeat_curves.push_back(std::move(rr.curve));
  }

  // index-aligned mean, truncated to the shortest repeat
  std::size_t n_points = result.repeat_curves.front().size();
  for (const auto& c : result.repeat_curves) n_points = std::min(n_points, c.size());
  check(n_points >= 1, "run_experiment: a repeat produced no curve points");
  const auto n_rep = static_cast<double>(cfg.repeats);
  for (std::size_t i = 0; i < n_points; ++i) {
    CurvePoint mean;
    const bool with_heur = result.repeat_curves.front()[i].heuristics.has_value();
    if (with_heur) mean.heuristics = HeuristicMetrics{};
    for (const auto& c : result.repeat_curves) {
      const CurvePoint& p = c[i];
      mean.env_steps += p.env_steps;
      mean.pre_return += p.pre_return;
      mean.post_return += p.post_return;
      mean.gap += p.gap;
      check(p.heuristics.has_value() == with_heur,
            "run_experiment: inconsistent heuristic columns across repeats");
      if (with_heur) {
        mean.heuristics->tile_fraction += p.heuristics->tile_fraction;
        mean.heuristics->death_visits += p.heuristics->death_visits;
        mean.heuristics->goals_reached += p.heuristics->goals_reached;
      }
    }
    mean.env_steps /= n_rep;
    mean.pre_return /= n_rep;
    mean.post_return /= n_rep;
    mean.gap /= n_rep;
    if (with_heur) {
      mean.heuristics->tile_fraction /= n_rep;
      mean.heuristics->death_visits /= n_rep;
      mean.heuristics->goals_reached /= n_rep;
    }
    result.curve.push_back(mean);
  }

  result.curve_path = path_of("curve.csv");
  curve_table(cfg, result.curve).write_file(result.curve_path);
  return result;
}

}  // namespace metaexp::harness
