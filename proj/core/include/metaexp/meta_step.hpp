#pragma once

#include <optional>
#include <span>
#include <string>

#include "metaexp/env.hpp"
#include "metaexp/meta_surrogates.hpp"
#include "metaexp/optimizer.hpp"
#include "metaexp/rl2.hpp"
#include "metaexp/workers.hpp"

namespace metaexp::meta {

enum class Algo { maml, emaml, rl2, erl2 };
const char* algo_name(Algo a);
std::optional<Algo> algo_from_name(const std::string& name);
bool algo_recurrent(Algo a);  // trial-based rnn algorithms vs gradient adaptation

// rng stream tags: every random decision is keyed by (seed, stream, iter,
// task, episode), so results never depend on worker count or scheduling
enum RngStream : std::uint64_t {
  kExploreStream = 1,
  kInnerStream = 2,
  kExploitStream = 3,
  kTrialStream = 4,
  kEvalStream = 5,
  kTaskStream = 6,
};

struct IterationStats {
  double loss = 0.0;
  double explore_mean_return = 0.0;  // true rewards, pre-update / explore-flagged episodes
  double exploit_mean_return = 0.0;  // post-update / exploit episodes
  std::vector<double> per_task_explore_return;
  std::vector<double> per_task_exploit_return;
  double grad_norm = 0.0;  // before clipping, first meta gradient step
  bool clipped = false;
  std::int64_t env_steps = 0;  // environment transitions consumed this iteration
  // exploration heuristics, averaged over episodes on krazy tasks (0 elsewhere)
  double mean_tile_fraction = 0.0;
  double mean_goals = 0.0;
  double mean_deaths = 0.0;
};

struct MetaStepConfig {
  Algo algo = Algo::emaml;
  MetaConfig meta;
  InnerOperatorConfig inner;
  Rl2Config rl2;
  env::EnvConfig env;
  int horizon_override = 0;  // 0 keeps each task's own horizon
  std::uint64_t seed = 0;

  void validate() const;  // cross-field rules rejected at load time
};

// One meta iteration for the gradient-adaptation algorithms (maml, emaml):
// parallel explore collection under frozen params, per-task adaptation,
// parallel exploit collection, then meta_grad_steps surrogate/backward/Adam
// updates (the tape is rebuilt against the current params each step).
IterationStats meta_step(const MetaStepConfig& cfg, const rl::Policy& policy,
                         ParamVector& params, opt::Adam& adam,
                         std::span<const env::TaskSpec> tasks, const WorkerPool& pool,
                         std::int64_t iter);

// One meta iteration for the trial-based recurrent algorithms (rl2, erl2).
IterationStats meta_step_recurrent(const MetaStepConfig& cfg, const rl::GruPolicy& policy,
                                   ParamVector& params, opt::Adam& adam,
                                   std::span<const env::TaskSpec> tasks, const WorkerPool& pool,
                                   std::int64_t iter);

}  // namespace metaexp::meta
