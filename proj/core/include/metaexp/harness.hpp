#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "metaexp/csv.hpp"
#include "metaexp/env.hpp"
#include "metaexp/meta_step.hpp"
#include "metaexp/params.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rollout.hpp"
#include "metaexp/workers.hpp"

namespace metaexp::harness {

// One meta-training experiment.  `step` carries the algorithm choice and
// every module config; the fields here are the protocol knobs around it.
struct ExperimentConfig {
  meta::MetaStepConfig step;
  env::Family family = env::Family::krazy;
  int n_train_tasks = 32;        // fresh draws per meta-iteration
  int n_test_tasks = 64;         // fixed held-out pool per repeat
  std::int64_t budget = 200000;  // training env steps per repeat
  int eval_every = 10;           // meta-iterations between held-out evaluations
  int repeats = 5;               // independent runs averaged into the curve
  bool resample_hparams = false;  // redraw the ranged stability knob per repeat
  int mlp_hidden = 64;
  int mlp_bias_dim = 0;
  int gru_hidden = 64;
  int n_workers = 0;  // worker pool size; 0 picks hardware concurrency

  void validate() const;
};

// exactly one head is active, matching algo_recurrent(step.algo)
struct PolicyBundle {
  std::unique_ptr<rl::Policy> feedforward;
  std::unique_ptr<rl::GruPolicy> recurrent;
};
PolicyBundle make_policy(const ExperimentConfig& cfg);
ParamVector init_policy_params(const ExperimentConfig& cfg, const PolicyBundle& policy, Rng& rng);

// Task draws for one pool.  Train and test identities can never collide:
// train draws clear the top layout-seed bit, test draws set it.
std::vector<env::TaskSpec> sample_task_pool(const ExperimentConfig& cfg, bool test_pool, int n,
                                            Rng& rng);

struct HeuristicMetrics {
  double tile_fraction = 0.0;  // distinct visitable tile types touched / 8
  double death_visits = 0.0;   // episodes ended on a death square
  double goals_reached = 0.0;  // distinct goal cells collected
};
// per-episode means of the exploration counters; every rollout must come
// from a krazy task (specs are indexed by the rollouts' task_index)
HeuristicMetrics heuristic_metrics(std::span<const rl::Trajectory> rollouts,
                                   std::span<const env::TaskSpec> specs);

struct GapResult {
  std::vector<double> pre;   // per held-out task
  std::vector<double> post;  // per held-out task
  double mean_pre = 0.0;
  double mean_post = 0.0;
  double mean_gap = 0.0;  // mean_post - mean_pre
  std::optional<HeuristicMetrics> heuristics;  // krazy pools only
  std::int64_t env_steps = 0;  // measurement cost; excluded from the training budget
};
// Jump-start measurement on held-out tasks.  Gradient algorithms adapt with
// the training inner operator and compare explore-episode returns against
// post-update returns; recurrent algorithms run one trial per task and
// compare the explore prefix against the exploit suffix.  `params` is never
// modified; all sampling is keyed off `eval_key` alone.
GapResult evaluate_gap(const ExperimentConfig& cfg, const PolicyBundle& policy,
                       const ParamVector& params, std::span<const env::TaskSpec> test_tasks,
                       const WorkerPool& pool, std::uint64_t eval_key);

struct SweepPoint {
  int steps = 0;
  double mean_return = 0.0;
};
// Held-out return as a function of the test-time gradient-step count,
// steps = 0..max_steps, reusing one explore batch per task across counts.
// Gradient algorithms only.
std::vector<SweepPoint> grad_steps_sweep(const ExperimentConfig& cfg, const PolicyBundle& policy,
                                         const ParamVector& params,
                                         std::span<const env::TaskSpec> test_tasks, int max_steps,
                                         const WorkerPool& pool, std::uint64_t eval_key);

struct CurvePoint {
  double env_steps = 0.0;  // cumulative training steps when measured (mean across repeats)
  double pre_return = 0.0;
  double post_return = 0.0;
  double gap = 0.0;
  std::optional<HeuristicMetrics> heuristics;
};

struct RepeatResult {
  std::vector<CurvePoint> curve;
  ParamVector final_params;
  std::int64_t env_steps = 0;  // total training steps consumed
};
// one full training run (fresh params, fresh pools) under the repeat's
// derived seed
RepeatResult run_repeat(const ExperimentConfig& cfg, int repeat);

struct ExperimentResult {
  std::vector<CurvePoint> curve;  // index-aligned arithmetic mean over repeats
  std::vector<std::vector<CurvePoint>> repeat_curves;
  std::string curve_path;
  std::string checkpoint_path;
};
// The full protocol: `repeats` independent runs; per-repeat curves land in
// <out_dir>/curve_repeat_<r>.csv, the averaged curve in <out_dir>/curve.csv,
// the first repeat's final params in <out_dir>/checkpoint.bin.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const std::string& out_dir);

// curve row schema shared with the cli; heuristic cells are empty for
// non-krazy families
csv::Table curve_table(const ExperimentConfig& cfg, std::span<const CurvePoint> curve);

}  // namespace metaexp::harness
