#include <cmath>
#include <vector>

#include "doctest.h"
#include "metaexp/ad.hpp"
#include "metaexp/env.hpp"
#include "metaexp/errors.hpp"
#include "metaexp/inner_update.hpp"
#include "metaexp/meta_step.hpp"
#include "metaexp/meta_surrogates.hpp"
#include "metaexp/optimizer.hpp"
#include "metaexp/oracle.hpp"
#include "metaexp/params.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rl2.hpp"
#include "metaexp/rng.hpp"
#include "metaexp/rollout.hpp"
#include "metaexp/surrogate.hpp"
#include "metaexp/workers.hpp"

using namespace metaexp;
using ad::Tensor;
using meta::Algo;
using meta::CreditMode;
using meta::InnerKind;
using meta::InnerOperatorConfig;
using meta::MetaBatch;
using meta::MetaConfig;
using meta::MetaStepConfig;
using meta::Rl2Config;
using meta::TaskData;
using oracle::TabularPolicy;
using rl::Trajectory;

namespace {

std::vector<Tensor> segment_tensors(const ParamVector& pv) {
  std::vector<Tensor> out;
  for (const auto& seg : pv.segments()) out.push_back(seg.value);
  return out;
}

std::vector<double> flat_grads(const Tensor& loss, const ParamVector& leaves) {
  auto grads = ad::backward(loss, segment_tensors(leaves), false);
  ParamVector gv;
  for (std::size_t i = 0; i < grads.size(); ++i) gv.add(leaves.seg(i).name, grads[i]);
  return gv.flatten();
}

bool any_on_tape(const ParamVector& pv) {
  for (const auto& seg : pv.segments()) {
    if (seg.value.on_tape()) return true;
  }
  return false;
}

// starting point for the enumerable problem: one logits row per state,
// pushed away from uniform so gradients are nontrivial
ParamVector random_table(std::uint64_t key) {
  Rng rng = Rng::from_key(key, {71});
  std::vector<double> vals(6);
  for (double& v : vals) v = rng.uniform(-0.8, 0.8);
  ParamVector pv;
  pv.add("table", Tensor::constant({3, 2}, std::move(vals)));
  return pv;
}

// every trajectory of one enumerable task, explore-flagged
std::vector<Trajectory> all_trajectories(const oracle::EnumTask& task, const rl::Policy& policy,
                                         const ParamVector& sampling, bool explore_flag) {
  std::vector<Trajectory> out;
  for (int a0 = 0; a0 < 2; ++a0) {
    for (int a1 = 0; a1 < 2; ++a1) {
      out.push_back(oracle::enum_trajectory(task, a0, a1, policy, sampling, explore_flag));
    }
  }
  return out;
}

InnerOperatorConfig plain_inner(InnerKind kind) {
  InnerOperatorConfig cfg;
  cfg.kind = kind;
  cfg.alpha = 0.05;
  cfg.gamma = 1.0;
  cfg.ent_coeff = 0.0;
  cfg.normalize_adv = false;
  return cfg;
}

MetaConfig plain_meta(double lambda) {
  MetaConfig cfg;
  cfg.lambda_explore = lambda;
  cfg.gamma = 1.0;
  cfg.credit_mode = CreditMode::per_timestep;
  cfg.explore_episodes = 1;
  cfg.exploit_episodes = 1;
  cfg.outer_kind = rl::SurrogateKind::vpg;
  cfg.ent_coeff = 0.0;
  cfg.normalize_adv = false;
  return cfg;
}

// a full-support two-task batch adapted with the given operator; exploit
// episodes are relabeled under the adapted snapshot exactly as collection
// would record them
MetaBatch enum_batch(ad::Tape& tape, const ParamVector& theta_values, const rl::Policy& policy,
                     const InnerOperatorConfig& inner, std::uint64_t seed) {
  MetaBatch batch;
  batch.theta = theta_values.as_leaves(tape);
  const oracle::EnumMdp mdp = oracle::default_enum_mdp();
  for (std::size_t m = 0; m < mdp.tasks.size(); ++m) {
    TaskData td;
    td.inner_kind = inner.kind;
    td.explore = all_trajectories(mdp.tasks[m], policy, batch.theta.detached(), true);
    Rng rng = Rng::from_key(seed, {2, m});
    td.adapted = inner_update(batch.theta, td.explore, policy, inner, rng);
    td.exploit = all_trajectories(mdp.tasks[m], policy, td.adapted.detached(), false);
    batch.tasks.push_back(std::move(td));
  }
  return batch;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double l2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("estimator oracle suite") {
  // brute-force expectations on the enumerable problem vs the exactly
  // differentiated objectives, plus the closed-form and variance checks
  const auto checks = oracle::estimator_checks(1234);
  if (!oracle::all_pass(checks)) MESSAGE(oracle::format_report(checks));
  CHECK(oracle::all_pass(checks));
  CHECK(checks.size() >= 15);
}

TEST_CASE("inner operator config validation") {
  InnerOperatorConfig cfg = plain_inner(InnerKind::sgd_vpg);
  CHECK_NOTHROW(cfg.validate());
  SUBCASE("non-positive step size") {
    cfg.alpha = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("step count bounds") {
    cfg.inner_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.inner_steps = 21;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("multi-step requires batch reuse") {
    cfg.inner_steps = 2;
    cfg.simple_sampling = false;
    CHECK_THROWS_WITH_AS(cfg.validate(), doctest::Contains("simple_sampling"), ConfigError);
    cfg.simple_sampling = true;
    CHECK_NOTHROW(cfg.validate());
  }
  SUBCASE("perturbation scale") {
    cfg.kind = InnerKind::random_perturb;
    cfg.sigma = 0.0;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("mixing probability range") {
    cfg.kind = InnerKind::eps_greedy;
    cfg.eps_op = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("discount range") {
    cfg.gamma = 1.5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
  }
  SUBCASE("empty explore batch is a contract violation") {
    TabularPolicy policy(3, 2);
    ad::Tape tape;
    ParamVector theta = random_table(5).as_leaves(tape);
    Rng rng(0);
    CHECK_THROWS_AS(inner_update(theta, {}, policy, cfg, rng), ContractViolation);
  }
}

TEST_CASE("adaptation operators") {
  TabularPolicy policy(3, 2);
  const ParamVector theta_values = random_table(11);
  const oracle::EnumMdp mdp = oracle::default_enum_mdp();

  SUBCASE("taped and constant inputs produce identical values") {
    ad::Tape tape;
    ParamVector taped = theta_values.as_leaves(tape);
    auto batch = all_trajectories(mdp.tasks[0], policy, theta_values, true);
    Rng r1(0), r2(0);
    const auto cfg = plain_inner(InnerKind::sgd_vpg);
    ParamVector from_taped = inner_update(taped, batch, policy, cfg, r1);
    ParamVector from_const = inner_update(theta_values, batch, policy, cfg, r2);
    CHECK(any_on_tape(from_taped));
    CHECK_FALSE(any_on_tape(from_const));
    CHECK(pv_bit_equal(from_taped.detached(), from_const));
  }

  SUBCASE("tape attachment matches operator differentiability") {
    for (InnerKind kind : {InnerKind::sgd_vpg, InnerKind::sgd_ppo, InnerKind::random_perturb,
                           InnerKind::eps_greedy, InnerKind::sign_flip, InnerKind::perpendicular}) {
      CAPTURE(meta::inner_kind_name(kind));
      ad::Tape tape;
      ParamVector taped = theta_values.as_leaves(tape);
      auto batch = all_trajectories(mdp.tasks[0], policy, theta_values, true);
      Rng rng = Rng::from_key(13, {static_cast<std::uint64_t>(kind)});
      ParamVector adapted = inner_update(taped, batch, policy, plain_inner(kind), rng);
      CHECK(any_on_tape(adapted) == meta::inner_kind_differentiable(kind));
      CHECK(adapted.same_schema(taped));
    }
  }

  SUBCASE("repeated steps keep descending the inner objective") {
    auto batch = all_trajectories(mdp.tasks[0], policy, theta_values, true);
    auto cfg = plain_inner(InnerKind::sgd_vpg);
    auto loss_at = [&](const ParamVector& p) {
      ad::Tape tape;
      return meta::inner_surrogate(p.as_leaves(tape), batch, policy, cfg).item();
    };
    Rng rng(0);
    cfg.inner_steps = 1;
    const double after_one = loss_at(inner_update(theta_values, batch, policy, cfg, rng));
    cfg.inner_steps = 3;
    const double after_three = loss_at(inner_update(theta_values, batch, policy, cfg, rng));
    const double start = loss_at(theta_values);
    CHECK(after_one < start);
    CHECK(after_three < after_one);
  }

  SUBCASE("perturbation is reproducible per key and keyed apart") {
    auto batch = all_trajectories(mdp.tasks[0], policy, theta_values, true);
    const auto cfg = plain_inner(InnerKind::random_perturb);
    Rng a = Rng::from_key(7, {1}), b = Rng::from_key(7, {1}), c = Rng::from_key(7, {2});
    ParamVector pa = inner_update(theta_values, batch, policy, cfg, a);
    ParamVector pb = inner_update(theta_values, batch, policy, cfg, b);
    ParamVector pc = inner_update(theta_values, batch, policy, cfg, c);
    CHECK(pv_bit_equal(pa, pb));
    CHECK_FALSE(pv_bit_equal(pa, pc));
    CHECK_FALSE(pv_bit_equal(pa, theta_values));
  }

  SUBCASE("always-mixing eps operator leaves the gradient path") {
    auto batch = all_trajectories(mdp.tasks[0], policy, theta_values, true);
    auto cfg = plain_inner(InnerKind::eps_greedy);
    cfg.eps_op = 1.0;
    Rng rng = Rng::from_key(7, {3});
    ParamVector mixed = inner_update(theta_values, batch, policy, cfg, rng);
    Rng unused(0);
    ParamVector stepped =
        inner_update(theta_values, batch, policy, plain_inner(InnerKind::sgd_vpg), unused);
    CHECK_FALSE(pv_bit_equal(mixed, stepped));
  }
}

TEST_CASE("meta surrogates") {
  TabularPolicy policy(3, 2);
  const ParamVector theta_values = random_table(23);

  SUBCASE("zero exploration weight reduces exactly to the adaptation objective") {
    const auto inner = plain_inner(InnerKind::sgd_vpg);
    ad::Tape t1;
    MetaBatch b1 = enum_batch(t1, theta_values, policy, inner, 40);
    Tensor l1 = meta::maml_surrogate(b1, policy, plain_meta(0.0));
    auto g1 = flat_grads(l1, b1.theta);

    ad::Tape t2;
    MetaBatch b2 = enum_batch(t2, theta_values, policy, inner, 40);
    Tensor l2 = meta::emaml_surrogate(b2, policy, plain_meta(0.0));
    auto g2 = flat_grads(l2, b2.theta);

    CHECK(l1.item() == l2.item());
    CHECK(max_abs_diff(g1, g2) == 0.0);
  }

  SUBCASE("the lambda difference isolates the exploration term") {
    // the loss is linear in lambda, so g(2) - g(1) is the term gradient; it
    // must match between a batch adapted differentiably and the same data
    // relabeled as a detached adaptation, because the term only reads explore
    // log-probs and exploit returns
    const auto inner = plain_inner(InnerKind::sgd_vpg);
    auto lambda_diff = [&](bool detach_adaptation) {
      std::vector<double> diff;
      for (double lambda : {2.0, 1.0}) {
        ad::Tape tape;
        MetaBatch batch = enum_batch(tape, theta_values, policy, inner, 41);
        if (detach_adaptation) {
          for (TaskData& td : batch.tasks) {
            td.adapted = td.adapted.detached();
            td.inner_kind = InnerKind::random_perturb;
          }
        }
        auto g = flat_grads(meta::emaml_surrogate(batch, policy, plain_meta(lambda)), batch.theta);
        if (diff.empty()) {
          diff = g;
        } else {
          for (std::size_t i = 0; i < g.size(); ++i) diff[i] -= g[i];
        }
      }
      return diff;
    };
    const auto through = lambda_diff(false);
    const auto detached = lambda_diff(true);
    CHECK(l2(through) > 1e-6);  // the term actually contributes
    CHECK(max_abs_diff(through, detached) <= 1e-12);
  }

  SUBCASE("zero exploit rewards give an exactly zero loss and gradient") {
    ad::Tape tape;
    MetaBatch batch = enum_batch(tape, theta_values, policy, plain_inner(InnerKind::sgd_vpg), 42);
    for (TaskData& td : batch.tasks) {
      for (Trajectory& t : td.exploit) t.rewards.assign(t.rewards.size(), 0.0);
    }
    Tensor loss = meta::maml_surrogate(batch, policy, plain_meta(0.0));
    CHECK(loss.item() == 0.0);
    for (double g : flat_grads(loss, batch.theta)) CHECK(g == 0.0);
  }

  SUBCASE("single bandit step evaluates to the score form in closed form") {
    TabularPolicy bandit(1, 2);
    ad::Tape tape;
    ParamVector pv;
    pv.add("table", Tensor::constant({1, 2}, {0.4, -0.3}));
    MetaBatch batch;
    batch.theta = pv.as_leaves(tape);
    TaskData td;
    td.inner_kind = InnerKind::sgd_vpg;
    td.adapted = batch.theta;  // identity adaptation keeps the closed form raw
    Trajectory t;
    t.observations = {{1.0}};
    t.actions = {0};
    t.rewards = {1.7};
    t.dones = {1};
    t.log_probs = {0.0};
    td.exploit = {t};
    batch.tasks.push_back(std::move(td));
    const double lp0 = 0.4 - std::log(std::exp(0.4) + std::exp(-0.3));
    Tensor loss = meta::maml_surrogate(batch, bandit, plain_meta(0.0));
    CHECK(loss.item() == doctest::Approx(-lp0 * 1.7).epsilon(1e-15));
  }

  SUBCASE("episode flags are enforced per batch") {
    const auto inner = plain_inner(InnerKind::sgd_vpg);
    ad::Tape tape;
    MetaBatch batch = enum_batch(tape, theta_values, policy, inner, 43);
    SUBCASE("explore-flagged episode in the exploit batch") {
      batch.tasks[0].exploit[0].explore_flag = true;
      CHECK_THROWS_AS(meta::maml_surrogate(batch, policy, plain_meta(0.0)), ContractViolation);
    }
    SUBCASE("unflagged episode in the explore batch") {
      batch.tasks[0].explore[0].explore_flag = false;
      CHECK_THROWS_AS(meta::emaml_surrogate(batch, policy, plain_meta(1.0)), ContractViolation);
    }
  }

  SUBCASE("adaptation-objective surrogate rejects a detached adaptation") {
    ad::Tape tape;
    MetaBatch batch = enum_batch(tape, theta_values, policy, plain_inner(InnerKind::sgd_vpg), 44);
    batch.tasks[0].adapted = batch.tasks[0].adapted.detached();
    CHECK_THROWS_WITH_AS(meta::maml_surrogate(batch, policy, plain_meta(0.0)),
                         doctest::Contains("tape-disconnected"), ContractViolation);
  }

  SUBCASE("non-differentiable operator kinds must hand over constants") {
    ad::Tape tape;
    MetaBatch batch = enum_batch(tape, theta_values, policy, plain_inner(InnerKind::sgd_vpg), 45);
    batch.tasks[0].inner_kind = InnerKind::random_perturb;  // but adapted stayed taped
    CHECK_THROWS_AS(meta::emaml_surrogate(batch, policy, plain_meta(1.0)), ContractViolation);
  }

  SUBCASE("credit modes build the documented tape structure") {
    for (CreditMode mode : {CreditMode::dice_scalar, CreditMode::per_timestep}) {
      CAPTURE(meta::credit_mode_name(mode));
      ad::Tape tape;
      Tensor row = tape.leaf({2}, {0.4, -0.3});
      Tensor lsm = ad::log_softmax(row);
      std::vector<meta::ExploreTermTask> tasks(1);
      tasks[0].exploit_return = 1.5;
      tasks[0].log_probs = {ad::reshape(ad::index_select(lsm, {0}), {}),
                            ad::reshape(ad::index_select(lsm, {1}), {})};
      const int before = tape.node_count();
      meta::exploration_term(tasks, mode, false);
      // the scalar-times-sum factorization: a product whose right factor is
      // the summed log-likelihood exists only in dice mode
      bool scalar_times_sum = false;
      for (int n = before; n < tape.node_count(); ++n) {
        if (tape.op_at(n) != ad::Op::mul) continue;
        const auto inputs = tape.inputs_at(n);
        if (inputs.size() == 2 && tape.op_at(inputs[1]) == ad::Op::sum) scalar_times_sum = true;
      }
      CHECK(scalar_times_sum == (mode == CreditMode::dice_scalar));
    }
  }
}

TEST_CASE("recurrent trials") {
  env::EnvConfig env_cfg;
  Rng task_rng = Rng::from_key(3, {1});
  const env::TaskSpec spec = env::sample_task(env::Family::pointmass, task_rng, env_cfg);
  auto e = env::make_env(spec, env_cfg);
  const int obs_len = e->obs_len();
  rl::GruPolicy policy({.input_len = rl::rl2_input_len(obs_len, e->n_actions()),
                        .n_actions = e->n_actions(),
                        .hidden = 6});
  Rng init_rng = Rng::from_key(3, {2});
  const ParamVector params = policy.init_params(init_rng);
  Rl2Config cfg;
  cfg.episodes_per_trial = 3;
  cfg.explore_episodes = 1;
  cfg.gamma = 0.99;
  const int horizon = 5;

  SUBCASE("trial shape and flags") {
    Rng rng = Rng::from_key(3, {3});
    auto trial = meta::rl2_trial(*e, policy, params, cfg, horizon, rng, 17);
    REQUIRE(trial.episodes.size() == 3);
    CHECK(trial.task_index == 17);
    CHECK(trial.episodes[0].explore_flag);
    CHECK_FALSE(trial.episodes[1].explore_flag);
    CHECK_FALSE(trial.episodes[2].explore_flag);
    for (const Trajectory& ep : trial.episodes) {
      CHECK(ep.length() >= 1);
      CHECK(ep.length() <= horizon);
      CHECK(static_cast<int>(ep.observations[0].size()) == obs_len);  // raw observations stored
    }
    CHECK(trial.total_steps() >= 3);
  }

  SUBCASE("same key reproduces the trial bitwise") {
    Rng r1 = Rng::from_key(3, {4}), r2 = Rng::from_key(3, {4});
    auto a = meta::rl2_trial(*e, policy, params, cfg, horizon, r1);
    auto b = meta::rl2_trial(*e, policy, params, cfg, horizon, r2);
    REQUIRE(a.episodes.size() == b.episodes.size());
    for (std::size_t i = 0; i < a.episodes.size(); ++i) {
      CHECK(a.episodes[i].actions == b.episodes[i].actions);
      CHECK(a.episodes[i].rewards == b.episodes[i].rewards);
      CHECK(a.episodes[i].log_probs == b.episodes[i].log_probs);
    }
  }

  SUBCASE("hidden state carries across episode boundaries") {
    Rng rng = Rng::from_key(3, {5});
    auto trial = meta::rl2_trial(*e, policy, params, cfg, horizon, rng);
    // replaying from the trial start reproduces every stored log-prob
    Tensor h = policy.initial_state();
    for (std::size_t ep = 0; ep < trial.episodes.size(); ++ep) {
      const Trajectory& traj = trial.episodes[ep];
      for (int t = 0; t < traj.length(); ++t) {
        const auto prev =
            meta::rl2_prev_transition(trial.episodes, static_cast<int>(ep), t);
        const auto x = rl::rl2_input(traj.observations[t], prev.action, prev.reward,
                                     prev.boundary, obs_len, policy.config().n_actions);
        auto [logits, next_h] = policy.step(params, h, Tensor::constant({(int)x.size()}, x));
        const double lp = ad::log_softmax(logits).values()[traj.actions[t]];
        CHECK(lp == doctest::Approx(traj.log_probs[t]).epsilon(1e-12));
        h = next_h;
      }
    }
    // a zeroed hidden state at the second episode's first step does not
    const Trajectory& second = trial.episodes[1];
    const auto prev = meta::rl2_prev_transition(trial.episodes, 1, 0);
    CHECK(prev.boundary == 1.0);
    CHECK(prev.action == trial.episodes[0].actions.back());
    const auto x = rl::rl2_input(second.observations[0], prev.action, prev.reward, prev.boundary,
                                 obs_len, policy.config().n_actions);
    auto [logits, ignored] =
        policy.step(params, policy.initial_state(), Tensor::constant({(int)x.size()}, x));
    const double lp_zeroed = ad::log_softmax(logits).values()[second.actions[0]];
    CHECK(std::abs(lp_zeroed - second.log_probs[0]) > 1e-12);
  }

  SUBCASE("without an exploration prefix both trial objectives coincide") {
    Rl2Config flat = cfg;
    flat.explore_episodes = 0;
    Rng rng = Rng::from_key(3, {6});
    std::vector<meta::TrialData> trials;
    trials.push_back(meta::rl2_trial(*e, policy, params, flat, horizon, rng));
    ad::Tape t1;
    const double plain = meta::rl2_surrogate(trials, policy, params.as_leaves(t1), flat).item();
    ad::Tape t2;
    const double masked = meta::erl2_surrogate(trials, policy, params.as_leaves(t2), flat).item();
    CHECK(plain == masked);
  }

  SUBCASE("a trial needs at least one exploitation episode") {
    Rl2Config bad = cfg;
    bad.explore_episodes = 3;
    CHECK_THROWS_AS(bad.validate(), ConfigError);
  }
}

TEST_CASE("meta step") {
  env::EnvConfig env_cfg;
  std::vector<env::TaskSpec> tasks;
  Rng task_rng = Rng::from_key(9, {1});
  for (int i = 0; i < 3; ++i) {
    tasks.push_back(env::sample_task(env::Family::pointmass, task_rng, env_cfg));
  }
  rl::MlpPolicy policy({.obs_len = 2, .n_actions = 4, .hidden = 8});

  MetaStepConfig cfg;
  cfg.algo = Algo::emaml;
  cfg.meta.lambda_explore = 0.5;
  cfg.meta.beta = 0.02;
  cfg.meta.explore_episodes = 1;
  cfg.meta.exploit_episodes = 1;
  cfg.inner = plain_inner(InnerKind::sgd_vpg);
  cfg.inner.gamma = 0.99;
  cfg.horizon_override = 6;
  cfg.seed = 99;

  auto fresh_params = [&] {
    Rng rng = Rng::from_key(9, {2});
    return policy.init_params(rng);
  };

  SUBCASE("an iteration moves the parameters and reports coherent stats") {
    ParamVector params = fresh_params();
    const ParamVector before = params;
    opt::Adam adam({.lr = cfg.meta.beta}, params);
    const auto stats = meta::meta_step(cfg, policy, params, adam, tasks, WorkerPool(2), 0);
    CHECK_FALSE(pv_bit_equal(params, before));
    CHECK(adam.steps_taken() == 1);
    CHECK(std::isfinite(stats.loss));
    CHECK(stats.grad_norm >= 0.0);
    CHECK(stats.per_task_explore_return.size() == tasks.size());
    CHECK(stats.per_task_exploit_return.size() == tasks.size());
    CHECK(stats.env_steps > 0);
    CHECK(stats.env_steps <= static_cast<std::int64_t>(tasks.size()) * 2 * 6);
  }

  SUBCASE("reruns and worker counts do not change the result") {
    auto run = [&](int workers) {
      ParamVector params = fresh_params();
      opt::Adam adam({.lr = cfg.meta.beta}, params);
      for (std::int64_t iter = 0; iter < 2; ++iter) {
        meta::meta_step(cfg, policy, params, adam, tasks, WorkerPool(workers), iter);
      }
      return params;
    };
    const ParamVector one = run(1);
    CHECK(pv_bit_equal(one, run(1)));
    CHECK(pv_bit_equal(one, run(4)));
  }

  SUBCASE("iteration index feeds the sampling streams") {
    ParamVector p1 = fresh_params(), p2 = fresh_params();
    opt::Adam a1({.lr = cfg.meta.beta}, p1), a2({.lr = cfg.meta.beta}, p2);
    meta::meta_step(cfg, policy, p1, a1, tasks, WorkerPool(2), 0);
    meta::meta_step(cfg, policy, p2, a2, tasks, WorkerPool(2), 1);
    CHECK_FALSE(pv_bit_equal(p1, p2));
  }

  SUBCASE("config cross-field rules") {
    MetaStepConfig bad = cfg;
    SUBCASE("gradient adaptation through a detaching operator") {
      bad.algo = Algo::maml;
      bad.inner.kind = InnerKind::random_perturb;
      CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    SUBCASE("no gradient path at all") {
      bad.algo = Algo::emaml;
      bad.inner.kind = InnerKind::random_perturb;
      bad.meta.lambda_explore = 0.0;
      CHECK_THROWS_AS(bad.validate(), ConfigError);
      bad.meta.lambda_explore = 0.5;  // the exploration term restores one
      CHECK_NOTHROW(bad.validate());
    }
    SUBCASE("re-stepping needs the clipped outer surrogate") {
      bad.meta.meta_grad_steps = 2;
      bad.meta.outer_kind = rl::SurrogateKind::vpg;
      CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    SUBCASE("re-stepping needs the clipped trial surrogate") {
      bad.algo = Algo::rl2;
      bad.meta.meta_grad_steps = 2;
      bad.meta.outer_kind = rl::SurrogateKind::ppo_clip;
      bad.rl2.outer_kind = rl::SurrogateKind::vpg;
      CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
    SUBCASE("gradient adaptation needs an explore episode") {
      bad.meta.explore_episodes = 0;
      CHECK_THROWS_AS(bad.validate(), ConfigError);
    }
  }

  SUBCASE("multiple surrogate steps per iteration drive the optimizer") {
    MetaStepConfig multi = cfg;
    multi.meta.meta_grad_steps = 2;
    multi.meta.outer_kind = rl::SurrogateKind::ppo_clip;
    ParamVector params = fresh_params();
    opt::Adam adam({.lr = multi.meta.beta}, params);
    meta::meta_step(multi, policy, params, adam, tasks, WorkerPool(2), 0);
    CHECK(adam.steps_taken() == 2);
  }

  SUBCASE("recurrent iteration moves the parameters deterministically") {
    MetaStepConfig rcfg = cfg;
    rcfg.algo = Algo::rl2;
    rcfg.rl2.episodes_per_trial = 2;
    rcfg.rl2.explore_episodes = 1;
    rcfg.horizon_override = 5;
    rl::GruPolicy gru({.input_len = rl::rl2_input_len(2, 4), .n_actions = 4, .hidden = 6});
    auto run = [&](int workers) {
      Rng rng = Rng::from_key(9, {3});
      ParamVector params = gru.init_params(rng);
      opt::Adam adam({.lr = rcfg.meta.beta}, params);
      const auto stats =
          meta::meta_step_recurrent(rcfg, gru, params, adam, tasks, WorkerPool(workers), 0);
      CHECK(std::isfinite(stats.loss));
      CHECK(stats.env_steps > 0);
      return params;
    };
    Rng rng = Rng::from_key(9, {3});
    const ParamVector before = gru.init_params(rng);
    const ParamVector after = run(2);
    CHECK_FALSE(pv_bit_equal(after, before));
    CHECK(pv_bit_equal(after, run(1)));
    CHECK(pv_bit_equal(after, run(4)));
  }

  SUBCASE("algorithm names round-trip") {
    for (Algo a : {Algo::maml, Algo::emaml, Algo::rl2, Algo::erl2}) {
      const auto back = meta::algo_from_name(meta::algo_name(a));
      REQUIRE(back.has_value());
      CHECK(*back == a);
    }
    CHECK_FALSE(meta::algo_from_name("bogus").has_value());
    CHECK_FALSE(meta::algo_recurrent(Algo::maml));
    CHECK_FALSE(meta::algo_recurrent(Algo::emaml));
    CHECK(meta::algo_recurrent(Algo::rl2));
    CHECK(meta::algo_recurrent(Algo::erl2));
  }
}
