#include <cmath>
#include <cstddef>
#include <vector>

#include "metaexp/inner_update.hpp"
#include "metaexp/meta_surrogates.hpp"
#include "metaexp/oracle.hpp"

namespace metaexp::oracle {

namespace {

using ad::Tensor;
using meta::CreditMode;
using meta::InnerKind;
using meta::InnerOperatorConfig;
using meta::MetaBatch;
using meta::MetaConfig;
using meta::TaskData;

constexpr int kA = EnumMdp::kActions;
// the outer surrogate averages over a trajectory's timesteps, so the
// adaptation path carries 1/steps relative to the exploration term
constexpr double kStepMean = 1.0 / static_cast<double>(EnumMdp::kSteps);

std::vector<Tensor> segment_tensors(const ParamVector& p) {
  std::vector<Tensor> out;
  out.reserve(p.size());
  for (const auto& seg : p.segments()) out.push_back(seg.value);
  return out;
}

std::vector<double> flat_grads(const Tensor& loss, const ParamVector& leaves) {
  auto grads = ad::backward(loss, segment_tensors(leaves), false);
  ParamVector g;
  for (std::size_t i = 0; i < leaves.size(); ++i) g.add(leaves.seg(i).name, grads[i]);
  return g.flatten();
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<double> vec_sum(std::span<const double> x, std::span<const double> y) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return out;
}

std::vector<double> vec_scale(double alpha, std::span<const double> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = alpha * x[i];
  return out;
}

std::vector<double> action_probs(const rl::Policy& policy, const ParamVector& params,
                                 std::span<const double> obs) {
  auto lsm = ad::log_softmax(policy.logits(params.detached(), obs)).values();
  std::vector<double> p(lsm.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(lsm[i]);
  return p;
}

// gamma 1 everywhere below: the enumerated objective is the undiscounted
// post-adaptation return, so reward-to-go credit is exactly unbiased
InnerOperatorConfig inner_cfg(InnerKind kind) {
  InnerOperatorConfig c;
  c.kind = kind;
  c.alpha = 0.05;
  c.gamma = 1.0;
  c.ent_coeff = 0.0;
  c.normalize_adv = false;
  return c;
}

MetaConfig outer_cfg(CreditMode mode, double lambda, rl::SurrogateKind outer) {
  MetaConfig c;
  c.lambda_explore = lambda;
  c.gamma = 1.0;
  c.credit_mode = mode;
  c.explore_episodes = 1;
  c.exploit_episodes = 1;
  c.outer_kind = outer;
  c.ent_coeff = 0.0;
  c.normalize_adv = false;
  return c;
}

ParamVector rebuild(const ParamVector& schema, const std::vector<Tensor>& tensors) {
  ParamVector out;
  for (std::size_t i = 0; i < tensors.size(); ++i) out.add(schema.seg(i).name, tensors[i]);
  return out;
}

// J(theta) = mean_task sum_explore P_theta(explore) sum_exploit P'(exploit) R
// as one taped expression, adaptation included.  Freezing a factor detaches
// it, which splits the gradient into its two product-rule paths.
Tensor taped_objective(const EnumMdp& mdp, const rl::Policy& policy, const ParamVector& theta,
                       const InnerOperatorConfig& inner, bool freeze_sampling,
                       bool freeze_adapted) {
  const ParamVector frozen = theta.detached();
  Rng unused(0);
  std::vector<Tensor> terms;
  for (const EnumTask& task : mdp.tasks) {
    for (int a0e = 0; a0e < kA; ++a0e) {
      for (int a1e = 0; a1e < kA; ++a1e) {
        std::vector<rl::Trajectory> ebatch{enum_trajectory(task, a0e, a1e, policy, frozen, true)};
        Tensor p_bar = freeze_sampling
                           ? Tensor::scalar(enum_traj_prob(policy, frozen, a0e, a1e).item())
                           : enum_traj_prob(policy, theta, a0e, a1e);
        ParamVector adapted =
            meta::inner_update(freeze_adapted ? frozen : theta, ebatch, policy, inner, unused);
        for (int a0x = 0; a0x < kA; ++a0x) {
          for (int a1x = 0; a1x < kA; ++a1x) {
            Tensor p_x = enum_traj_prob(policy, adapted, a0x, a1x);
            terms.push_back(
                ad::mul(ad::mul(p_bar, p_x), Tensor::scalar(enum_return(task, a0x, a1x))));
          }
        }
      }
    }
  }
  return ad::mul(Tensor::scalar(1.0 / static_cast<double>(mdp.tasks.size())),
                 ad::sum(ad::concat(terms)));
}

std::vector<double> objective_grad(const EnumMdp& mdp, const rl::Policy& policy,
                                   const ParamVector& theta0, const InnerOperatorConfig& inner,
                                   bool freeze_sampling, bool freeze_adapted) {
  ad::Tape tape;
  ParamVector leaves = theta0.as_leaves(tape);
  Tensor j = taped_objective(mdp, policy, leaves, inner, freeze_sampling, freeze_adapted);
  return flat_grads(j, leaves);
}

// exact expectation of the sampled meta-gradient: every (task, explore,
// exploit) outcome weighted by its probability, the gradient taken through
// the production surrogate and inner update.  Returns -E[dLoss/dtheta], the
// ascent direction the estimator follows in the mean.
std::vector<double> estimator_expectation(const EnumMdp& mdp, const rl::Policy& policy,
                                          const ParamVector& theta0,
                                          const InnerOperatorConfig& inner, const MetaConfig& mc,
                                          bool use_maml) {
  const double w_task = 1.0 / static_cast<double>(mdp.tasks.size());
  std::vector<double> acc(static_cast<std::size_t>(theta0.total_len()), 0.0);
  Rng unused(0);
  for (const EnumTask& task : mdp.tasks) {
    for (int a0e = 0; a0e < kA; ++a0e) {
      for (int a1e = 0; a1e < kA; ++a1e) {
        std::vector<rl::Trajectory> ebatch{enum_trajectory(task, a0e, a1e, policy, theta0, true)};
        const double p_bar = enum_traj_prob(policy, theta0, a0e, a1e).item();
        ParamVector adapted_c = meta::inner_update(theta0, ebatch, policy, inner, unused);
        for (int a0x = 0; a0x < kA; ++a0x) {
          for (int a1x = 0; a1x < kA; ++a1x) {
            const double w = w_task * p_bar * enum_traj_prob(policy, adapted_c, a0x, a1x).item();
            ad::Tape tape;
            MetaBatch batch;
            batch.theta = theta0.as_leaves(tape);
            TaskData td;
            td.inner_kind = inner.kind;
            td.explore = ebatch;
            td.adapted = meta::inner_update(batch.theta, ebatch, policy, inner, unused);
            td.exploit = {enum_trajectory(task, a0x, a1x, policy, adapted_c, false)};
            batch.tasks.push_back(std::move(td));
            Tensor loss = use_maml ? meta::maml_surrogate(batch, policy, mc)
                                   : meta::emaml_surrogate(batch, policy, mc);
            auto g = flat_grads(loss, batch.theta);
            for (std::size_t i = 0; i < acc.size(); ++i) acc[i] -= w * g[i];
          }
        }
      }
    }
  }
  return acc;
}

double prob_sum_error(const EnumMdp& mdp, const rl::Policy& policy, const ParamVector& theta0,
                      const InnerOperatorConfig& inner) {
  double worst = 0.0;
  Rng unused(0);
  for (const EnumTask& task : mdp.tasks) {
    double outer_sum = 0.0;
    for (int a0e = 0; a0e < kA; ++a0e) {
      for (int a1e = 0; a1e < kA; ++a1e) {
        outer_sum += enum_traj_prob(policy, theta0, a0e, a1e).item();
        std::vector<rl::Trajectory> ebatch{enum_trajectory(task, a0e, a1e, policy, theta0, true)};
        ParamVector adapted = meta::inner_update(theta0, ebatch, policy, inner, unused);
        double inner_sum = 0.0;
        for (int a0x = 0; a0x < kA; ++a0x) {
          for (int a1x = 0; a1x < kA; ++a1x) {
            inner_sum += enum_traj_prob(policy, adapted, a0x, a1x).item();
          }
        }
        worst = std::max(worst, std::abs(inner_sum - 1.0));
      }
    }
    worst = std::max(worst, std::abs(outer_sum - 1.0));
  }
  return worst;
}

// one-step two-armed bandit episode, the smallest case with closed forms
rl::Trajectory bandit_trajectory(int action, double reward, const rl::Policy& policy,
                                 const ParamVector& sampling_params, bool explore_flag) {
  rl::Trajectory t;
  t.observations = {{1.0}};
  t.actions = {action};
  t.rewards = {reward};
  t.dones = {1};
  auto lsm = ad::log_softmax(policy.logits(sampling_params.detached(), t.observations[0]));
  t.log_probs = {lsm.values()[static_cast<std::size_t>(action)]};
  t.explore_flag = explore_flag;
  t.validate();
  return t;
}

}  // namespace

std::vector<Check> estimator_checks(std::uint64_t seed) {
  std::vector<Check> checks;

  const EnumMdp mdp = default_enum_mdp();
  const TabularPolicy tab(EnumMdp::kStates, EnumMdp::kActions);
  ParamVector theta0;
  {
    Rng theta_rng = Rng::from_key(seed, {1});
    std::vector<double> vals(static_cast<std::size_t>(EnumMdp::kStates * EnumMdp::kActions));
    for (double& v : vals) v = theta_rng.uniform(-0.8, 0.8);
    theta0.add("table", Tensor::constant({EnumMdp::kStates, EnumMdp::kActions}, vals));
  }
  const InnerOperatorConfig inner_vpg = inner_cfg(InnerKind::sgd_vpg);

  // the enumeration itself must describe probability distributions
  checks.push_back(make_check("enumerated trajectory probabilities sum to one",
                              prob_sum_error(mdp, tab, theta0, inner_vpg), 1e-12));

  // the exactly differentiated objective, its two product-rule paths, and a
  // finite-difference cross-check of the same taped expression
  const auto grad_full = objective_grad(mdp, tab, theta0, inner_vpg, false, false);
  const auto grad_adapt_path = objective_grad(mdp, tab, theta0, inner_vpg, true, false);
  const auto grad_sample_path = objective_grad(mdp, tab, theta0, inner_vpg, false, true);
  checks.push_back(make_check("path gradients sum to the full objective gradient",
                              max_abs_diff(vec_sum(grad_adapt_path, grad_sample_path), grad_full),
                              1e-12));
  {
    ad::TapedFn f = [&](ad::Tape&, const std::vector<Tensor>& ts) {
      return taped_objective(mdp, tab, rebuild(theta0, ts), inner_vpg, false, false);
    };
    checks.push_back(make_check("enumerated objective gradient matches finite differences",
                                ad::finite_difference_check(f, segment_tensors(theta0), 1e-4),
                                1e-6));
  }

  // flagship: the production estimators, averaged over every sampling
  // outcome, recover the enumerated gradient exactly (up to the documented
  // 1/steps weighting of the adaptation path)
  for (CreditMode mode : {CreditMode::per_timestep, CreditMode::dice_scalar}) {
    const auto e = estimator_expectation(mdp, tab, theta0, inner_vpg,
                                         outer_cfg(mode, kStepMean, rl::SurrogateKind::vpg),
                                         /*use_maml=*/false);
    checks.push_back(make_check(std::string("emaml expectation recovers the objective gradient "
                                            "(") +
                                    meta::credit_mode_name(mode) + ")",
                                ad::max_relative_error(vec_scale(1.0 / kStepMean, e), grad_full),
                                1e-8));
  }
  {
    const auto e = estimator_expectation(mdp, tab, theta0, inner_vpg,
                                         outer_cfg(CreditMode::per_timestep, 1.0,
                                                   rl::SurrogateKind::vpg),
                                         /*use_maml=*/false);
    const auto want = vec_sum(vec_scale(kStepMean, grad_adapt_path), grad_sample_path);
    checks.push_back(make_check("lambda scales the sampling-path gradient linearly",
                                ad::max_relative_error(e, want), 1e-8));
  }
  {
    const auto e = estimator_expectation(mdp, tab, theta0, inner_vpg,
                                         outer_cfg(CreditMode::per_timestep, 0.0,
                                                   rl::SurrogateKind::vpg),
                                         /*use_maml=*/true);
    checks.push_back(make_check("maml expectation recovers the adaptation-path gradient",
                                ad::max_relative_error(vec_scale(1.0 / kStepMean, e),
                                                       grad_adapt_path),
                                1e-8));
  }
  {
    const InnerOperatorConfig inner_ppo = inner_cfg(InnerKind::sgd_ppo);
    const auto full_ppo = objective_grad(mdp, tab, theta0, inner_ppo, false, false);
    const auto e = estimator_expectation(mdp, tab, theta0, inner_ppo,
                                         outer_cfg(CreditMode::per_timestep, kStepMean,
                                                   rl::SurrogateKind::vpg),
                                         /*use_maml=*/false);
    checks.push_back(make_check("clipped-ratio inner step differentiates exactly",
                                ad::max_relative_error(vec_scale(1.0 / kStepMean, e), full_ppo),
                                1e-8));
  }

  // same identity through the production network instead of the table
  const rl::MlpPolicy mlp({.obs_len = EnumMdp::kStates, .n_actions = EnumMdp::kActions,
                           .hidden = 4, .bias_dim = 0});
  ParamVector theta_mlp;
  {
    Rng mlp_rng = Rng::from_key(seed, {2});
    theta_mlp = mlp.init_params(mlp_rng);
  }
  {
    const auto full_mlp = objective_grad(mdp, mlp, theta_mlp, inner_vpg, false, false);
    const auto e = estimator_expectation(mdp, mlp, theta_mlp, inner_vpg,
                                         outer_cfg(CreditMode::per_timestep, kStepMean,
                                                   rl::SurrogateKind::vpg),
                                         /*use_maml=*/false);
    checks.push_back(make_check("mlp policy estimator matches enumeration",
                                ad::max_relative_error(vec_scale(1.0 / kStepMean, e), full_mlp),
                                1e-8));
  }

  // at unit ratio (recomputed log-probs equal sampling-time ones) the clipped
  // outer surrogate must reproduce the score-form gradient
  {
    const auto e_vpg = estimator_expectation(mdp, tab, theta0, inner_vpg,
                                             outer_cfg(CreditMode::per_timestep, kStepMean,
                                                       rl::SurrogateKind::vpg),
                                             false);
    const auto e_ppo = estimator_expectation(mdp, tab, theta0, inner_vpg,
                                             outer_cfg(CreditMode::per_timestep, kStepMean,
                                                       rl::SurrogateKind::ppo_clip),
                                             false);
    checks.push_back(make_check("outer clipped surrogate at unit ratio matches the score form",
                                max_abs_diff(e_vpg, e_ppo), 1e-12));
  }

  // closed forms on the one-state bandit
  const TabularPolicy bandit(1, 2);
  {
    ParamVector tb;
    tb.add("table", Tensor::constant({1, 2}, {0.4, -0.3}));
    Rng unused(0);
    std::vector<rl::Trajectory> eb{bandit_trajectory(0, 1.7, bandit, tb, true)};
    const auto got = meta::inner_update(tb, eb, bandit, inner_vpg, unused).flatten();
    const auto pi = action_probs(bandit, tb, eb[0].observations[0]);
    std::vector<double> want(2);
    for (int k = 0; k < 2; ++k) {
      const double g = -1.7 * ((k == 0 ? 1.0 : 0.0) - pi[static_cast<std::size_t>(k)]);
      want[static_cast<std::size_t>(k)] = tb.flatten()[static_cast<std::size_t>(k)] -
                                          inner_vpg.alpha * g;
    }
    checks.push_back(make_check("inner score step matches the bandit closed form",
                                max_abs_diff(got, want), 1e-12));
  }
  {
    // d/dtheta of -(R * log pi(a)) is -R * (onehot(a) - pi)
    const double kRet = 2.3;
    ParamVector tb;
    tb.add("table", Tensor::constant({1, 2}, {0.4, -0.3}));
    const auto pi = action_probs(bandit, tb, std::vector<double>{1.0});
    double worst = 0.0;
    for (CreditMode mode : {CreditMode::per_timestep, CreditMode::dice_scalar}) {
      ad::Tape tape;
      Tensor leaf = tape.leaf({2}, {0.4, -0.3});
      Tensor lp = ad::reshape(ad::index_select(ad::log_softmax(leaf), {0}), {});
      meta::ExploreTermTask task;
      task.log_probs = {lp};
      task.exploit_return = kRet;
      std::vector<meta::ExploreTermTask> tasks{task};
      Tensor term = meta::exploration_term(tasks, mode, false);
      auto grads = ad::backward(term, std::vector<Tensor>{leaf}, false);
      const auto& g = grads[0].values();
      for (int k = 0; k < 2; ++k) {
        const double want = -kRet * ((k == 0 ? 1.0 : 0.0) - pi[static_cast<std::size_t>(k)]);
        worst = std::max(worst, std::abs(g[static_cast<std::size_t>(k)] - want));
      }
    }
    checks.push_back(
        make_check("exploration term gradient matches the closed form", worst, 1e-12));
  }

  // two-parameter bandit meta-gradient vs central finite differences of the
  // frozen-sampling objective (exploit episodes are one step, so the
  // timestep-mean factor is one here)
  {
    ParamVector tb;
    tb.add("table", Tensor::constant({1, 2}, {0.25, -0.15}));
    const double rew[2] = {1.9, 0.3};
    const auto pbar0 = action_probs(bandit, tb, std::vector<double>{1.0});
    Rng unused(0);
    const MetaConfig mc = outer_cfg(CreditMode::per_timestep, 0.0, rl::SurrogateKind::vpg);

    std::vector<double> expectation(2, 0.0);
    for (int abar = 0; abar < 2; ++abar) {
      std::vector<rl::Trajectory> eb{bandit_trajectory(abar, rew[abar], bandit, tb, true)};
      ParamVector adapted_c = meta::inner_update(tb, eb, bandit, inner_vpg, unused);
      const auto padapt = action_probs(bandit, adapted_c, std::vector<double>{1.0});
      for (int a = 0; a < 2; ++a) {
        const double w = pbar0[static_cast<std::size_t>(abar)] * padapt[static_cast<std::size_t>(a)];
        ad::Tape tape;
        MetaBatch batch;
        batch.theta = tb.as_leaves(tape);
        TaskData td;
        td.inner_kind = InnerKind::sgd_vpg;
        td.explore = eb;
        td.adapted = meta::inner_update(batch.theta, eb, bandit, inner_vpg, unused);
        td.exploit = {bandit_trajectory(a, rew[a], bandit, adapted_c, false)};
        batch.tasks.push_back(std::move(td));
        auto g = flat_grads(meta::maml_surrogate(batch, bandit, mc), batch.theta);
        for (std::size_t i = 0; i < expectation.size(); ++i) expectation[i] -= w * g[i];
      }
    }

    auto value_at = [&](const std::vector<double>& flat) {
      ParamVector th = tb.unflatten(flat);
      double j = 0.0;
      for (int abar = 0; abar < 2; ++abar) {
        std::vector<rl::Trajectory> eb{bandit_trajectory(abar, rew[abar], bandit, tb, true)};
        ParamVector adapted = meta::inner_update(th, eb, bandit, inner_vpg, unused);
        const auto p = action_probs(bandit, adapted, std::vector<double>{1.0});
        j += pbar0[static_cast<std::size_t>(abar)] * (p[0] * rew[0] + p[1] * rew[1]);
      }
      return j;
    };
    const double h = 1e-4;
    std::vector<double> fd(2);
    for (std::size_t i = 0; i < 2; ++i) {
      auto up = tb.flatten(), dn = tb.flatten();
      up[i] += h;
      dn[i] -= h;
      fd[i] = (value_at(up) - value_at(dn)) / (2.0 * h);
    }
    checks.push_back(make_check("bandit meta-gradient matches finite differences",
                                ad::max_relative_error(expectation, fd), 1e-5));
  }

  // geometry of the non-gradient operators, through the production network
  {
    std::vector<rl::Trajectory> batch{
        enum_trajectory(mdp.tasks[0], 0, 1, mlp, theta_mlp, true),
        enum_trajectory(mdp.tasks[0], 1, 0, mlp, theta_mlp, true)};
    const InnerOperatorConfig perp = inner_cfg(InnerKind::perpendicular);
    Rng unused(0);
    const auto flat0 = theta_mlp.flatten();
    const auto flat1 = meta::inner_update(theta_mlp, batch, mlp, perp, unused).flatten();
    std::vector<double> d(flat0.size());
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = (flat1[i] - flat0[i]) / perp.alpha;

    std::vector<double> g;
    {
      ad::Tape tape;
      ParamVector leaves = theta_mlp.as_leaves(tape);
      g = flat_grads(meta::inner_surrogate(leaves, batch, mlp, perp), leaves);
    }
    const double gnorm = std::sqrt(dot(g, g));
    checks.push_back(make_check("perpendicular step is orthogonal to the inner gradient",
                                std::abs(dot(d, g)) / std::max(1.0, gnorm), 1e-10));
    checks.push_back(make_check("perpendicular step direction has unit length",
                                std::abs(std::sqrt(dot(d, d)) - 1.0), 1e-10));

    InnerOperatorConfig eps = inner_cfg(InnerKind::eps_greedy);
    eps.eps_op = 0.0;
    Rng r1 = Rng::from_key(seed, {3});
    Rng r2 = Rng::from_key(seed, {4});
    const auto via_eps = meta::inner_update(theta_mlp, batch, mlp, eps, r1).flatten();
    const auto via_sgd = meta::inner_update(theta_mlp, batch, mlp, inner_vpg, r2).flatten();
    checks.push_back(make_check("eps_greedy at zero eps reproduces the score step bit-exactly",
                                max_abs_diff(via_eps, via_sgd), 0.0));

    const InnerOperatorConfig flip = inner_cfg(InnerKind::sign_flip);
    const auto via_flip = meta::inner_update(theta_mlp, batch, mlp, flip, unused).flatten();
    double worst = 0.0;
    for (std::size_t i = 0; i < flat0.size(); ++i) {
      worst = std::max(worst, std::abs((via_flip[i] - flat0[i]) + (via_sgd[i] - flat0[i])));
    }
    checks.push_back(make_check("sign_flip exactly negates the inner step", worst, 1e-12));
  }

  // variance ordering: normalized per-timestep exploration credit must not be
  // noisier than the raw scalar form; paired sample blocks, one-sided 3 sigma
  {
    constexpr int kBlocks = 20;
    constexpr int kPerBlock = 500;
    constexpr int kTasksPerBatch = 4;
    const std::size_t n_coords = static_cast<std::size_t>(theta0.total_len());
    MetaConfig mc_pt = outer_cfg(CreditMode::per_timestep, 2.0, rl::SurrogateKind::vpg);
    mc_pt.normalize_adv = true;
    MetaConfig mc_dice = outer_cfg(CreditMode::dice_scalar, 2.0, rl::SurrogateKind::vpg);
    mc_dice.normalize_adv = true;

    std::vector<double> block_diff(kBlocks);
    Rng unused(0);
    for (int b = 0; b < kBlocks; ++b) {
      Rng rng = Rng::from_key(seed, {5, static_cast<std::uint64_t>(b)});
      std::vector<double> s1_pt(n_coords, 0.0), s2_pt(n_coords, 0.0);
      std::vector<double> s1_dc(n_coords, 0.0), s2_dc(n_coords, 0.0);
      for (int n = 0; n < kPerBlock; ++n) {
        struct Drawn {
          std::size_t task;
          std::vector<rl::Trajectory> explore;
          ParamVector adapted_c;
          rl::Trajectory exploit;
        };
        std::vector<Drawn> drawn;
        for (int t = 0; t < kTasksPerBatch; ++t) {
          Drawn d;
          d.task = static_cast<std::size_t>(rng.below(mdp.tasks.size()));
          d.explore = {enum_sample_trajectory(mdp.tasks[d.task], tab, theta0, rng, true)};
          d.adapted_c = meta::inner_update(theta0, d.explore, tab, inner_vpg, unused);
          d.exploit = enum_sample_trajectory(mdp.tasks[d.task], tab, d.adapted_c, rng, false);
          drawn.push_back(std::move(d));
        }
        for (int m = 0; m < 2; ++m) {
          ad::Tape tape;
          MetaBatch batch;
          batch.theta = theta0.as_leaves(tape);
          for (const Drawn& d : drawn) {
            TaskData td;
            td.inner_kind = InnerKind::sgd_vpg;
            td.explore = d.explore;
            td.adapted = meta::inner_update(batch.theta, d.explore, tab, inner_vpg, unused);
            td.exploit = {d.exploit};
            batch.tasks.push_back(std::move(td));
          }
          auto g = flat_grads(meta::emaml_surrogate(batch, tab, m == 0 ? mc_pt : mc_dice),
                              batch.theta);
          auto& s1 = m == 0 ? s1_pt : s1_dc;
          auto& s2 = m == 0 ? s2_pt : s2_dc;
          for (std::size_t i = 0; i < n_coords; ++i) {
            s1[i] += g[i];
            s2[i] += g[i] * g[i];
          }
        }
      }
      auto var_sum = [&](const std::vector<double>& s1, const std::vector<double>& s2) {
        double v = 0.0;
        for (std::size_t i = 0; i < n_coords; ++i) {
          const double mean = s1[i] / kPerBlock;
          v += s2[i] / kPerBlock - mean * mean;
        }
        return v;
      };
      block_diff[static_cast<std::size_t>(b)] =
          var_sum(s1_dc, s2_dc) - var_sum(s1_pt, s2_pt);
    }
    double mean_d = 0.0;
    for (double v : block_diff) mean_d += v;
    mean_d /= kBlocks;
    double var_d = 0.0;
    for (double v : block_diff) var_d += (v - mean_d) * (v - mean_d);
    const double se = std::sqrt(var_d / (kBlocks - 1)) / std::sqrt(static_cast<double>(kBlocks));
    checks.push_back(make_check("per_timestep credit variance three sigma below dice_scalar",
                                3.0 * se - mean_d, 0.0));
  }

  return checks;
}

}  // namespace metaexp::oracle
