#include <cmath>
#include <sstream>

#include "doctest.h"
#include "metaexp/ad.hpp"
#include "metaexp/env.hpp"
#include "metaexp/errors.hpp"
#include "metaexp/optimizer.hpp"
#include "metaexp/rollout.hpp"
#include "metaexp/rng.hpp"
#include "metaexp/surrogate.hpp"

using namespace metaexp;
using ad::Tensor;
using rl::StepTerm;
using rl::SurrogateKind;
using rl::SurrogateOptions;
using rl::Trajectory;

namespace {

Trajectory make_traj(std::vector<double> rewards, bool explore) {
  Trajectory t;
  const std::size_t n = rewards.size();
  t.rewards = std::move(rewards);
  t.observations.assign(n, {0.0});
  t.actions.assign(n, 0);
  t.dones.assign(n, 0);
  t.log_probs.assign(n, std::log(0.25));
  t.explore_flag = explore;
  return t;
}

}  // namespace

TEST_CASE("discounted reward-to-go") {
  SUBCASE("geometric worked example") {
    auto r = rl::discounted_returns(std::vector<double>{1.0, 1.0, 1.0}, 0.5);
    REQUIRE(r.size() == 3);
    CHECK(r[0] == doctest::Approx(1.75).epsilon(1e-15));
    CHECK(r[1] == doctest::Approx(1.5).epsilon(1e-15));
    CHECK(r[2] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("gamma zero returns the rewards") {
    const std::vector<double> rew = {0.3, -0.1, 0.7};
    auto r = rl::discounted_returns(rew, 0.0);
    for (std::size_t i = 0; i < rew.size(); ++i) CHECK(r[i] == rew[i]);
  }
  SUBCASE("gamma one with only a terminal reward") {
    auto r = rl::discounted_returns(std::vector<double>{0.0, 0.0, 0.0, 1.0}, 1.0);
    for (double v : r) CHECK(v == 1.0);
  }
  SUBCASE("gamma outside [0,1] is rejected") {
    CHECK_THROWS_AS(rl::discounted_returns(std::vector<double>{1.0}, -0.1), ContractViolation);
    CHECK_THROWS_AS(rl::discounted_returns(std::vector<double>{1.0}, 1.1), ContractViolation);
  }
}

TEST_CASE("masked trial returns") {
  SUBCASE("exploration rewards are zeroed in the sum but credit flows back") {
    std::vector<Trajectory> trial;
    trial.push_back(make_traj({1.0, 1.0}, true));
    trial.push_back(make_traj({0.0, 1.0}, false));
    auto r = rl::masked_returns(trial, 1.0);
    REQUIRE(r.size() == 4);
    for (double v : r) CHECK(v == 1.0);  // only the final exploitation reward survives
  }
  SUBCASE("zero exploitation rewards give zero returns everywhere") {
    Rng rng(101);
    for (int it = 0; it < 20; ++it) {
      std::vector<Trajectory> trial;
      std::vector<double> er(4);
      for (double& v : er) v = rng.uniform(-2.0, 2.0);
      trial.push_back(make_traj(er, true));
      trial.push_back(make_traj({0.0, 0.0, 0.0}, false));
      for (double v : rl::masked_returns(trial, 0.99)) CHECK(v == 0.0);
    }
  }
  SUBCASE("no exploration episodes reduces to plain reward-to-go") {
    std::vector<Trajectory> trial;
    trial.push_back(make_traj({0.5, -0.2}, false));
    trial.push_back(make_traj({1.0, 0.0, 0.3}, false));
    auto r = rl::masked_returns(trial, 0.9);
    auto plain = rl::discounted_returns(std::vector<double>{0.5, -0.2, 1.0, 0.0, 0.3}, 0.9);
    REQUIRE(r.size() == plain.size());
    for (std::size_t i = 0; i < r.size(); ++i) CHECK(r[i] == plain[i]);
  }
  SUBCASE("exploration rewards never influence any return value") {
    Rng rng(103);
    for (int it = 0; it < 30; ++it) {
      std::vector<double> xr(5), er1(3), er2(3);
      for (double& v : xr) v = rng.uniform(-1.0, 1.0);
      for (double& v : er1) v = rng.uniform(-1.0, 1.0);
      for (double& v : er2) v = rng.uniform(-1.0, 1.0);
      std::vector<Trajectory> a, b;
      a.push_back(make_traj(er1, true));
      a.push_back(make_traj(xr, false));
      b.push_back(make_traj(er2, true));
      b.push_back(make_traj(xr, false));
      auto ra = rl::masked_returns(a, 0.97);
      auto rb = rl::masked_returns(b, 0.97);
      REQUIRE(ra.size() == rb.size());
      for (std::size_t i = 0; i < ra.size(); ++i) CHECK(ra[i] == rb[i]);
    }
  }
  SUBCASE("a trial with no exploitation episode is rejected") {
    std::vector<Trajectory> trial;
    trial.push_back(make_traj({1.0}, true));
    CHECK_THROWS_AS(rl::masked_returns(trial, 1.0), ContractViolation);
  }
}

TEST_CASE("generalized advantage estimation") {
  SUBCASE("lambda one with zero values telescopes to reward-to-go") {
    Trajectory t = make_traj({0.2, -0.4, 1.0, 0.1}, false);
    t.dones.back() = 1;
    std::vector<double> values(5, 0.0);
    auto adv = rl::gae_advantages(t, values, 0.9, 1.0);
    auto ret = rl::discounted_returns(t.rewards, 0.9);
    REQUIRE(adv.size() == ret.size());
    for (std::size_t i = 0; i < adv.size(); ++i) {
      CHECK(adv[i] == doctest::Approx(ret[i]).epsilon(1e-14));
    }
  }
  SUBCASE("lambda zero gives the one-step temporal difference") {
    Trajectory t = make_traj({0.5, 0.3, -0.1}, false);
    const std::vector<double> values = {0.2, -0.3, 0.1, 0.4};
    const double gamma = 0.95;
    auto adv = rl::gae_advantages(t, values, gamma, 0.0);
    for (std::size_t i = 0; i < 3; ++i) {
      const double expect = t.rewards[i] + gamma * values[i + 1] - values[i];
      CHECK(adv[i] == doctest::Approx(expect).epsilon(1e-15));
    }
  }
  SUBCASE("matches a brute-force double-loop evaluation") {
    Rng rng(107);
    for (int done_last : {0, 1}) {
      const std::size_t n = 10;
      Trajectory t;
      t.rewards.resize(n);
      t.dones.assign(n, 0);
      t.dones.back() = static_cast<std::uint8_t>(done_last);
      std::vector<double> values(n + 1);
      for (double& v : t.rewards) v = rng.uniform(-1.0, 1.0);
      for (double& v : values) v = rng.uniform(-1.0, 1.0);
      t.observations.assign(n, {0.0});
      t.actions.assign(n, 0);
      t.log_probs.assign(n, 0.0);
      const double gamma = 0.9, lambda = 0.7;
      auto adv = rl::gae_advantages(t, values, gamma, lambda);
      for (std::size_t i = 0; i < n; ++i) {
        double expect = 0.0, w = 1.0;
        for (std::size_t j = i; j < n; ++j) {
          const double nd = t.dones[j] ? 0.0 : 1.0;
          expect += w * (t.rewards[j] + gamma * values[j + 1] * nd - values[j]);
          w *= gamma * lambda * nd;
        }
        CHECK(std::abs(adv[i] - expect) < 1e-12);
      }
    }
  }
  SUBCASE("bad inputs are rejected") {
    Trajectory t = make_traj({1.0, 2.0}, false);
    std::vector<double> values(3, 0.0);
    CHECK_THROWS_AS(rl::gae_advantages(t, values, 0.9, 1.5), ContractViolation);
    CHECK_THROWS_AS(rl::gae_advantages(t, values, -0.1, 0.5), ContractViolation);
    CHECK_THROWS_AS(rl::gae_advantages(t, std::vector<double>(2, 0.0), 0.9, 0.5),
                    ContractViolation);
  }
}

TEST_CASE("advantage normalization") {
  SUBCASE("zero mean, unit deviation afterwards") {
    Rng rng(109);
    std::vector<double> adv(64);
    for (double& v : adv) v = rng.uniform(-3.0, 5.0);
    auto st = rl::normalize_advantages(adv);
    CHECK(st.applied);
    double mean = 0.0;
    for (double v : adv) mean += v;
    mean /= static_cast<double>(adv.size());
    double var = 0.0;
    for (double v : adv) var += (v - mean) * (v - mean);
    var /= static_cast<double>(adv.size());
    CHECK(std::abs(mean) < 1e-9);
    CHECK(std::abs(std::sqrt(var) - 1.0) < 1e-6);
  }
  SUBCASE("a single-element batch is left alone") {
    std::vector<double> adv = {3.0};
    auto st = rl::normalize_advantages(adv);
    CHECK(!st.applied);
    CHECK(adv[0] == 3.0);
  }
  SUBCASE("a flat batch is left alone") {
    std::vector<double> adv = {2.0, 2.0, 2.0};
    auto st = rl::normalize_advantages(adv);
    CHECK(!st.applied);
    CHECK(st.stddev == 0.0);
    for (double v : adv) CHECK(v == 2.0);
  }
}

TEST_CASE("surrogate losses") {
  const Tensor logits = Tensor::constant({2}, {0.4, -0.6});
  const Tensor lp = ad::log_softmax(logits);

  SUBCASE("equal new and old log-probs make all ratio forms agree") {
    std::vector<StepTerm> terms;
    const std::vector<double> advs = {0.8, -1.2, 0.3};
    for (double a : advs) terms.push_back({lp, 0, lp.values()[0], a});
    SurrogateOptions cpi{.kind = SurrogateKind::cpi};
    SurrogateOptions ppo{.kind = SurrogateKind::ppo_clip};
    const double lc = rl::surrogate_loss(terms, cpi).item();
    const double lo = rl::surrogate_loss(terms, ppo).item();
    double mean_adv = 0.0;
    for (double a : advs) mean_adv += a / 3.0;
    CHECK(std::abs(lc - lo) < 1e-15);
    CHECK(std::abs(lc - (-mean_adv)) < 1e-14);
  }
  SUBCASE("ratio 1.5 with positive advantage clips at 1.2") {
    StepTerm t{lp, 0, lp.values()[0] - std::log(1.5), 1.0};
    SurrogateOptions ppo{.kind = SurrogateKind::ppo_clip, .clip_eps = 0.2};
    CHECK(std::abs(rl::surrogate_loss({&t, 1}, ppo).item() - (-1.2)) < 1e-12);
  }
  SUBCASE("a clipped sample contributes exactly zero gradient") {
    ad::Tape tape;
    Tensor th = tape.leaf({2}, {0.4, -0.6});
    Tensor tlp = ad::log_softmax(th);
    StepTerm t{tlp, 0, tlp.values()[0] - std::log(1.5), 1.0};
    SurrogateOptions ppo{.kind = SurrogateKind::ppo_clip, .clip_eps = 0.2};
    Tensor loss = rl::surrogate_loss({&t, 1}, ppo);
    auto g = ad::backward(loss, {&th, 1}, false);
    for (double v : g[0].values()) CHECK(v == 0.0);
  }
  SUBCASE("clipped objective never beats the unclipped one") {
    Rng rng(113);
    for (int it = 0; it < 50; ++it) {
      Tensor l2 = Tensor::constant({3}, {rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0),
                                         rng.uniform(-1.0, 1.0)});
      Tensor lp2 = ad::log_softmax(l2);
      std::vector<StepTerm> terms;
      for (int k = 0; k < 4; ++k) {
        const int a = static_cast<int>(rng.below(3));
        terms.push_back({lp2, a, lp2.values()[static_cast<std::size_t>(a)] + rng.uniform(-0.6, 0.6),
                         rng.uniform(-2.0, 2.0)});
      }
      SurrogateOptions cpi{.kind = SurrogateKind::cpi};
      SurrogateOptions ppo{.kind = SurrogateKind::ppo_clip};
      CHECK(rl::surrogate_loss(terms, ppo).item() >=
            rl::surrogate_loss(terms, cpi).item() - 1e-12);
    }
  }
  SUBCASE("likelihood-sign flip negates the score objective") {
    std::vector<StepTerm> terms = {{lp, 1, lp.values()[1], 0.7}, {lp, 0, lp.values()[0], -0.4}};
    SurrogateOptions plain{.kind = SurrogateKind::vpg};
    SurrogateOptions flipped{.kind = SurrogateKind::vpg, .flip_log_prob_sign = true};
    CHECK(std::abs(rl::surrogate_loss(terms, plain).item() +
                   rl::surrogate_loss(terms, flipped).item()) < 1e-15);
  }
  SUBCASE("entropy bonus shifts the loss by coeff times entropy") {
    Tensor ulp = ad::log_softmax(Tensor::constant({4}, {0.0, 0.0, 0.0, 0.0}));
    StepTerm t{ulp, 2, ulp.values()[2], 1.0};
    SurrogateOptions base{.kind = SurrogateKind::vpg};
    SurrogateOptions bonus{.kind = SurrogateKind::vpg, .ent_coeff = 1e-3};
    const double l0 = rl::surrogate_loss({&t, 1}, base).item();
    const double l1 = rl::surrogate_loss({&t, 1}, bonus).item();
    CHECK(std::abs(l1 - (l0 - 1e-3 * std::log(4.0))) < 1e-15);
  }
  SUBCASE("bad configurations are rejected") {
    StepTerm t{lp, 0, lp.values()[0], 1.0};
    CHECK_THROWS_AS(rl::surrogate_loss({}, SurrogateOptions{}), ContractViolation);
    CHECK_THROWS_AS(rl::surrogate_loss({&t, 1},
                                       SurrogateOptions{.kind = SurrogateKind::ppo_clip,
                                                        .clip_eps = 0.0}),
                    ContractViolation);
    CHECK_THROWS_AS(rl::surrogate_loss({&t, 1},
                                       SurrogateOptions{.kind = SurrogateKind::ppo_clip,
                                                        .flip_log_prob_sign = true}),
                    ContractViolation);
    StepTerm bad{lp, 5, 0.0, 1.0};
    CHECK_THROWS_AS(rl::surrogate_loss({&bad, 1}, SurrogateOptions{.kind = SurrogateKind::vpg}),
                    ContractViolation);
  }
}

TEST_CASE("score-gradient estimator is unbiased on an enumerable bandit") {
  // two-arm bandit, known arm rewards; exact expectation over both outcomes
  // must equal the analytic gradient of eta(theta) = sum_a pi_a r_a
  const std::vector<double> theta = {0.3, -0.5};
  const std::vector<double> arm_reward = {1.0, -0.25};
  const auto pi = [&] {
    Tensor p = ad::log_softmax(Tensor::constant({2}, theta));
    return std::vector<double>{std::exp(p.values()[0]), std::exp(p.values()[1])};
  }();
  double est[2] = {0.0, 0.0};
  for (int a = 0; a < 2; ++a) {
    ad::Tape tape;
    Tensor th = tape.leaf({2}, theta);
    Tensor lp = ad::log_softmax(th);
    StepTerm t{lp, a, lp.values()[static_cast<std::size_t>(a)], arm_reward[static_cast<std::size_t>(a)]};
    Tensor loss = rl::surrogate_loss({&t, 1}, SurrogateOptions{.kind = SurrogateKind::vpg});
    auto g = ad::backward(loss, {&th, 1}, false);
    for (int k = 0; k < 2; ++k) {
      est[k] += pi[static_cast<std::size_t>(a)] * -g[0].values()[static_cast<std::size_t>(k)];
    }
  }
  const double eta = pi[0] * arm_reward[0] + pi[1] * arm_reward[1];
  for (int k = 0; k < 2; ++k) {
    const double analytic = pi[static_cast<std::size_t>(k)] * (arm_reward[static_cast<std::size_t>(k)] - eta);
    CHECK(std::abs(est[k] - analytic) < 1e-10);
  }
}

TEST_CASE("optimizer steps") {
  ParamVector p;
  p.add("w", Tensor::constant({2}, {1.0, -2.0}));
  p.add("b", Tensor::constant({1}, {0.5}));

  SUBCASE("global norm and clipping") {
    ParamVector g;
    g.add("w", Tensor::constant({2}, {1.2, -1.6}));
    g.add("b", Tensor::constant({1}, {0.0}));
    CHECK(opt::global_grad_norm(g) == doctest::Approx(2.0).epsilon(1e-15));
    auto r = opt::clip_global_norm(g, 1.0);
    CHECK(r.clipped);
    CHECK(r.pre_norm == doctest::Approx(2.0).epsilon(1e-15));
    CHECK(opt::global_grad_norm(r.grads) <= 1.0 + 1e-12);
    auto loose = opt::clip_global_norm(g, 5.0);
    CHECK(!loose.clipped);
    CHECK(pv_bit_equal(loose.grads, g));
    auto off = opt::clip_global_norm(g, 0.0);  // non-positive bound disables clipping
    CHECK(!off.clipped);
    CHECK(pv_bit_equal(off.grads, g));
  }
  SUBCASE("plain gradient step") {
    ParamVector th;
    th.add("x", Tensor::scalar(1.0));
    ParamVector g;
    g.add("x", Tensor::scalar(1.0));  // gradient of x^2/2 at x=1
    auto out = opt::sgd_step(th, g, 0.01);
    CHECK(out.at("x").item() == doctest::Approx(0.99).epsilon(1e-15));
  }
  SUBCASE("adaptive first step has magnitude close to the learning rate") {
    opt::Adam adam({.lr = 1e-3}, p);
    ParamVector g;
    g.add("w", Tensor::constant({2}, {0.7, -0.01}));
    g.add("b", Tensor::constant({1}, {2.5}));
    auto out = adam.step(p, g);
    const auto before = p.flatten();
    const auto after = out.flatten();
    const auto gf = g.flatten();
    for (std::size_t i = 0; i < before.size(); ++i) {
      const double delta = after[i] - before[i];
      CHECK(std::abs(delta) <= 1e-3);
      CHECK(std::abs(delta) >= 0.99e-3);
      CHECK(delta * gf[i] < 0.0);  // moves against the gradient
    }
  }
  SUBCASE("adaptive steps match the hand-evaluated recurrence") {
    const double lr = 1e-3, b1 = 0.9, b2 = 0.999, eps = 1e-8;
    opt::Adam adam({.lr = lr, .beta1 = b1, .beta2 = b2, .eps = eps}, p);
    Rng rng(127);
    ParamVector cur = p;
    std::vector<double> m(3, 0.0), v(3, 0.0), hand = p.flatten();
    for (int t = 1; t <= 5; ++t) {
      ParamVector g;
      g.add("w", Tensor::constant({2}, {rng.normal(), rng.normal()}));
      g.add("b", Tensor::constant({1}, {rng.normal()}));
      cur = adam.step(cur, g);
      const auto gf = g.flatten();
      const double bc1 = 1.0 - std::pow(b1, t);
      const double bc2 = 1.0 - std::pow(b2, t);
      for (std::size_t i = 0; i < 3; ++i) {
        m[i] = b1 * m[i] + (1.0 - b1) * gf[i];
        v[i] = b2 * v[i] + (1.0 - b2) * gf[i] * gf[i];
        hand[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
      }
      const auto got = cur.flatten();
      for (std::size_t i = 0; i < 3; ++i) CHECK(got[i] == hand[i]);
    }
    CHECK(adam.steps_taken() == 5);
  }
  SUBCASE("non-finite gradients name the offending segment") {
    ParamVector g;
    g.add("w", Tensor::constant({2}, {0.0, 0.0}));
    g.add("b", Tensor::constant({1}, {std::nan("")}));
    try {
      opt::global_grad_norm(g);
      FAIL("expected NumericFault");
    } catch (const NumericFault& e) {
      CHECK(e.where().find("b") != std::string::npos);
    }
  }
  SUBCASE("schema mismatches are rejected") {
    ParamVector g;
    g.add("w", Tensor::constant({2}, {0.1, 0.1}));
    CHECK_THROWS_AS(opt::sgd_step(p, g, 0.1), ContractViolation);
    opt::Adam adam({.lr = 1e-3}, p);
    CHECK_THROWS_AS(adam.step(p, g), ContractViolation);
  }
}

namespace {

// minimal env that faults mid-episode, for the error-context contract
struct FaultingEnv final : env::Env {
  int countdown = 3;
  env::EpisodeInfo info_;
  env::TaskSpec spec_;
  std::vector<double> reset(Rng&) override { return {0.0}; }
  env::StepResult step(int) override {
    if (--countdown <= 0) throw NumericFault("reward overflow", "faulting env");
    return {{0.0}, 0.0, false};
  }
  int obs_len() const override { return 1; }
  const env::EpisodeInfo& info() const override { return info_; }
  const env::TaskSpec& task() const override { return spec_; }
};

}  // namespace

TEST_CASE("rollout collection") {
  env::EnvConfig cfg;
  const auto uniform_policy = [](std::span<const double>) { return Tensor::zeros({4}); };

  SUBCASE("same task and seed replay to an identical trajectory") {
    Rng trng(131);
    auto spec = env::sample_task(env::Family::krazy, trng, cfg);
    auto run = [&](std::uint64_t seed) {
      auto e = env::make_env(spec, cfg);
      Rng rng(seed);
      return rl::collect_rollout(*e, uniform_policy, spec.horizon, rng);
    };
    Trajectory a = run(777), b = run(777), c = run(778);
    REQUIRE(a.length() == b.length());
    CHECK(a.actions == b.actions);
    CHECK(a.rewards == b.rewards);
    CHECK(a.observations == b.observations);
    CHECK(a.log_probs == b.log_probs);
    CHECK(a.dones == b.dones);
    // a different seed must not silently replay the same episode
    CHECK((a.actions != c.actions || a.rewards != c.rewards || a.length() != c.length()));
  }
  SUBCASE("horizon caps the episode length") {
    Rng trng(137);
    auto spec = env::sample_task(env::Family::pointmass, trng, cfg);
    auto e = env::make_env(spec, cfg);
    Rng rng(7);
    Trajectory t = rl::collect_rollout(*e, uniform_policy, 7, rng);
    CHECK(t.length() == 7);  // random walk cannot cover the 1.4 unit distance in 7 steps
    CHECK(t.dones.back() == 0);
  }
  SUBCASE("faults carry the task index") {
    FaultingEnv e;
    Rng rng(1);
    try {
      rl::collect_rollout(e, uniform_policy, 10, rng, false, 42);
      FAIL("expected NumericFault");
    } catch (const NumericFault& f) {
      CHECK(f.where() == "task 42");
    }
  }
  SUBCASE("mid-episode done flags are rejected") {
    Trajectory t = make_traj({1.0, 1.0}, false);
    t.dones[0] = 1;
    CHECK_THROWS_AS(t.validate(), ContractViolation);
  }
  SUBCASE("debug dump emits one tab-separated line per step") {
    Trajectory t = make_traj({0.5, -0.25}, true);
    std::ostringstream os;
    rl::dump_trajectory(os, t);
    const std::string text = os.str();
    int lines = 0, tabs = 0;
    for (char ch : text) {
      lines += ch == '\n';
      tabs += ch == '\t';
    }
    CHECK(lines == 2);
    CHECK(tabs == 10);  // 6 fields per line
    CHECK(text.substr(0, 2) == "0\t");
  }
}

TEST_CASE("random play on the hardest family scores near the known baseline") {
  env::EnvConfig cfg;
  const auto uniform_policy = [](std::span<const double>) { return Tensor::zeros({4}); };
  Rng task_rng(20260816);
  double total = 0.0;
  int episodes = 0;
  for (int i = 0; i < 250; ++i) {
    auto spec = env::sample_task(env::Family::krazy, task_rng, cfg);
    auto e = env::make_env(spec, cfg);
    for (int ep = 0; ep < 4; ++ep) {
      Rng rng = Rng::from_key(555, {static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(ep)});
      total += rl::collect_rollout(*e, uniform_policy, spec.horizon, rng).total_reward();
      ++episodes;
    }
  }
  const double mean_return = total / episodes;
  INFO("mean return ", mean_return);
  CHECK(mean_return >= 0.02);
  CHECK(mean_return <= 0.10);
}
