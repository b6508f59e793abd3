#include <cmath>
#include <cstdio>
#include <filesystem>

#include "doctest.h"
#include "metaexp/ad.hpp"
#include "metaexp/errors.hpp"
#include "metaexp/params.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rng.hpp"

using namespace metaexp;
using ad::Tensor;
using rl::GruPolicy;
using rl::MlpPolicy;

namespace {

ParamVector rebuild(const std::vector<std::string>& names, const std::vector<Tensor>& tensors) {
  ParamVector pv;
  for (std::size_t i = 0; i < names.size(); ++i) pv.add(names[i], tensors[i]);
  return pv;
}

}  // namespace

TEST_CASE("zero parameters give a uniform policy") {
  MlpPolicy policy({.obs_len = 6, .n_actions = 4, .hidden = 8});
  Rng rng(1);
  ParamVector params = pv_zeros_like(policy.init_params(rng));
  const std::vector<double> obs = {0.1, -0.3, 0.7, 0.0, 0.2, -0.9};
  Tensor logits = policy.logits(params, obs);
  REQUIRE(logits.size() == 4);
  for (double v : logits.values()) CHECK(v == logits.values()[0]);
  Tensor lp = ad::log_softmax(logits);
  for (double v : lp.values()) CHECK(v == doctest::Approx(std::log(0.25)).epsilon(1e-12));
}

TEST_CASE("same parameters and observation give bit-identical logits") {
  MlpPolicy policy({.obs_len = 5, .n_actions = 4, .hidden = 8});
  Rng rng(7);
  ParamVector params = policy.init_params(rng);
  const std::vector<double> obs = {0.3, -0.2, 0.8, -0.5, 0.1};
  const auto a = policy.logits(params, obs).values();
  const auto b = policy.logits(params, obs).values();
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("feedforward logits pass the finite-difference gradient check") {
  MlpPolicy policy({.obs_len = 4, .n_actions = 3, .hidden = 6});
  Rng rng(11);
  ParamVector params = policy.init_params(rng);
  std::vector<std::string> names;
  std::vector<Tensor> theta;
  for (const auto& seg : params.segments()) {
    names.push_back(seg.name);
    theta.push_back(seg.value);
  }
  const std::vector<double> obs = {0.4, -0.6, 0.2, 0.9};
  auto f = [&policy, names, obs](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(policy.logits(rebuild(names, th), obs));
  };
  CHECK(ad::finite_difference_check(f, theta, 1e-5) < 1e-6);
}

TEST_CASE("observation length is enforced") {
  MlpPolicy policy({.obs_len = 4, .n_actions = 4, .hidden = 8});
  Rng rng(3);
  ParamVector params = policy.init_params(rng);
  CHECK_THROWS_AS(policy.logits(params, std::vector<double>{1.0, 2.0}), ContractViolation);
}

TEST_CASE("observation-appended free parameters") {
  SUBCASE("disabled by default: no extra segment, input length unchanged") {
    MlpPolicy policy({.obs_len = 4, .n_actions = 4, .hidden = 8});
    Rng rng(5);
    CHECK(policy.input_len() == 4);
    CHECK(!policy.init_params(rng).has("bias.v"));
  }
  SUBCASE("enabled: widens the first layer and takes gradient") {
    MlpPolicy policy({.obs_len = 4, .n_actions = 4, .hidden = 8, .bias_dim = 4});
    Rng rng(5);
    ParamVector params = policy.init_params(rng);
    CHECK(policy.input_len() == 8);
    REQUIRE(params.has("bias.v"));
    std::vector<std::string> names;
    std::vector<Tensor> theta;
    for (const auto& seg : params.segments()) {
      names.push_back(seg.name);
      theta.push_back(seg.value);
    }
    const std::vector<double> obs = {0.4, -0.6, 0.2, 0.9};
    ad::Tape tape;
    std::vector<Tensor> leaves;
    for (const auto& t : theta) leaves.push_back(tape.leaf(t));
    Tensor root = ad::sum(policy.logits(rebuild(names, leaves), obs));
    auto grads = ad::backward(root, leaves, false);
    double bias_norm = 0.0;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (names[i] == "bias.v") {
        for (double g : grads[i].values()) bias_norm += std::abs(g);
      }
    }
    CHECK(bias_norm > 1e-6);
  }
}

TEST_CASE("recurrent cell") {
  SUBCASE("zero parameters: next hidden state is zero and logits are uniform") {
    GruPolicy policy({.input_len = 5, .n_actions = 4, .hidden = 6});
    Rng rng(1);
    ParamVector params = pv_zeros_like(policy.init_params(rng));
    Tensor x = Tensor::constant({5}, {0.2, -0.1, 0.5, 0.0, 1.0});
    auto [logits, h1] = policy.step(params, policy.initial_state(), x);
    for (double v : h1.values()) CHECK(v == 0.0);
    for (double v : logits.values()) CHECK(v == logits.values()[0]);
  }
  SUBCASE("reward input changes the hidden state, all else equal") {
    // same observation and action history, different previous reward: the
    // recurrent state must be able to tell the two histories apart
    GruPolicy policy({.input_len = rl::rl2_input_len(3, 4), .n_actions = 4, .hidden = 6});
    Rng rng(9);
    ParamVector params = policy.init_params(rng);
    const std::vector<double> obs = {0.5, -0.5, 0.25};
    auto xa = rl::rl2_input(obs, 2, /*prev_reward=*/1.0, 0.0, 3, 4);
    auto xb = rl::rl2_input(obs, 2, /*prev_reward=*/0.0, 0.0, 3, 4);
    auto [la, ha] = policy.step(params, policy.initial_state(),
                                Tensor::constant({static_cast<int>(xa.size())}, xa));
    auto [lb, hb] = policy.step(params, policy.initial_state(),
                                Tensor::constant({static_cast<int>(xb.size())}, xb));
    double diff = 0.0;
    for (std::size_t i = 0; i < ha.values().size(); ++i) {
      diff = std::max(diff, std::abs(ha.values()[i] - hb.values()[i]));
    }
    CHECK(diff > 1e-9);
  }
  SUBCASE("single step passes the finite-difference gradient check") {
    GruPolicy policy({.input_len = 4, .n_actions = 3, .hidden = 5});
    Rng rng(13);
    ParamVector params = policy.init_params(rng);
    std::vector<std::string> names;
    std::vector<Tensor> theta;
    for (const auto& seg : params.segments()) {
      names.push_back(seg.name);
      theta.push_back(seg.value);
    }
    const std::vector<double> xv = {0.3, -0.8, 0.1, 0.6};
    auto f = [&policy, names, xv](ad::Tape&, const std::vector<Tensor>& th) {
      auto [logits, h1] =
          policy.step(rebuild(names, th), policy.initial_state(), Tensor::constant({4}, xv));
      return ad::add(ad::sum(logits), ad::sum(ad::mul(h1, h1)));
    };
    CHECK(ad::finite_difference_check(f, theta, 1e-5) < 1e-5);
  }
}

TEST_CASE("action sampling") {
  SUBCASE("an overwhelming logit always wins") {
    Rng rng(17);
    Tensor logits = Tensor::constant({4}, {1000.0, 0.0, 0.0, 0.0});
    for (int i = 0; i < 100; ++i) CHECK(rl::sample_action(logits, rng).action == 0);
  }
  SUBCASE("uniform logits sample uniformly") {
    Rng rng(19);
    Tensor logits = Tensor::constant({4}, {0.0, 0.0, 0.0, 0.0});
    std::vector<int> counts(4, 0);
    const int draws = 100000;
    for (int i = 0; i < draws; ++i) ++counts[static_cast<std::size_t>(rl::sample_action(logits, rng).action)];
    const double sigma = std::sqrt(draws * 0.25 * 0.75);
    for (int c : counts) CHECK(std::abs(c - draws * 0.25) <= 3 * sigma);
  }
  SUBCASE("log_prob matches the softmax entry exactly") {
    Rng rng(23);
    Tensor logits = Tensor::constant({4}, {0.7, -0.2, 1.1, 0.05});
    const auto lp_all = ad::log_softmax(logits).values();
    for (int i = 0; i < 200; ++i) {
      auto s = rl::sample_action(logits, rng);
      CHECK(std::abs(std::exp(s.log_prob.item()) -
                     std::exp(lp_all[static_cast<std::size_t>(s.action)])) < 1e-12);
    }
  }
  SUBCASE("log_prob stays differentiable back to taped logits") {
    Rng rng(29);
    ad::Tape tape;
    Tensor th = tape.leaf({4}, {0.3, 0.1, -0.4, 0.9});
    auto s = rl::sample_action(th, rng);
    REQUIRE(s.log_prob.on_tape());
    auto g = ad::backward(s.log_prob, {&th, 1}, false);
    double norm = 0.0;
    for (double v : g[0].values()) norm += std::abs(v);
    CHECK(norm > 1e-9);
  }
}

TEST_CASE("policy probabilities are consistent") {
  MlpPolicy policy({.obs_len = 3, .n_actions = 4, .hidden = 6});
  Rng rng(31);
  ParamVector params = policy.init_params(rng);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> obs(3);
    for (double& v : obs) v = rng.uniform(-1.0, 1.0);
    const auto lp = ad::log_softmax(policy.logits(params, obs)).values();
    double total = 0.0;
    for (double v : lp) total += std::exp(v);
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("score-function identity through the network") {
  // sum_a pi(a|s) grad log pi(a|s) = 0, enumerated exactly over actions
  MlpPolicy policy({.obs_len = 3, .n_actions = 4, .hidden = 5});
  Rng rng(37);
  ParamVector params = policy.init_params(rng);
  const std::vector<double> obs = {0.2, -0.7, 0.4};
  std::vector<double> acc;
  for (int a = 0; a < 4; ++a) {
    ad::Tape tape;
    ParamVector taped = params.as_leaves(tape);
    std::vector<Tensor> leaves;
    for (const auto& seg : taped.segments()) leaves.push_back(seg.value);
    Tensor lp = ad::index_select(ad::log_softmax(policy.logits(taped, obs)), {a});
    const double pa = std::exp(lp.item());
    auto grads = ad::backward(ad::reshape(lp, {}), leaves, false);
    std::size_t k = 0;
    for (const auto& g : grads) {
      for (double v : g.values()) {
        if (acc.size() <= k) acc.push_back(0.0);
        acc[k++] += pa * v;
      }
    }
  }
  for (double v : acc) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("parameter vector arithmetic") {
  MlpPolicy policy({.obs_len = 3, .n_actions = 4, .hidden = 4});
  Rng rng(41);
  ParamVector p = policy.init_params(rng);
  SUBCASE("adding zeros changes nothing, bitwise") {
    CHECK(pv_bit_equal(pv_add(p, pv_zeros_like(p)), p));
  }
  SUBCASE("flatten then unflatten is the bitwise identity") {
    CHECK(pv_bit_equal(p.unflatten(p.flatten()), p));
  }
  SUBCASE("axpy matches scale plus add") {
    ParamVector q = policy.init_params(rng);
    CHECK(pv_bit_equal(pv_axpy(p, -0.25, q), pv_add(p, pv_scale(q, -0.25))));
  }
  SUBCASE("duplicate segment names are rejected") {
    ParamVector pv;
    pv.add("w", Tensor::scalar(1.0));
    CHECK_THROWS_AS(pv.add("w", Tensor::scalar(2.0)), ContractViolation);
  }
  SUBCASE("unflatten length must match exactly") {
    std::vector<double> flat = p.flatten();
    flat.push_back(0.0);
    CHECK_THROWS_AS(p.unflatten(flat), ContractViolation);
  }
}

TEST_CASE("checkpoint files") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "metaexp_ckpt_test";
  fs::create_directories(dir);
  MlpPolicy policy({.obs_len = 4, .n_actions = 4, .hidden = 6});
  Rng rng(43);
  ParamVector p = policy.init_params(rng);

  SUBCASE("round-trip is bit-identical") {
    const std::string path = (dir / "a.bin").string();
    save_checkpoint(path, p);
    CHECK(pv_bit_equal(load_checkpoint(path), p));
    CHECK(pv_bit_equal(load_checkpoint(path, p), p));
  }
  SUBCASE("schema mismatch is rejected with both schemas named") {
    const std::string path = (dir / "b.bin").string();
    save_checkpoint(path, p);
    MlpPolicy other({.obs_len = 4, .n_actions = 4, .hidden = 8});
    ParamVector q = other.init_params(rng);
    try {
      load_checkpoint(path, q);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find("schema") != std::string::npos);
    }
  }
  SUBCASE("truncated payload is rejected") {
    const std::string path = (dir / "c.bin").string();
    save_checkpoint(path, p);
    fs::resize_file(path, fs::file_size(path) - 8);
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
  }
  SUBCASE("missing manifest is rejected") {
    const std::string path = (dir / "d.bin").string();
    save_checkpoint(path, p);
    fs::remove(path + ".manifest");
    CHECK_THROWS_AS(load_checkpoint(path), ConfigError);
  }
  fs::remove_all(dir);
}

TEST_CASE("recurrent input vector layout") {
  CHECK(rl::rl2_input_len(5, 4) == 11);
  SUBCASE("interior step carries observation, one-hot action, reward, flag") {
    const std::vector<double> obs = {0.1, 0.2, 0.3};
    auto x = rl::rl2_input(obs, 2, -0.01, 1.0, 3, 4);
    REQUIRE(x.size() == 9);
    CHECK(x[0] == 0.1);
    CHECK(x[1] == 0.2);
    CHECK(x[2] == 0.3);
    CHECK(x[3] == 0.0);
    CHECK(x[4] == 0.0);
    CHECK(x[5] == 1.0);  // one-hot of action 2
    CHECK(x[6] == 0.0);
    CHECK(x[7] == -0.01);
    CHECK(x[8] == 1.0);
  }
  SUBCASE("trial start zeroes the previous-step fields") {
    const std::vector<double> obs = {0.5, -0.5, 0.0};
    auto x = rl::rl2_input(obs, -1, 0.0, 0.0, 3, 4);
    CHECK(x[0] == 0.5);
    for (std::size_t i = 3; i < 9; ++i) CHECK(x[i] == 0.0);
  }
  SUBCASE("length mismatch is rejected") {
    CHECK_THROWS_AS(rl::rl2_input(std::vector<double>{1.0}, 0, 0.0, 0.0, 3, 4),
                    ContractViolation);
  }
}
