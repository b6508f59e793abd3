#include <cmath>
#include <cstdio>

#include "metaexp/oracle.hpp"
#include "metaexp/policy.hpp"
#include "metaexp/rng.hpp"

namespace metaexp::oracle {

Check make_check(std::string name, double observed, double tolerance) {
  Check c;
  c.name = std::move(name);
  c.observed = observed;
  c.tolerance = tolerance;
  c.pass = std::isfinite(observed) && observed <= tolerance;
  return c;
}

bool all_pass(const std::vector<Check>& checks) {
  for (const Check& c : checks)
    if (!c.pass) return false;
  return true;
}

std::string format_report(const std::vector<Check>& checks) {
  std::string out;
  for (const Check& c : checks) {
    char line[256];
    std::snprintf(line, sizeof(line), "%s  %-44s observed=%.3e  bound=%.3e\n",
                  c.pass ? "PASS" : "FAIL", c.name.c_str(), c.observed, c.tolerance);
    out += line;
  }
  return out;
}

namespace {

using ad::Tensor;

constexpr double kFdStep = 1e-5;
constexpr double kPrimitiveTol = 1e-6;

std::vector<double> rand_vals(Rng& rng, std::int64_t n, double lo, double hi) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

// values in [-span, -margin] U [margin, span]; keeps finite differences away
// from the relu kink and clip boundaries
std::vector<double> rand_vals_away(Rng& rng, std::int64_t n, double margin, double span) {
  std::vector<double> v(static_cast<std::size_t>(n));
  for (double& x : v) {
    const double mag = rng.uniform(margin, span);
    x = rng.uniform01() < 0.5 ? -mag : mag;
  }
  return v;
}

ad::Shape rand_shape(Rng& rng) {
  const int r = static_cast<int>(rng.below(3));
  ad::Shape s;
  for (int i = 0; i < r; ++i) s.push_back(1 + static_cast<int>(rng.below(4)));
  return s;
}

double fd_instance(const ad::TapedFn& f, const std::vector<Tensor>& theta) {
  return ad::finite_difference_check(f, theta, kFdStep);
}

double check_binary_ew(Rng& rng, int kind) {
  ad::Shape shape = rand_shape(rng);
  const std::int64_t n = ad::numel(shape);
  Tensor a = Tensor::constant(shape, rand_vals(rng, n, -2.0, 2.0));
  // occasionally broadcast a scalar against the full shape
  const bool bcast = n > 1 && rng.uniform01() < 0.25;
  Tensor b = bcast ? Tensor::scalar(rng.uniform(0.3, 1.5))
                   : Tensor::constant(shape, kind == 3 ? rand_vals_away(rng, n, 0.3, 1.5)
                                                       : rand_vals(rng, n, -2.0, 2.0));
  if (kind == 3 && bcast) b = Tensor::scalar(rng.uniform01() < 0.5 ? -0.7 : 0.7);
  std::vector<double> w = rand_vals(rng, n, -1.0, 1.0);
  auto g = [kind, w, shape](ad::Tape&, const std::vector<Tensor>& th) {
    Tensor y;
    switch (kind) {
      case 0: y = ad::add(th[0], th[1]); break;
      case 1: y = ad::sub(th[0], th[1]); break;
      case 2: y = ad::mul(th[0], th[1]); break;
      default: y = ad::div(th[0], th[1]); break;
    }
    return ad::sum(ad::mul(y, Tensor::constant(shape, w)));
  };
  return fd_instance(g, {a, b});
}

double check_matmul(Rng& rng) {
  const int m = 1 + static_cast<int>(rng.below(4));
  const int k = 1 + static_cast<int>(rng.below(4));
  const int n = 1 + static_cast<int>(rng.below(4));
  const int variant = static_cast<int>(rng.below(4));
  ad::Shape sa, sb;
  switch (variant) {
    case 0: sa = {m, k}; sb = {k, n}; break;   // mat-mat
    case 1: sa = {k}; sb = {k, n}; break;      // vec-mat
    case 2: sa = {m, k}; sb = {k}; break;      // mat-vec
    default: sa = {k}; sb = {k}; break;        // dot
  }
  Tensor a = Tensor::constant(sa, rand_vals(rng, ad::numel(sa), -1.5, 1.5));
  Tensor b = Tensor::constant(sb, rand_vals(rng, ad::numel(sb), -1.5, 1.5));
  ad::Shape out_shape;
  if (variant == 0) out_shape = {m, n};
  else if (variant == 1) out_shape = {n};
  else if (variant == 2) out_shape = {m};
  std::vector<double> w = rand_vals(rng, ad::numel(out_shape), -1.0, 1.0);
  auto g = [w, out_shape](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::matmul(th[0], th[1]), Tensor::constant(out_shape, w)));
  };
  return fd_instance(g, {a, b});
}

double check_unary(Rng& rng, int kind) {
  ad::Shape shape = rand_shape(rng);
  const std::int64_t n = ad::numel(shape);
  std::vector<double> vals;
  switch (kind) {
    case 1: vals = rand_vals_away(rng, n, 1e-2, 2.0); break;  // relu: off the kink
    case 3: vals = rand_vals(rng, n, 0.1, 3.0); break;        // log: strictly positive
    default: vals = rand_vals(rng, n, -2.0, 2.0); break;
  }
  Tensor x = Tensor::constant(shape, vals);
  std::vector<double> w = rand_vals(rng, n, -1.0, 1.0);
  auto g = [kind, w, shape](ad::Tape&, const std::vector<Tensor>& th) {
    Tensor y;
    switch (kind) {
      case 0: y = ad::tanh(th[0]); break;
      case 1: y = ad::relu(th[0]); break;
      case 2: y = ad::exp(th[0]); break;
      default: y = ad::log(th[0]); break;
    }
    return ad::sum(ad::mul(y, Tensor::constant(shape, w)));
  };
  return fd_instance(g, {x});
}

double check_reduce(Rng& rng, bool use_mean) {
  ad::Shape shape = rand_shape(rng);
  Tensor x = Tensor::constant(shape, rand_vals(rng, ad::numel(shape), -2.0, 2.0));
  const double c = rng.uniform(-2.0, 2.0);
  auto g = [use_mean, c](ad::Tape&, const std::vector<Tensor>& th) {
    Tensor y = use_mean ? ad::mean(th[0]) : ad::sum(th[0]);
    // compose with a nonlinearity so the root is not linear in x
    return ad::mul(ad::tanh(y), Tensor::scalar(c));
  };
  return fd_instance(g, {x});
}

double check_concat(Rng& rng) {
  const int parts = 2 + static_cast<int>(rng.below(3));
  std::vector<Tensor> xs;
  std::int64_t total = 0;
  for (int i = 0; i < parts; ++i) {
    const int len = 1 + static_cast<int>(rng.below(4));
    xs.push_back(Tensor::constant({len}, rand_vals(rng, len, -2.0, 2.0)));
    total += len;
  }
  std::vector<double> w = rand_vals(rng, total, -1.0, 1.0);
  auto g = [w, total](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::concat(th), Tensor::constant({static_cast<int>(total)}, w)));
  };
  return fd_instance(g, xs);
}

double check_index_select(Rng& rng) {
  const int n = 2 + static_cast<int>(rng.below(5));
  const int m = 1 + static_cast<int>(rng.below(6));
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int& i : idx) i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));  // dups fine
  Tensor x = Tensor::constant({n}, rand_vals(rng, n, -2.0, 2.0));
  std::vector<double> w = rand_vals(rng, m, -1.0, 1.0);
  auto g = [idx, w, m](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::index_select(th[0], idx), Tensor::constant({m}, w)));
  };
  return fd_instance(g, {x});
}

double check_log_softmax(Rng& rng) {
  const int n = 2 + static_cast<int>(rng.below(5));
  Tensor x = Tensor::constant({n}, rand_vals(rng, n, -2.0, 2.0));
  std::vector<double> w = rand_vals(rng, n, -1.0, 1.0);
  auto g = [w, n](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::log_softmax(th[0]), Tensor::constant({n}, w)));
  };
  return fd_instance(g, {x});
}

double check_clip(Rng& rng) {
  ad::Shape shape = rand_shape(rng);
  const std::int64_t n = ad::numel(shape);
  const double lo = rng.uniform(-1.2, -0.4);
  const double hi = rng.uniform(0.4, 1.2);
  // mix of inside and outside values, all at least 1e-2 from either boundary
  std::vector<double> vals(static_cast<std::size_t>(n));
  for (double& v : vals) {
    const int region = static_cast<int>(rng.below(3));
    if (region == 0) v = rng.uniform(lo + 1e-2, hi - 1e-2);
    else if (region == 1) v = rng.uniform(lo - 1.0, lo - 1e-2);
    else v = rng.uniform(hi + 1e-2, hi + 1.0);
  }
  Tensor x = Tensor::constant(shape, vals);
  std::vector<double> w = rand_vals(rng, n, -1.0, 1.0);
  auto g = [lo, hi, w, shape](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::clip(th[0], lo, hi), Tensor::constant(shape, w)));
  };
  return fd_instance(g, {x});
}

double check_transpose(Rng& rng) {
  const int m = 1 + static_cast<int>(rng.below(4));
  const int n = 1 + static_cast<int>(rng.below(4));
  Tensor x = Tensor::constant({m, n}, rand_vals(rng, static_cast<std::int64_t>(m) * n, -2.0, 2.0));
  std::vector<double> w = rand_vals(rng, static_cast<std::int64_t>(m) * n, -1.0, 1.0);
  auto g = [m, n, w](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::transpose(th[0]), Tensor::constant({n, m}, w)));
  };
  return fd_instance(g, {x});
}

double check_reshape(Rng& rng) {
  const int m = 1 + static_cast<int>(rng.below(4));
  const int n = 1 + static_cast<int>(rng.below(4));
  Tensor x = Tensor::constant({m, n}, rand_vals(rng, static_cast<std::int64_t>(m) * n, -2.0, 2.0));
  std::vector<double> w = rand_vals(rng, static_cast<std::int64_t>(m) * n, -1.0, 1.0);
  auto g = [m, n, w](ad::Tape&, const std::vector<Tensor>& th) {
    const int flat = m * n;
    return ad::sum(ad::mul(ad::reshape(th[0], {flat}), Tensor::constant({flat}, w)));
  };
  return fd_instance(g, {x});
}

double check_slice(Rng& rng) {
  const int n = 3 + static_cast<int>(rng.below(5));
  const int len = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - 1)));
  const int off = static_cast<int>(rng.below(static_cast<std::uint64_t>(n - len + 1)));
  Tensor x = Tensor::constant({n}, rand_vals(rng, n, -2.0, 2.0));
  std::vector<double> w = rand_vals(rng, len, -1.0, 1.0);
  auto g = [off, len, w](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::slice(th[0], off, len), Tensor::constant({len}, w)));
  };
  return fd_instance(g, {x});
}

double check_scatter(Rng& rng) {
  const int m = 1 + static_cast<int>(rng.below(5));
  const int n = m + static_cast<int>(rng.below(4));
  std::vector<int> idx(static_cast<std::size_t>(m));
  for (int& i : idx) i = static_cast<int>(rng.below(static_cast<std::uint64_t>(n)));  // dups fine
  Tensor x = Tensor::constant({m}, rand_vals(rng, m, -2.0, 2.0));
  std::vector<double> w = rand_vals(rng, n, -1.0, 1.0);
  auto g = [idx, n, w](ad::Tape&, const std::vector<Tensor>& th) {
    return ad::sum(ad::mul(ad::scatter(th[0], idx, n), Tensor::constant({n}, w)));
  };
  return fd_instance(g, {x});
}

}  // namespace

std::vector<Check> fd_primitive_checks(std::uint64_t seed, int instances) {
  struct Kind {
    const char* name;
    double (*run)(Rng&);
  };
  // binaries and parametrized unaries get thin adapters so everything fits
  // one function-pointer table
  static constexpr auto add_fn = [](Rng& r) { return check_binary_ew(r, 0); };
  static constexpr auto sub_fn = [](Rng& r) { return check_binary_ew(r, 1); };
  static constexpr auto mul_fn = [](Rng& r) { return check_binary_ew(r, 2); };
  static constexpr auto div_fn = [](Rng& r) { return check_binary_ew(r, 3); };
  static constexpr auto tanh_fn = [](Rng& r) { return check_unary(r, 0); };
  static constexpr auto relu_fn = [](Rng& r) { return check_unary(r, 1); };
  static constexpr auto exp_fn = [](Rng& r) { return check_unary(r, 2); };
  static constexpr auto log_fn = [](Rng& r) { return check_unary(r, 3); };
  static constexpr auto sum_fn = [](Rng& r) { return check_reduce(r, false); };
  static constexpr auto mean_fn = [](Rng& r) { return check_reduce(r, true); };
  const Kind kinds[] = {
      {"fd add", add_fn},
      {"fd sub", sub_fn},
      {"fd mul", mul_fn},
      {"fd div", div_fn},
      {"fd matmul", check_matmul},
      {"fd tanh", tanh_fn},
      {"fd relu", relu_fn},
      {"fd exp", exp_fn},
      {"fd log", log_fn},
      {"fd sum", sum_fn},
      {"fd mean", mean_fn},
      {"fd concat", check_concat},
      {"fd index_select", check_index_select},
      {"fd log_softmax", check_log_softmax},
      {"fd clip", check_clip},
      {"fd transpose", check_transpose},
      {"fd reshape", check_reshape},
      {"fd slice", check_slice},
      {"fd scatter", check_scatter},
  };
  std::vector<Check> out;
  for (const Kind& k : kinds) {
    Rng rng = Rng::from_key(seed, {0x5d1u, static_cast<std::uint64_t>(&k - kinds)});
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) worst = std::max(worst, k.run(rng));
    out.push_back(make_check(k.name, worst, kPrimitiveTol));
  }
  return out;
}

namespace {

// expected-reward loss of a 2-action categorical bandit with logits th:
// L = -sum_a softmax(th)_a * r_a.  Smooth, so finite differences are exact
// enough for the second-order path.
Tensor bandit_loss(const Tensor& th, const Tensor& rewards) {
  return ad::neg(ad::sum(ad::mul(ad::exp(ad::log_softmax(th)), rewards)));
}

}  // namespace

std::vector<Check> fd_composed_checks(std::uint64_t seed) {
  std::vector<Check> out;

  {  // sum of squares: gradient is exactly 2*theta
    Rng rng = Rng::from_key(seed, {0xc0131u});
    Tensor x = Tensor::constant({5}, rand_vals(rng, 5, -2.0, 2.0));
    auto f = [](ad::Tape&, const std::vector<Tensor>& th) {
      return ad::sum(ad::mul(th[0], th[0]));
    };
    out.push_back(make_check("fd sum_of_squares", fd_instance(f, {x}), 1e-9));
  }

  {  // two-layer tanh net, weighted logits readout
    Rng rng = Rng::from_key(seed, {0xc0132u});
    Tensor w1 = Tensor::constant({8, 4}, rand_vals(rng, 32, -0.7, 0.7));
    Tensor b1 = Tensor::constant({8}, rand_vals(rng, 8, -0.3, 0.3));
    Tensor w2 = Tensor::constant({3, 8}, rand_vals(rng, 24, -0.7, 0.7));
    Tensor b2 = Tensor::constant({3}, rand_vals(rng, 3, -0.3, 0.3));
    std::vector<double> obs = rand_vals(rng, 4, -1.0, 1.0);
    std::vector<double> w = rand_vals(rng, 3, -1.0, 1.0);
    auto f = [obs, w](ad::Tape&, const std::vector<Tensor>& th) {
      Tensor x = Tensor::constant({4}, obs);
      Tensor h = ad::tanh(ad::add(ad::matmul(th[0], x), th[1]));
      Tensor logits = ad::add(ad::matmul(th[2], h), th[3]);
      return ad::sum(ad::mul(logits, Tensor::constant({3}, w)));
    };
    out.push_back(make_check("fd two_layer_net", fd_instance(f, {w1, b1, w2, b2}), kPrimitiveTol));
  }

  {  // 3-step recurrent rollout surrogate with a frozen action sequence
    Rng rng = Rng::from_key(seed, {0xc0133u});
    rl::GruPolicy policy({.input_len = 3, .n_actions = 3, .hidden = 5});
    ParamVector params = policy.init_params(rng);
    std::vector<std::string> names;
    std::vector<Tensor> theta;
    for (const auto& seg : params.segments()) {
      names.push_back(seg.name);
      theta.push_back(seg.value);
    }
    std::vector<std::vector<double>> inputs;
    std::vector<int> actions;
    for (int t = 0; t < 3; ++t) {
      inputs.push_back(rand_vals(rng, 3, -1.0, 1.0));
      actions.push_back(static_cast<int>(rng.below(3)));
    }
    auto f = [&policy, names, inputs, actions](ad::Tape&, const std::vector<Tensor>& th) {
      ParamVector pv;
      for (std::size_t i = 0; i < names.size(); ++i) pv.add(names[i], th[i]);
      Tensor h = policy.initial_state();
      std::vector<Tensor> terms;
      for (int t = 0; t < 3; ++t) {
        auto [logits, h2] = policy.step(pv, h, Tensor::constant({3}, inputs[t]));
        h = h2;
        terms.push_back(ad::index_select(ad::log_softmax(logits), {actions[t]}));
      }
      return ad::sum(ad::concat(terms));
    };
    out.push_back(make_check("fd recurrent_rollout_surrogate", fd_instance(f, theta), 1e-5));
  }

  {  // gradient step differentiated through: J(th) = L(th - a*dL(th))
    Rng rng = Rng::from_key(seed, {0xc0134u});
    Tensor th = Tensor::constant({2}, rand_vals(rng, 2, -1.0, 1.0));
    std::vector<double> r = {0.3, -0.2};
    auto f = [r](ad::Tape&, const std::vector<Tensor>& theta) {
      Tensor rewards = Tensor::constant({2}, r);
      Tensor inner = bandit_loss(theta[0], rewards);
      std::vector<Tensor> g = ad::backward(inner, {&theta[0], 1}, /*create_graph=*/true);
      Tensor adapted = ad::sub(theta[0], ad::mul(Tensor::scalar(0.5), g[0]));
      return bandit_loss(adapted, rewards);
    };
    out.push_back(make_check("fd grad_step_through_grad", fd_instance(f, {th}), 1e-5));
  }

  return out;
}

}  // namespace metaexp::oracle
