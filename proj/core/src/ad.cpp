#include "metaexp/ad.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

namespace metaexp::ad {

std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

const char* op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::add: return "add";
    case Op::sub: return "sub";
    case Op::mul: return "mul";
    case Op::div: return "div";
    case Op::matmul: return "matmul";
    case Op::tanh_fn: return "tanh";
    case Op::relu: return "relu";
    case Op::exp_fn: return "exp";
    case Op::log_fn: return "log";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::concat: return "concat";
    case Op::index_select: return "index_select";
    case Op::log_softmax: return "log_softmax";
    case Op::clip: return "clip";
    case Op::transpose: return "transpose";
    case Op::reshape: return "reshape";
    case Op::slice: return "slice";
    case Op::scatter: return "scatter";
  }
  return "?";
}

const std::vector<double>& Tensor::values() const {
  check(defined(), "Tensor: reading values of an undefined tensor");
  return *data_;
}

double Tensor::item() const {
  check(defined() && size() == 1, "Tensor::item: tensor is not a scalar");
  return (*data_)[0];
}

Tensor Tensor::constant(Shape shape, std::vector<double> data) {
  check(numel(shape) == static_cast<std::int64_t>(data.size()),
        "Tensor::constant: shape " + shape_str(shape) + " does not match data length " +
            std::to_string(data.size()));
  check(shape.size() <= 2, "Tensor::constant: rank > 2 unsupported");
  Tensor t;
  t.shape_ = std::move(shape);
  t.data_ = std::make_shared<const std::vector<double>>(std::move(data));
  return t;
}

Tensor Tensor::scalar(double v) { return constant({}, {v}); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> d(static_cast<std::size_t>(numel(shape)), 0.0);
  return constant(std::move(shape), std::move(d));
}

// ---------------------------------------------------------------------------

namespace {

void ensure_finite(const std::vector<double>& v, Op op, int node) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericFault("non-finite value in forward output",
                         std::string(op_name(op)) + " node " + std::to_string(node >= 0 ? node : 0));
    }
  }
}

// tape of the operation = tape of whichever input has one; two different
// tapes in one op is a bug in the caller
Tape* common_tape(std::initializer_list<const Tensor*> xs) {
  Tape* t = nullptr;
  for (const Tensor* x : xs) {
    check(x->defined(), "op input is an undefined tensor");
    if (!x->on_tape()) continue;
    if (t == nullptr) {
      t = x->tape();
    } else {
      check(t == x->tape(), "op inputs live on two different tapes");
    }
  }
  return t;
}

bool scalar_like(const Tensor& t) { return t.size() == 1; }

// constants feeding a recorded op are copied onto the tape as leaves, so the
// backward sweep can always read input values and shapes by node id
int lift(Tape* tape, const Tensor& t) {
  if (tape == nullptr || t.on_tape()) return t.node();
  return tape->leaf(t.shape(), t.values()).node();
}

}  // namespace

Tensor record(Tape* tape, Op op, std::vector<int> inputs, Shape shape, std::vector<double> value,
              std::shared_ptr<const std::vector<double>> mask, std::vector<int> index, double lo,
              double hi) {
  auto data = std::make_shared<const std::vector<double>>(std::move(value));
  Tensor t;
  t.shape_ = shape;
  t.data_ = data;
  if (tape != nullptr) {
    Tape::Node n;
    n.op = op;
    n.inputs = std::move(inputs);
    n.shape = std::move(shape);
    n.value = data;
    n.mask = std::move(mask);
    n.index = std::move(index);
    n.lo = lo;
    n.hi = hi;
    tape->nodes_.push_back(std::move(n));
    t.tape_ = tape;
    t.node_ = static_cast<int>(tape->nodes_.size()) - 1;
  }
  ensure_finite(*data, op, t.node_);
  return t;
}

Tensor Tape::leaf(Shape shape, std::vector<double> data) {
  check(numel(shape) == static_cast<std::int64_t>(data.size()),
        "Tape::leaf: shape/data length mismatch");
  check(shape.size() <= 2, "Tape::leaf: rank > 2 unsupported");
  return record(this, Op::leaf, {}, std::move(shape), std::move(data), nullptr, {}, 0, 0);
}

Tensor Tape::leaf(const Tensor& values) { return leaf(values.shape(), values.values()); }

Op Tape::op_at(int node) const {
  check(node >= 0 && node < node_count(), "Tape::op_at: node out of range");
  return nodes_[static_cast<std::size_t>(node)].op;
}

std::vector<int> Tape::inputs_at(int node) const {
  check(node >= 0 && node < node_count(), "Tape::inputs_at: node out of range");
  return nodes_[static_cast<std::size_t>(node)].inputs;
}

Tensor Tape::tensor_at(int node) {
  check(node >= 0 && node < node_count(), "Tape::tensor_at: node out of range");
  const Node& n = nodes_[static_cast<std::size_t>(node)];
  Tensor t;
  t.shape_ = n.shape;
  t.data_ = n.value;
  t.tape_ = this;
  t.node_ = node;
  return t;
}

// --- elementwise -------------------------------------------------------------

namespace {

// equal shapes, or either side broadcast from a single element
Tensor binary_ew(Op op, const Tensor& a, const Tensor& b, double (*f)(double, double)) {
  Tape* tape = common_tape({&a, &b});
  const bool a1 = scalar_like(a), b1 = scalar_like(b);
  check(a.shape() == b.shape() || a1 || b1,
        std::string(op_name(op)) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
            shape_str(b.shape()));
  // prefer the non-broadcast side's shape; when both are size-1 keep the
  // higher rank so {1} is not silently collapsed to a rank-0 scalar
  const Tensor& big = (a1 && !b1) ? b : (b1 && !a1) ? a : (a.rank() >= b.rank() ? a : b);
  std::vector<double> out(static_cast<std::size_t>(big.size()));
  const auto& av = a.values();
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = f(av[a1 ? 0 : i], bv[b1 ? 0 : i]);
  }
  return record(tape, op, {lift(tape, a), lift(tape, b)}, big.shape(), std::move(out), nullptr, {},
                0, 0);
}

Tensor unary_ew(Op op, const Tensor& x, double (*f)(double),
                std::shared_ptr<const std::vector<double>> mask = nullptr) {
  Tape* tape = common_tape({&x});
  std::vector<double> out(static_cast<std::size_t>(x.size()));
  const auto& xv = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  return record(tape, op, {x.node()}, x.shape(), std::move(out), std::move(mask), {}, 0, 0);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_ew(Op::add, a, b, +[](double x, double y) { return x + y; });
}
Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_ew(Op::sub, a, b, +[](double x, double y) { return x - y; });
}
Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_ew(Op::mul, a, b, +[](double x, double y) { return x * y; });
}
Tensor div(const Tensor& a, const Tensor& b) {
  return binary_ew(Op::div, a, b, +[](double x, double y) { return x / y; });
}

Tensor tanh(const Tensor& x) {
  return unary_ew(Op::tanh_fn, x, +[](double v) { return std::tanh(v); });
}

Tensor relu(const Tensor& x) {
  // subgradient at 0 is 0; mask frozen at forward time
  auto mask = std::make_shared<std::vector<double>>(x.values().size());
  const auto& xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) (*mask)[i] = xv[i] > 0.0 ? 1.0 : 0.0;
  return unary_ew(Op::relu, x, +[](double v) { return v > 0.0 ? v : 0.0; }, std::move(mask));
}

Tensor exp(const Tensor& x) {
  return unary_ew(Op::exp_fn, x, +[](double v) { return std::exp(v); });
}
Tensor log(const Tensor& x) {
  return unary_ew(Op::log_fn, x, +[](double v) { return std::log(v); });
}

Tensor clip(const Tensor& x, double lo, double hi) {
  check(lo <= hi, "clip: lo > hi");
  auto mask = std::make_shared<std::vector<double>>(x.values().size());
  const auto& xv = x.values();
  // gradient 1 strictly inside (lo, hi), 0 outside and at the boundary
  for (std::size_t i = 0; i < xv.size(); ++i) (*mask)[i] = (xv[i] > lo && xv[i] < hi) ? 1.0 : 0.0;
  Tape* tape = common_tape({&x});
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = std::min(hi, std::max(lo, xv[i]));
  return record(tape, Op::clip, {x.node()}, x.shape(), std::move(out), std::move(mask), {}, lo, hi);
}

Tensor sum(const Tensor& x) {
  Tape* tape = common_tape({&x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return record(tape, Op::sum, {x.node()}, {}, {acc}, nullptr, {}, 0, 0);
}

Tensor mean(const Tensor& x) {
  check(x.size() > 0, "mean: empty tensor");
  Tape* tape = common_tape({&x});
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return record(tape, Op::mean, {x.node()}, {}, {acc / static_cast<double>(x.size())}, nullptr, {},
                0, 0);
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  Tape* tape = common_tape({&a, &b});
  check(a.rank() >= 1 && a.rank() <= 2 && b.rank() >= 1 && b.rank() <= 2,
        "matmul: inputs must be rank 1 or 2");
  // vectors promote to a row (lhs) / column (rhs); the result drops the
  // promoted dimensions again
  const bool avec = a.rank() == 1, bvec = b.rank() == 1;
  const int m = avec ? 1 : a.shape()[0];
  const int k = avec ? a.shape()[0] : a.shape()[1];
  const int k2 = bvec ? b.shape()[0] : b.shape()[0];
  const int n = bvec ? 1 : b.shape()[1];
  check(k == k2, "matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  std::vector<double> out(static_cast<std::size_t>(m) * n, 0.0);
  const auto& av = a.values();
  const auto& bv = b.values();
  for (int i = 0; i < m; ++i) {
    for (int p = 0; p < k; ++p) {
      const double aip = av[static_cast<std::size_t>(i) * k + p];
      if (aip == 0.0) continue;
      const double* brow = bv.data() + static_cast<std::size_t>(p) * n;
      double* orow = out.data() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) orow[j] += aip * brow[j];
    }
  }
  Shape shape;
  if (avec && bvec) {
    shape = {};
  } else if (avec) {
    shape = {n};
  } else if (bvec) {
    shape = {m};
  } else {
    shape = {m, n};
  }
  return record(tape, Op::matmul, {lift(tape, a), lift(tape, b)}, std::move(shape),
                std::move(out), nullptr, {}, 0, 0);
}

Tensor transpose(const Tensor& x) {
  check(x.rank() == 2, "transpose: rank-2 input required");
  Tape* tape = common_tape({&x});
  const int r = x.shape()[0], c = x.shape()[1];
  std::vector<double> out(static_cast<std::size_t>(r) * c);
  const auto& xv = x.values();
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j)
      out[static_cast<std::size_t>(j) * r + i] = xv[static_cast<std::size_t>(i) * c + j];
  return record(tape, Op::transpose, {x.node()}, {c, r}, std::move(out), nullptr, {}, 0, 0);
}

Tensor reshape(const Tensor& x, Shape shape) {
  check(numel(shape) == x.size(), "reshape: element count mismatch " + shape_str(x.shape()) +
                                      " -> " + shape_str(shape));
  check(shape.size() <= 2, "reshape: rank > 2 unsupported");
  Tape* tape = common_tape({&x});
  return record(tape, Op::reshape, {x.node()}, std::move(shape), x.values(), nullptr, {}, 0, 0);
}

Tensor concat(std::span<const Tensor> xs) {
  check(!xs.empty(), "concat: no inputs");
  Tape* tape = nullptr;
  std::int64_t total = 0;
  for (const Tensor& x : xs) {
    check(x.defined(), "concat: undefined input");
    if (x.on_tape()) {
      check(tape == nullptr || tape == x.tape(), "concat: inputs on two different tapes");
      tape = x.tape();
    }
    total += x.size();
  }
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total));
  std::vector<int> inputs;
  inputs.reserve(xs.size());
  for (const Tensor& x : xs) {
    const auto& v = x.values();
    out.insert(out.end(), v.begin(), v.end());
    inputs.push_back(lift(tape, x));
  }
  // offsets of each input within the flat output, saved for the backward slice
  std::vector<int> index;
  index.reserve(xs.size() + 1);
  int off = 0;
  for (const Tensor& x : xs) {
    index.push_back(off);
    off += static_cast<int>(x.size());
  }
  index.push_back(off);
  return record(tape, Op::concat, std::move(inputs), {static_cast<int>(total)}, std::move(out),
                nullptr, std::move(index), 0, 0);
}

Tensor index_select(const Tensor& x, std::vector<int> idx) {
  check(x.rank() == 1, "index_select: rank-1 input required");
  Tape* tape = common_tape({&x});
  const auto& xv = x.values();
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < static_cast<int>(xv.size()),
          "index_select: index out of range");
    out[i] = xv[static_cast<std::size_t>(idx[i])];
  }
  // the shape must be computed before std::move(idx): argument evaluation
  // order is unspecified
  const int out_len = static_cast<int>(idx.size());
  return record(tape, Op::index_select, {x.node()}, {out_len}, std::move(out), nullptr,
                std::move(idx), 0, 0);
}

Tensor scatter(const Tensor& x, std::vector<int> idx, int size) {
  check(x.rank() == 1, "scatter: rank-1 input required");
  check(static_cast<std::int64_t>(idx.size()) == x.size(), "scatter: index/value length mismatch");
  Tape* tape = common_tape({&x});
  std::vector<double> out(static_cast<std::size_t>(size), 0.0);
  const auto& xv = x.values();
  for (std::size_t i = 0; i < idx.size(); ++i) {
    check(idx[i] >= 0 && idx[i] < size, "scatter: index out of range");
    out[static_cast<std::size_t>(idx[i])] += xv[i];  // duplicates accumulate
  }
  return record(tape, Op::scatter, {x.node()}, {size}, std::move(out), nullptr, std::move(idx), 0,
                0);
}

Tensor slice(const Tensor& x, int offset, int len) {
  check(x.rank() == 1, "slice: rank-1 input required");
  check(offset >= 0 && len >= 0 && offset + len <= x.size(), "slice: range out of bounds");
  Tape* tape = common_tape({&x});
  const auto& xv = x.values();
  std::vector<double> out(xv.begin() + offset, xv.begin() + offset + len);
  return record(tape, Op::slice, {x.node()}, {len}, std::move(out), nullptr, {offset}, 0, 0);
}

Tensor log_softmax(const Tensor& logits) {
  check(logits.rank() == 1 && logits.size() > 0, "log_softmax: non-empty rank-1 input required");
  Tape* tape = common_tape({&logits});
  const auto& xv = logits.values();
  double mx = xv[0];
  for (double v : xv) mx = std::max(mx, v);
  double lse = 0.0;
  for (double v : xv) lse += std::exp(v - mx);
  lse = mx + std::log(lse);
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] - lse;
  return record(tape, Op::log_softmax, {logits.node()}, logits.shape(), std::move(out), nullptr, {},
                0, 0);
}

Tensor neg(const Tensor& x) { return mul(x, Tensor::scalar(-1.0)); }

Tensor detach(const Tensor& x) { return Tensor::constant(x.shape(), x.values()); }

// --- backward ----------------------------------------------------------------

namespace {

// grad contributions must arrive in the input's own shape; broadcast inputs
// collapse by summation
Tensor fit_grad(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (numel(target) == g.size()) return reshape(g, target);
  check(numel(target) == 1, "backward: cannot reduce gradient to target shape");
  return reshape(sum(g), target);
}

struct NodeMeta {
  Op op;
  std::vector<int> inputs;
  Shape shape;
  std::shared_ptr<const std::vector<double>> value;
  std::shared_ptr<const std::vector<double>> mask;
  std::vector<int> index;
  double lo, hi;
  std::vector<Shape> in_shapes;
};

}  // namespace

std::vector<Tensor> backward(const Tensor& root, std::span<const Tensor> wrt, bool create_graph) {
  check(root.defined() && root.on_tape(), "backward: root is not on a tape");
  check(root.size() == 1, "backward: root must be a scalar, got " + shape_str(root.shape()));
  Tape& tape = *root.tape();
  const int root_id = root.node();

  std::vector<Tensor> grads(static_cast<std::size_t>(root_id) + 1);
  grads[static_cast<std::size_t>(root_id)] = Tensor::constant(root.shape(), {1.0});

  auto accumulate = [&](int node, const Tensor& g) {
    if (node < 0) return;  // constant input: no grad slot
    Tensor& slot = grads[static_cast<std::size_t>(node)];
    slot = slot.defined() ? add(slot, g) : g;
  };

  for (int id = root_id; id >= 0; --id) {
    if (!grads[static_cast<std::size_t>(id)].defined()) continue;
    // copy node metadata up front: appending grad nodes may reallocate nodes_
    NodeMeta m;
    {
      const auto& n = tape.nodes_[static_cast<std::size_t>(id)];
      m.op = n.op;
      m.inputs = n.inputs;
      m.shape = n.shape;
      m.value = n.value;
      m.mask = n.mask;
      m.index = n.index;
      m.lo = n.lo;
      m.hi = n.hi;
      for (int in : n.inputs) {
        m.in_shapes.push_back(in >= 0 ? tape.nodes_[static_cast<std::size_t>(in)].shape : Shape{});
      }
    }
    if (m.op == Op::leaf) continue;

    const Tensor g = grads[static_cast<std::size_t>(id)];
    // with create_graph the rules below run on tape-attached tensors and
    // record new nodes; otherwise on detached constants (plain arithmetic)
    auto input = [&](std::size_t which) -> Tensor {
      int src = m.inputs[which];
      check(src >= 0, "backward: missing saved input");
      Tensor t = tape.tensor_at(src);
      return create_graph ? t : detach(t);
    };
    auto self = [&]() -> Tensor {
      Tensor t = tape.tensor_at(id);
      return create_graph ? t : detach(t);
    };
    auto mask_tensor = [&]() -> Tensor {
      return Tensor::constant(m.shape, *m.mask);  // piecewise-constant: stays detached
    };

    switch (m.op) {
      case Op::leaf:
        break;
      case Op::add: {
        accumulate(m.inputs[0], fit_grad(g, m.in_shapes[0]));
        accumulate(m.inputs[1], fit_grad(g, m.in_shapes[1]));
        break;
      }
      case Op::sub: {
        accumulate(m.inputs[0], fit_grad(g, m.in_shapes[0]));
        accumulate(m.inputs[1], fit_grad(neg(g), m.in_shapes[1]));
        break;
      }
      case Op::mul: {
        accumulate(m.inputs[0], fit_grad(mul(g, input(1)), m.in_shapes[0]));
        accumulate(m.inputs[1], fit_grad(mul(g, input(0)), m.in_shapes[1]));
        break;
      }
      case Op::div: {
        Tensor b = input(1);
        accumulate(m.inputs[0], fit_grad(div(g, b), m.in_shapes[0]));
        accumulate(m.inputs[1], fit_grad(neg(div(mul(g, input(0)), mul(b, b))), m.in_shapes[1]));
        break;
      }
      case Op::matmul: {
        const Shape& sa = m.in_shapes[0];
        const Shape& sb = m.in_shapes[1];
        const bool avec = sa.size() == 1, bvec = sb.size() == 1;
        const int mm = avec ? 1 : sa[0];
        const int kk = avec ? sa[0] : sa[1];
        const int nn = bvec ? 1 : sb[1];
        Tensor a2 = avec ? reshape(input(0), {1, kk}) : input(0);
        Tensor b2 = bvec ? reshape(input(1), {kk, 1}) : input(1);
        Tensor g2 = reshape(g, {mm, nn});
        accumulate(m.inputs[0], reshape(matmul(g2, transpose(b2)), sa));
        accumulate(m.inputs[1], reshape(matmul(transpose(a2), g2), sb));
        break;
      }
      case Op::tanh_fn: {
        Tensor y = self();
        accumulate(m.inputs[0], mul(g, sub(Tensor::scalar(1.0), mul(y, y))));
        break;
      }
      case Op::relu:
      case Op::clip: {
        accumulate(m.inputs[0], mul(g, mask_tensor()));
        break;
      }
      case Op::exp_fn: {
        accumulate(m.inputs[0], mul(g, self()));
        break;
      }
      case Op::log_fn: {
        accumulate(m.inputs[0], div(g, input(0)));
        break;
      }
      case Op::sum: {
        std::vector<double> ones(static_cast<std::size_t>(numel(m.in_shapes[0])), 1.0);
        accumulate(m.inputs[0], mul(g, Tensor::constant(m.in_shapes[0], std::move(ones))));
        break;
      }
      case Op::mean: {
        const auto n = static_cast<double>(numel(m.in_shapes[0]));
        std::vector<double> w(static_cast<std::size_t>(numel(m.in_shapes[0])), 1.0 / n);
        accumulate(m.inputs[0], mul(g, Tensor::constant(m.in_shapes[0], std::move(w))));
        break;
      }
      case Op::concat: {
        for (std::size_t i = 0; i < m.inputs.size(); ++i) {
          const int off = m.index[i];
          const int len = m.index[i + 1] - off;
          accumulate(m.inputs[i], reshape(slice(g, off, len), m.in_shapes[i]));
        }
        break;
      }
      case Op::index_select: {
        const int src_len = static_cast<int>(numel(m.in_shapes[0]));
        accumulate(m.inputs[0], scatter(g, m.index, src_len));
        break;
      }
      case Op::scatter: {
        accumulate(m.inputs[0], index_select(g, m.index));
        break;
      }
      case Op::slice: {
        const int src_len = static_cast<int>(numel(m.in_shapes[0]));
        std::vector<int> idx(static_cast<std::size_t>(numel(m.shape)));
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = m.index[0] + static_cast<int>(i);
        accumulate(m.inputs[0], scatter(g, std::move(idx), src_len));
        break;
      }
      case Op::log_softmax: {
        // d/dx log_softmax(x)^T g = g - softmax(x) * sum(g)
        Tensor y = self();
        accumulate(m.inputs[0], sub(g, mul(exp(y), sum(g))));
        break;
      }
      case Op::transpose: {
        accumulate(m.inputs[0], transpose(g));
        break;
      }
      case Op::reshape: {
        accumulate(m.inputs[0], reshape(g, m.in_shapes[0]));
        break;
      }
    }
  }

  std::vector<Tensor> out;
  out.reserve(wrt.size());
  for (const Tensor& w : wrt) {
    check(w.defined() && w.on_tape() && w.tape() == &tape,
          "backward: wrt tensor is not on the root's tape");
    Tensor g;
    if (w.node() <= root_id) g = grads[static_cast<std::size_t>(w.node())];
    // parameters the root never touched get explicit zeros rather than
    // missing entries
    out.push_back(g.defined() ? fit_grad(g, w.shape()) : Tensor::zeros(w.shape()));
  }
  return out;
}

// --- finite differences -------------------------------------------------------

double max_relative_error(std::span<const double> analytic, std::span<const double> reference) {
  check(analytic.size() == reference.size(), "max_relative_error: length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double err =
        std::abs(analytic[i] - reference[i]) / std::max(1.0, std::abs(reference[i]));
    worst = std::max(worst, err);
  }
  return worst;
}

namespace {

double eval_plain(const TapedFn& f, const std::vector<Tensor>& theta) {
  // a full scratch tape, discarded after the call: f may differentiate
  // internally (the second-order programs do), so plain constants won't do
  Tape scratch;
  std::vector<Tensor> leaves;
  leaves.reserve(theta.size());
  for (const Tensor& t : theta) leaves.push_back(scratch.leaf(t));
  Tensor out = f(scratch, leaves);
  check(out.size() == 1, "finite_difference_check: f must return a scalar");
  return out.item();
}

std::vector<Tensor> perturbed(const std::vector<Tensor>& theta, std::size_t seg, std::size_t coord,
                              double delta) {
  std::vector<Tensor> out = theta;
  std::vector<double> data = theta[seg].values();
  data[coord] += delta;
  out[seg] = Tensor::constant(theta[seg].shape(), std::move(data));
  return out;
}

double fd_error_impl(const TapedFn& f, const std::vector<Tensor>& theta,
                     const std::vector<Tensor>& grads, double h) {
  check(h > 0.0, "finite_difference: h must be positive");
  check(grads.size() == theta.size(), "finite_difference: gradient count mismatch");
  // a noisy f would make the central differences meaningless
  const double v1 = eval_plain(f, theta);
  const double v2 = eval_plain(f, theta);
  if (std::memcmp(&v1, &v2, sizeof(double)) != 0) {
    throw OracleInvalid("finite_difference_check: f is not deterministic across evaluations");
  }
  double worst = 0.0;
  for (std::size_t s = 0; s < theta.size(); ++s) {
    check(grads[s].shape() == theta[s].shape(), "finite_difference: gradient shape mismatch");
    const auto& gv = grads[s].values();
    for (std::size_t c = 0; c < gv.size(); ++c) {
      const double fp = eval_plain(f, perturbed(theta, s, c, +h));
      const double fm = eval_plain(f, perturbed(theta, s, c, -h));
      const double fd = (fp - fm) / (2.0 * h);
      const double err = std::abs(gv[c] - fd) / std::max(1.0, std::abs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace

double finite_difference_check(const TapedFn& f, const std::vector<Tensor>& theta, double h) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(theta.size());
  for (const Tensor& t : theta) leaves.push_back(tape.leaf(t));
  Tensor out = f(tape, leaves);
  check(out.size() == 1, "finite_difference_check: f must return a scalar");
  check(out.on_tape(), "finite_difference_check: f's output is disconnected from the parameters");
  std::vector<Tensor> grads = backward(out, leaves, /*create_graph=*/false);
  return fd_error_impl(f, theta, grads, h);
}

double finite_difference_error(const TapedFn& f, const std::vector<Tensor>& theta,
                               const std::vector<Tensor>& claimed_grads, double h) {
  return fd_error_impl(f, theta, claimed_grads, h);
}

}  // namespace metaexp::ad
