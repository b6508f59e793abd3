#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "metaexp/errors.hpp"

namespace metaexp::ad {

// Dense row-major tensors of rank 0..2; 64-bit floats throughout.  The policy
// and loss code only ever needs vectors, matrices and scalars, so nothing
// more general is supported on purpose.
using Shape = std::vector<int>;

std::int64_t numel(const Shape& s);
std::string shape_str(const Shape& s);

enum class Op : std::uint8_t {
  leaf,
  add,
  sub,
  mul,
  div,
  matmul,
  tanh_fn,
  relu,
  exp_fn,
  log_fn,
  sum,
  mean,
  concat,
  index_select,
  log_softmax,
  clip,
  transpose,
  reshape,
  slice,
  scatter,
};

const char* op_name(Op op);

class Tape;

// Handle to an immutable value, optionally attached to a tape node.  Copies
// are cheap (shared data).  A Tensor attached to a tape must not outlive it.
class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<double> data);
  static Tensor scalar(double v);
  static Tensor zeros(Shape shape);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t size() const { return data_ ? static_cast<std::int64_t>(data_->size()) : 0; }
  const std::vector<double>& values() const;
  double item() const;  // requires size() == 1

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int node() const { return node_; }

 private:
  friend class Tape;
  friend Tensor record(Tape* tape, Op op, std::vector<int> inputs, Shape shape,
                       std::vector<double> value, std::shared_ptr<const std::vector<double>> mask,
                       std::vector<int> index, double lo, double hi);
  std::shared_ptr<const std::vector<double>> data_;
  Shape shape_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

// Records one computation graph.  Construction and backward are
// single-threaded per tape; independent tapes may live on separate threads.
// The tape is rebuilt from scratch for every meta-iteration rather than
// mutated in place.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a differentiation root/leaf holding its own copy of `data`.
  Tensor leaf(Shape shape, std::vector<double> data);
  Tensor leaf(const Tensor& values);  // copies values of a constant

  int node_count() const { return static_cast<int>(nodes_.size()); }

  // introspection (structural assertions in tests)
  Op op_at(int node) const;
  std::vector<int> inputs_at(int node) const;
  Tensor tensor_at(int node);  // tape-attached view of an existing node

 private:
  friend Tensor record(Tape* tape, Op op, std::vector<int> inputs, Shape shape,
                       std::vector<double> value, std::shared_ptr<const std::vector<double>> mask,
                       std::vector<int> index, double lo, double hi);
  friend std::vector<Tensor> backward(const Tensor& root, std::span<const Tensor> wrt,
                                      bool create_graph);

  struct Node {
    Op op = Op::leaf;
    std::vector<int> inputs;
    Shape shape;
    std::shared_ptr<const std::vector<double>> value;
    // op-specific payload, saved at forward time
    std::shared_ptr<const std::vector<double>> mask;  // relu / clip subgradient mask
    std::vector<int> index;                           // index_select / scatter / slice offsets
    double lo = 0.0, hi = 0.0;                        // clip bounds; scatter size in index[...]
  };
  std::vector<Node> nodes_;
};

// --- primitives ------------------------------------------------------------
// Each op computes eagerly and records a node when any input is attached to a
// tape; pure-constant inputs yield a constant (nothing recorded).  Mixing
// tensors from two different tapes is a contract violation.  Every forward
// output is checked for NaN/Inf and throws NumericFault naming the op.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor exp(const Tensor& x);
Tensor log(const Tensor& x);
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor concat(std::span<const Tensor> xs);  // flattens inputs into one vector
Tensor index_select(const Tensor& x, std::vector<int> idx);
Tensor log_softmax(const Tensor& logits);
Tensor clip(const Tensor& x, double lo, double hi);
Tensor transpose(const Tensor& x);
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, int offset, int len);
// adjoint of index_select: zeros of length `size` with x accumulated at idx
Tensor scatter(const Tensor& x, std::vector<int> idx, int size);

Tensor neg(const Tensor& x);
Tensor detach(const Tensor& x);

// Reverse sweep from a scalar root.  Gradients arrive in the shape of each
// `wrt` entry; parameters the root does not depend on get explicit zeros.
// With create_graph the gradient entries are themselves tape nodes, so a
// second backward through them is valid.
std::vector<Tensor> backward(const Tensor& root, std::span<const Tensor> wrt, bool create_graph);

// --- finite-difference oracle ----------------------------------------------
// f builds a scalar from the given parameter tensors on the given tape; the
// checker runs it once for analytic gradients and 2·n_coords times for
// central differences.  Per-coordinate relative error is
// |analytic - fd| / max(1, |fd|); the max over coordinates is returned.
// f is evaluated twice up front; any bit-level mismatch means the oracle
// cannot be trusted and OracleInvalid is thrown.
using TapedFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

double finite_difference_check(const TapedFn& f, const std::vector<Tensor>& theta, double h);

// Same comparison rule against an externally supplied gradient (lets tests
// verify the checker itself catches wrong derivatives).
double finite_difference_error(const TapedFn& f, const std::vector<Tensor>& theta,
                               const std::vector<Tensor>& claimed_grads, double h);

double max_relative_error(std::span<const double> analytic, std::span<const double> reference);

}  // namespace metaexp::ad
