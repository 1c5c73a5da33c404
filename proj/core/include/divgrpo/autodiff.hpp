#pragma once

#include <deque>
#include <functional>
#include <string>
#include <vector>

#include "divgrpo/array.hpp"

namespace divgrpo::ad {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid as long as the tape lives.
class Value {
 public:
  Value() = default;
  const Array& val() const;
  const Array& grad() const;
  int rows() const { return val().rows(); }
  int cols() const { return val().cols(); }
  double item() const { return val().item(); }
  bool valid() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int id() const { return id_; }

 private:
  friend class Tape;
  Value(Tape* t, int id) : tape_(t), id_(id) {}
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// One record of the computation: value, accumulated gradient, producing op,
// parent links, and the closure that pushes adjoints to the parents.
struct Node {
  Array value;
  Array grad;  // same shape as value; accumulated across backward calls
  const char* op = "leaf";
  std::vector<int> parents;
  // Distributes adj[self] into adj[parent...]. Empty for leaves/constants.
  std::function<void(Tape&, std::vector<Array>&)> backprop;
};

// Reverse-mode tape over dense double arrays. Nodes are appended in creation
// order, which is a topological order by construction. Single-threaded;
// independent tapes may run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Differentiable input node.
  Value leaf(Array v);
  // Node that never receives gradient flow (recorded inputs, detached data).
  Value constant(Array v);
  Value constant_scalar(double v) { return constant(Array::scalar(v)); }

  // Accumulates d(root)/d(node) into every node's grad. Each call computes the
  // full derivative afresh and adds it: calling twice without zero_grad in
  // between exactly doubles the grads. root must be 1x1.
  void backward(const Value& root);

  void zero_grad();

  size_t size() const { return nodes_.size(); }
  const Node& node(int id) const { return nodes_[id]; }

  const Array& value_of(int id) const { return nodes_[id].value; }
  Array& grad_of(int id) { return nodes_[id].grad; }

  Value emplace(Array value, const char* op, std::vector<int> parents,
                std::function<void(Tape&, std::vector<Array>&)> backprop);
  // Ops that need their own id in the closure install it after emplace.
  void set_backprop(int id, std::function<void(Tape&, std::vector<Array>&)> fn);

 private:
  std::deque<Node> nodes_;
};

// ---- op set ---------------------------------------------------------------
// Elementwise ops accept equal shapes or a 1x1 operand broadcast against the
// other side (scalar-vs-array only; no general broadcasting).

Value add(Value a, Value b);
Value sub(Value a, Value b);
Value mul(Value a, Value b);
Value div(Value a, Value b);
Value neg(Value a);
Value exp(Value a);
Value log(Value a);  // DomainError with the offending flat index if any x <= 0
Value tanh(Value a);
Value matmul(Value a, Value b);
Value softmax_rows(Value a);
Value log_softmax_rows(Value a);
// Row index-select: out[i,:] = a[rows[i],:]. Gradient scatter-adds, so
// repeated indices accumulate.
Value take_rows(Value a, std::vector<int> rows);
// Per-row column gather: out[i,0] = a[i, cols[i]].
Value gather_cols(Value a, std::vector<int> cols);
Value sum(Value a);
Value mean(Value a);
Value clamp(Value a, double lo, double hi);
Value maximum(Value a, Value b);
Value minimum(Value a, Value b);
// Stop-gradient: value flows, gradient does not.
Value detach(Value a);
Value reshape(Value a, int rows, int cols);
// a (n x m) + b (1 x m), broadcast over rows.
Value add_rowvec(Value a, Value b);

Value add_scalar(Value a, double s);
Value mul_scalar(Value a, double s);

inline Value operator+(Value a, Value b) { return add(a, b); }
inline Value operator-(Value a, Value b) { return sub(a, b); }
inline Value operator*(Value a, Value b) { return mul(a, b); }
inline Value operator/(Value a, Value b) { return div(a, b); }
inline Value operator-(Value a) { return neg(a); }
inline Value operator+(Value a, double s) { return add_scalar(a, s); }
inline Value operator*(Value a, double s) { return mul_scalar(a, s); }
inline Value operator*(double s, Value a) { return mul_scalar(a, s); }

// ---- gradient verification -------------------------------------------------

// Builds the scalar under test on a fresh tape from leaves bound to `params`
// (same order). Must be deterministic for fixed parameter values.
using ScalarFn = std::function<Value(Tape&, const std::vector<Value>&)>;

// Max over parameter elements of |analytic - central difference| /
// (|analytic| + |central| + 1e-12). Restores params on exit.
double finite_difference_check(const ScalarFn& f, const std::vector<Array*>& params, double eps);

}  // namespace divgrpo::ad
