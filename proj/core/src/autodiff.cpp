#include "divgrpo/autodiff.hpp"

#include <cmath>
#include <utility>

namespace divgrpo::ad {

const Array& Value::val() const { return tape_->value_of(id_); }
const Array& Value::grad() const { return tape_->node(id_).grad; }

Value Tape::emplace(Array value, const char* op, std::vector<int> parents,
                    std::function<void(Tape&, std::vector<Array>&)> backprop) {
  Node n;
  n.grad = Array(value.rows(), value.cols());
  n.value = std::move(value);
  n.op = op;
  n.parents = std::move(parents);
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Value(this, static_cast<int>(nodes_.size()) - 1);
}

Value Tape::leaf(Array v) { return emplace(std::move(v), "leaf", {}, nullptr); }
Value Tape::constant(Array v) { return emplace(std::move(v), "const", {}, nullptr); }

void Tape::set_backprop(int id, std::function<void(Tape&, std::vector<Array>&)> fn) {
  nodes_[id].backprop = std::move(fn);
}

void Tape::backward(const Value& root) {
  if (root.tape() != this) throw ContractError("backward: root belongs to a different tape");
  if (!value_of(root.id()).is_scalar()) {
    throw ContractError("backward: root must be scalar (1x1)");
  }
  const int n = root.id() + 1;
  std::vector<Array> adj(n);
  for (int i = 0; i < n; ++i) adj[i] = Array(nodes_[i].value.rows(), nodes_[i].value.cols());
  adj[root.id()][0] = 1.0;
  for (int i = root.id(); i >= 0; --i) {
    if (nodes_[i].backprop) nodes_[i].backprop(*this, adj);
  }
  for (int i = 0; i < n; ++i) {
    auto g = nodes_[i].grad.flat();
    auto a = adj[i].flat();
    for (size_t k = 0; k < g.size(); ++k) g[k] += a[k];
  }
}

void Tape::zero_grad() {
  for (auto& n : nodes_) n.grad.fill(0.0);
}

namespace {

void check_same_tape(Value a, Value b, const char* op) {
  if (a.tape() != b.tape()) throw ContractError(std::string(op) + ": operands on different tapes");
}

enum class Broadcast { none, left_scalar, right_scalar };

Broadcast broadcast_mode(const Array& a, const Array& b, const char* op) {
  if (a.same_shape(b)) return Broadcast::none;
  if (a.is_scalar()) return Broadcast::left_scalar;
  if (b.is_scalar()) return Broadcast::right_scalar;
  throw ShapeError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                   std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                   std::to_string(b.cols()));
}

// Adds src into dst, summing when dst is the broadcast 1x1 side.
void add_reduced(Array& dst, const Array& src) {
  if (dst.is_scalar() && !src.is_scalar()) {
    double s = 0.0;
    for (double x : src.flat()) s += x;
    dst[0] += s;
  } else {
    for (int i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }
}

}  // namespace

#define DIVGRPO_BINARY_OP(NAME, FWD, DA, DB)                                                     \
  Value NAME(Value a, Value b) {                                                                 \
    check_same_tape(a, b, #NAME);                                                                \
    Tape& t = *a.tape();                                                                         \
    const Array& av = a.val();                                                                   \
    const Array& bv = b.val();                                                                   \
    const Broadcast mode = broadcast_mode(av, bv, #NAME);                                        \
    const Array& shape = (mode == Broadcast::left_scalar) ? bv : av;                             \
    Array out(shape.rows(), shape.cols());                                                       \
    for (int i = 0; i < out.size(); ++i) {                                                       \
      const double x = (mode == Broadcast::left_scalar) ? av[0] : av[i];                         \
      const double y = (mode == Broadcast::right_scalar) ? bv[0] : bv[i];                        \
      out[i] = (FWD);                                                                            \
    }                                                                                            \
    const int ia = a.id(), ib = b.id();                                                          \
    Value v = t.emplace(std::move(out), #NAME, {ia, ib}, nullptr);                               \
    const int self = v.id();                                                                     \
    t.grad_of(self); /* ensure allocated */                                                      \
    t.set_backprop(self, [ia, ib, self, mode](Tape& tp,                    \
                                                                    std::vector<Array>& adj) {   \
      const Array& av2 = tp.value_of(ia);                                                        \
      const Array& bv2 = tp.value_of(ib);                                                        \
      const Array& g = adj[self];                                                                \
      Array ga(av2.rows(), av2.cols());                                                          \
      Array gb(bv2.rows(), bv2.cols());                                                          \
      Array ga_full(g.rows(), g.cols());                                                         \
      Array gb_full(g.rows(), g.cols());                                                         \
      for (int i = 0; i < g.size(); ++i) {                                                       \
        const double x = (mode == Broadcast::left_scalar) ? av2[0] : av2[i];                     \
        const double y = (mode == Broadcast::right_scalar) ? bv2[0] : bv2[i];                    \
        (void)x;                                                                                 \
        (void)y;                                                                                 \
        ga_full[i] = g[i] * (DA);                                                                \
        gb_full[i] = g[i] * (DB);                                                                \
      }                                                                                          \
      if (mode == Broadcast::left_scalar) {                                                      \
        add_reduced(ga, ga_full);                                                                \
      } else {                                                                                   \
        ga = std::move(ga_full);                                                                 \
      }                                                                                          \
      if (mode == Broadcast::right_scalar) {                                                     \
        add_reduced(gb, gb_full);                                                                \
      } else {                                                                                   \
        gb = std::move(gb_full);                                                                 \
      }                                                                                          \
      add_reduced(adj[ia], ga);                                                                  \
      add_reduced(adj[ib], gb);                                                                  \
    });                                                                                           \
    return v;                                                                                    \
  }

DIVGRPO_BINARY_OP(add, x + y, 1.0, 1.0)
DIVGRPO_BINARY_OP(sub, x - y, 1.0, -1.0)
DIVGRPO_BINARY_OP(mul, x* y, y, x)

#undef DIVGRPO_BINARY_OP

Value div(Value a, Value b) {
  check_same_tape(a, b, "div");
  Tape& t = *a.tape();
  const Array& av = a.val();
  const Array& bv = b.val();
  const Broadcast mode = broadcast_mode(av, bv, "div");
  const Array& shape = (mode == Broadcast::left_scalar) ? bv : av;
  Array out(shape.rows(), shape.cols());
  for (int i = 0; i < out.size(); ++i) {
    const double x = (mode == Broadcast::left_scalar) ? av[0] : av[i];
    const double y = (mode == Broadcast::right_scalar) ? bv[0] : bv[i];
    if (y == 0.0) throw DomainError("div: zero denominator at index " + std::to_string(i));
    out[i] = x / y;
  }
  const int ia = a.id(), ib = b.id();
  Value v = t.emplace(std::move(out), "div", {ia, ib}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, ib, self, mode](Tape& tp,
                                                                  std::vector<Array>& adj) {
    const Array& av2 = tp.value_of(ia);
    const Array& bv2 = tp.value_of(ib);
    const Array& g = adj[self];
    Array ga_full(g.rows(), g.cols());
    Array gb_full(g.rows(), g.cols());
    for (int i = 0; i < g.size(); ++i) {
      const double x = (mode == Broadcast::left_scalar) ? av2[0] : av2[i];
      const double y = (mode == Broadcast::right_scalar) ? bv2[0] : bv2[i];
      ga_full[i] = g[i] / y;
      gb_full[i] = -g[i] * x / (y * y);
    }
    add_reduced(adj[ia], ga_full);
    add_reduced(adj[ib], gb_full);
  });
  return v;
}

namespace {

template <class F, class D>
Value unary(Value a, const char* op, F f, D dfdx) {
  Tape& t = *a.tape();
  const Array& av = a.val();
  Array out(av.rows(), av.cols());
  for (int i = 0; i < out.size(); ++i) out[i] = f(av[i], i);
  const int ia = a.id();
  Value v = t.emplace(std::move(out), op, {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self, dfdx](Tape& tp, std::vector<Array>& adj) {
    const Array& av2 = tp.value_of(ia);
    const Array& ov2 = tp.value_of(self);
    const Array& g = adj[self];
    for (int i = 0; i < g.size(); ++i) adj[ia][i] += g[i] * dfdx(av2[i], ov2[i]);
  });
  return v;
}

}  // namespace

Value neg(Value a) {
  return unary(
      a, "neg", [](double x, int) { return -x; }, [](double, double) { return -1.0; });
}

Value exp(Value a) {
  return unary(
      a, "exp", [](double x, int) { return std::exp(x); }, [](double, double o) { return o; });
}

Value log(Value a) {
  return unary(
      a, "log",
      [](double x, int i) {
        if (!(x > 0.0)) {
          throw DomainError("log: non-positive value " + std::to_string(x) + " at index " +
                            std::to_string(i));
        }
        return std::log(x);
      },
      [](double x, double) { return 1.0 / x; });
}

Value tanh(Value a) {
  return unary(
      a, "tanh", [](double x, int) { return std::tanh(x); },
      [](double, double o) { return 1.0 - o * o; });
}

Value clamp(Value a, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo > hi");
  return unary(
      a, "clamp", [lo, hi](double x, int) { return x < lo ? lo : (x > hi ? hi : x); },
      [lo, hi](double x, double) { return (x >= lo && x <= hi) ? 1.0 : 0.0; });
}

Value add_scalar(Value a, double s) {
  return unary(
      a, "add_scalar", [s](double x, int) { return x + s; }, [](double, double) { return 1.0; });
}

Value mul_scalar(Value a, double s) {
  return unary(
      a, "mul_scalar", [s](double x, int) { return x * s; }, [s](double, double) { return s; });
}

Value detach(Value a) { return a.tape()->constant(a.val()); }

Value matmul(Value a, Value b) {
  check_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  Array out = array_ops::matmul(a.val(), b.val());
  const int ia = a.id(), ib = b.id();
  Value v = t.emplace(std::move(out), "matmul", {ia, ib}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, ib, self](Tape& tp, std::vector<Array>& adj) {
    const Array& av = tp.value_of(ia);
    const Array& bv = tp.value_of(ib);
    const Array& g = adj[self];  // m x n
    // dA += g . B^T ; dB += A^T . g
    Array& ga = adj[ia];
    Array& gb = adj[ib];
    const int m = av.rows(), k = av.cols(), n = bv.cols();
    for (int i = 0; i < m; ++i) {
      for (int p = 0; p < k; ++p) {
        double s = 0.0;
        for (int j = 0; j < n; ++j) s += g(i, j) * bv(p, j);
        ga(i, p) += s;
      }
    }
    for (int p = 0; p < k; ++p) {
      for (int j = 0; j < n; ++j) {
        double s = 0.0;
        for (int i = 0; i < m; ++i) s += av(i, p) * g(i, j);
        gb(p, j) += s;
      }
    }
  });
  return v;
}

Value softmax_rows(Value a) {
  Tape& t = *a.tape();
  Array out = array_ops::softmax_rows(a.val());
  const int ia = a.id();
  Value v = t.emplace(std::move(out), "softmax_rows", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self](Tape& tp, std::vector<Array>& adj) {
    const Array& y = tp.value_of(self);
    const Array& g = adj[self];
    for (int r = 0; r < y.rows(); ++r) {
      double dot = 0.0;
      for (int c = 0; c < y.cols(); ++c) dot += g(r, c) * y(r, c);
      for (int c = 0; c < y.cols(); ++c) adj[ia](r, c) += y(r, c) * (g(r, c) - dot);
    }
  });
  return v;
}

Value log_softmax_rows(Value a) {
  Tape& t = *a.tape();
  Array out = array_ops::log_softmax_rows(a.val());
  const int ia = a.id();
  Value v = t.emplace(std::move(out), "log_softmax_rows", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self](Tape& tp, std::vector<Array>& adj) {
    const Array& y = tp.value_of(self);  // log-probs
    const Array& g = adj[self];
    for (int r = 0; r < y.rows(); ++r) {
      double gsum = 0.0;
      for (int c = 0; c < y.cols(); ++c) gsum += g(r, c);
      for (int c = 0; c < y.cols(); ++c) {
        adj[ia](r, c) += g(r, c) - std::exp(y(r, c)) * gsum;
      }
    }
  });
  return v;
}

Value take_rows(Value a, std::vector<int> rows) {
  Tape& t = *a.tape();
  const Array& av = a.val();
  for (int r : rows) {
    if (r < 0 || r >= av.rows()) throw ContractError("take_rows: index out of range");
  }
  Array out(static_cast<int>(rows.size()), av.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int c = 0; c < av.cols(); ++c) out(static_cast<int>(i), c) = av(rows[i], c);
  }
  const int ia = a.id();
  Value v = t.emplace(std::move(out), "take_rows", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self, rows = std::move(rows)](
                                                 Tape&, std::vector<Array>& adj) {
    const Array& g = adj[self];
    for (size_t i = 0; i < rows.size(); ++i) {
      for (int c = 0; c < g.cols(); ++c) adj[ia](rows[i], c) += g(static_cast<int>(i), c);
    }
  });
  return v;
}

Value gather_cols(Value a, std::vector<int> cols) {
  Tape& t = *a.tape();
  const Array& av = a.val();
  if (static_cast<int>(cols.size()) != av.rows()) {
    throw ShapeError("gather_cols: need one column index per row");
  }
  for (int c : cols) {
    if (c < 0 || c >= av.cols()) throw ContractError("gather_cols: index out of range");
  }
  Array out(av.rows(), 1);
  for (int r = 0; r < av.rows(); ++r) out(r, 0) = av(r, cols[r]);
  const int ia = a.id();
  Value v = t.emplace(std::move(out), "gather_cols", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self, cols = std::move(cols)](
                                                 Tape&, std::vector<Array>& adj) {
    const Array& g = adj[self];
    for (int r = 0; r < g.rows(); ++r) adj[ia](r, cols[r]) += g(r, 0);
  });
  return v;
}

Value sum(Value a) {
  Tape& t = *a.tape();
  double s = 0.0;
  for (double x : a.val().flat()) s += x;
  const int ia = a.id();
  Value v = t.emplace(Array::scalar(s), "sum", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self](Tape& tp, std::vector<Array>& adj) {
    const double g = adj[self][0];
    (void)tp;
    for (int i = 0; i < adj[ia].size(); ++i) adj[ia][i] += g;
  });
  return v;
}

Value mean(Value a) {
  Tape& t = *a.tape();
  const int n = a.val().size();
  if (n == 0) throw ContractError("mean: empty array");
  double s = 0.0;
  for (double x : a.val().flat()) s += x;
  const int ia = a.id();
  Value v = t.emplace(Array::scalar(s / n), "mean", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self, n](Tape& tp, std::vector<Array>& adj) {
    (void)tp;
    const double g = adj[self][0] / n;
    for (int i = 0; i < adj[ia].size(); ++i) adj[ia][i] += g;
  });
  return v;
}

namespace {

// Elementwise min/max. Ties route the gradient to `a`.
Value extremum(Value a, Value b, const char* op, bool take_max) {
  check_same_tape(a, b, op);
  Tape& t = *a.tape();
  const Array& av = a.val();
  const Array& bv = b.val();
  const Broadcast mode = broadcast_mode(av, bv, op);
  const Array& shape = (mode == Broadcast::left_scalar) ? bv : av;
  Array out(shape.rows(), shape.cols());
  for (int i = 0; i < out.size(); ++i) {
    const double x = (mode == Broadcast::left_scalar) ? av[0] : av[i];
    const double y = (mode == Broadcast::right_scalar) ? bv[0] : bv[i];
    out[i] = take_max ? (y > x ? y : x) : (y < x ? y : x);
  }
  const int ia = a.id(), ib = b.id();
  Value v = t.emplace(std::move(out), op, {ia, ib}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, ib, self, mode, take_max](
                                                 Tape& tp, std::vector<Array>& adj) {
    const Array& av2 = tp.value_of(ia);
    const Array& bv2 = tp.value_of(ib);
    const Array& g = adj[self];
    Array ga_full(g.rows(), g.cols());
    Array gb_full(g.rows(), g.cols());
    for (int i = 0; i < g.size(); ++i) {
      const double x = (mode == Broadcast::left_scalar) ? av2[0] : av2[i];
      const double y = (mode == Broadcast::right_scalar) ? bv2[0] : bv2[i];
      const bool b_wins = take_max ? (y > x) : (y < x);
      ga_full[i] = b_wins ? 0.0 : g[i];
      gb_full[i] = b_wins ? g[i] : 0.0;
    }
    add_reduced(adj[ia], ga_full);
    add_reduced(adj[ib], gb_full);
  });
  return v;
}

}  // namespace

Value maximum(Value a, Value b) { return extremum(a, b, "maximum", true); }
Value minimum(Value a, Value b) { return extremum(a, b, "minimum", false); }

Value reshape(Value a, int rows, int cols) {
  Tape& t = *a.tape();
  const Array& av = a.val();
  if (rows * cols != av.size()) throw ShapeError("reshape: element count mismatch");
  Array out(rows, cols);
  for (int i = 0; i < av.size(); ++i) out[i] = av[i];
  const int ia = a.id();
  Value v = t.emplace(std::move(out), "reshape", {ia}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, self](Tape& tp, std::vector<Array>& adj) {
    (void)tp;
    for (int i = 0; i < adj[self].size(); ++i) adj[ia][i] += adj[self][i];
  });
  return v;
}

Value add_rowvec(Value a, Value b) {
  check_same_tape(a, b, "add_rowvec");
  Tape& t = *a.tape();
  const Array& av = a.val();
  const Array& bv = b.val();
  if (bv.rows() != 1 || bv.cols() != av.cols()) {
    throw ShapeError("add_rowvec: expected 1x" + std::to_string(av.cols()) + " row vector");
  }
  Array out(av.rows(), av.cols());
  for (int r = 0; r < av.rows(); ++r) {
    for (int c = 0; c < av.cols(); ++c) out(r, c) = av(r, c) + bv(0, c);
  }
  const int ia = a.id(), ib = b.id();
  Value v = t.emplace(std::move(out), "add_rowvec", {ia, ib}, nullptr);
  const int self = v.id();
  t.set_backprop(self, [ia, ib, self](Tape& tp, std::vector<Array>& adj) {
    (void)tp;
    const Array& g = adj[self];
    for (int r = 0; r < g.rows(); ++r) {
      for (int c = 0; c < g.cols(); ++c) {
        adj[ia](r, c) += g(r, c);
        adj[ib](0, c) += g(r, c);
      }
    }
  });
  return v;
}

double finite_difference_check(const ScalarFn& f, const std::vector<Array*>& params, double eps) {
  if (!(eps > 0.0)) throw ContractError("finite_difference_check: eps must be > 0");

  auto evaluate = [&]() {
    Tape t;
    std::vector<Value> leaves;
    leaves.reserve(params.size());
    for (Array* p : params) leaves.push_back(t.leaf(*p));
    Value root = f(t, leaves);
    if (!root.val().is_scalar()) {
      throw ContractError("finite_difference_check: f must return a scalar");
    }
    const double y = root.item();
    if (!std::isfinite(y)) throw NumericError("finite_difference_check: non-finite objective");
    return std::make_pair(y, std::move(leaves));
  };

  // Analytic pass.
  std::vector<std::vector<double>> analytic;
  {
    Tape t;
    std::vector<Value> leaves;
    for (Array* p : params) leaves.push_back(t.leaf(*p));
    Value root = f(t, leaves);
    if (!root.val().is_scalar()) {
      throw ContractError("finite_difference_check: f must return a scalar");
    }
    if (!std::isfinite(root.item())) {
      throw NumericError("finite_difference_check: non-finite objective");
    }
    t.backward(root);
    for (const Value& leaf : leaves) {
      const Array& g = leaf.grad();
      analytic.emplace_back(g.flat().begin(), g.flat().end());
    }
  }

  double max_rel = 0.0;
  for (size_t p = 0; p < params.size(); ++p) {
    Array& arr = *params[p];
    for (int i = 0; i < arr.size(); ++i) {
      const double saved = arr[i];
      arr[i] = saved + eps;
      const double fp = evaluate().first;
      arr[i] = saved - eps;
      const double fm = evaluate().first;
      arr[i] = saved;
      const double central = (fp - fm) / (2.0 * eps);
      const double a = analytic[p][i];
      const double rel = std::abs(a - central) / (std::abs(a) + std::abs(central) + 1e-12);
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace divgrpo::ad
