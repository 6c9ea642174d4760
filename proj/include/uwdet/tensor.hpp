#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// Every operation that consumes tensors produces a new node holding the
// result value plus a backward rule; backward(root) linearizes the node
// graph into a ComputationTape and replays it in reverse, accumulating
// (+=) gradients into every node that requires them. Gradients persist
// until zero_grad(), so calling backward twice doubles them.
//
// Values are always finite: any op that would store NaN/Inf throws
// NumericError instead. div and log carry 1e-12 floors so downstream
// losses stay finite on degenerate predictions.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "uwdet/errors.hpp"

namespace uwdet {

inline constexpr double kEps = 1e-12;

inline std::size_t numel_of(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<std::size_t>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    s += std::to_string(shape[i]);
    if (i + 1 < shape.size()) s += "x";
  }
  return s + "]";
}

struct TensorNode {
  using BackwardFn =
      std::function<void(const std::vector<double>& gout,
                         const std::vector<std::vector<double>*>& gin)>;

  std::uint64_t id = 0;
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // same length as value once populated
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<TensorNode>> inputs;
  BackwardFn backward;

  std::size_t numel() const { return value.size(); }
};

namespace detail {
inline std::uint64_t next_node_id() {
  static std::uint64_t counter = 0;
  return ++counter;
}

inline void ensure_finite(const std::vector<double>& v, const char* op) {
  for (double x : v) {
    if (!std::isfinite(x)) {
      throw NumericError(std::string("non-finite value produced by '") + op + "'");
    }
  }
}
}  // namespace detail

class Tensor {
public:
  Tensor() = default;

  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false) {
    if (numel_of(shape) != data.size()) {
      throw ShapeError("Tensor: data length " + std::to_string(data.size()) +
                       " does not match shape " + shape_str(shape));
    }
    detail::ensure_finite(data, "leaf");
    auto n = std::make_shared<TensorNode>();
    n->id = detail::next_node_id();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false) {
    std::vector<double> d(numel_of(shape), 0.0);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false) {
    std::vector<double> d(numel_of(shape), v);
    return from_data(std::move(shape), std::move(d), requires_grad);
  }

  static Tensor scalar(double v, bool requires_grad = false) {
    return from_data({1}, {v}, requires_grad);
  }

  bool defined() const { return node_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return node_->shape; }
  std::size_t ndim() const { return node_->shape.size(); }
  std::size_t dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }
  const char* op() const { return node_->op; }
  std::uint64_t id() const { return node_->id; }

  const std::vector<double>& value() const { return node_->value; }

  // Mutating a tensor that still participates in a live tape invalidates
  // that tape; optimizers call this between batches only.
  std::vector<double>& mutable_value() { return node_->value; }

  double item() const {
    if (numel() != 1) throw ContractError("Tensor::item: tensor is not scalar");
    return node_->value[0];
  }
  double at(std::size_t i) const { return node_->value.at(i); }
  double at(std::size_t r, std::size_t c) const {
    if (ndim() != 2) throw ContractError("Tensor::at(r,c): tensor is not 2-D");
    if (r >= dim(0) || c >= dim(1)) throw IndexError("Tensor::at: index out of range");
    return node_->value[r * dim(1) + c];
  }

  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<double>& grad() const {
    if (node_->grad.empty()) throw ContractError("Tensor::grad: no gradient populated");
    return node_->grad;
  }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  // Value copy detached from the autodiff graph.
  Tensor detach() const { return from_data(node_->shape, node_->value, false); }

  TensorNode* node() const { return node_.get(); }
  const std::shared_ptr<TensorNode>& node_ptr() const { return node_; }

private:
  explicit Tensor(std::shared_ptr<TensorNode> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode> node_;

  friend Tensor make_op(const char* name, std::vector<std::size_t> shape,
                        std::vector<double> value, std::vector<Tensor> inputs,
                        TensorNode::BackwardFn fn);
};

inline Tensor make_op(const char* name, std::vector<std::size_t> shape,
                      std::vector<double> value, std::vector<Tensor> inputs,
                      TensorNode::BackwardFn fn) {
  if (numel_of(shape) != value.size()) {
    throw ShapeError(std::string("op '") + name + "': output buffer does not match shape");
  }
  detail::ensure_finite(value, name);
  auto n = std::make_shared<TensorNode>();
  n->id = detail::next_node_id();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->op = name;
  bool rg = false;
  n->inputs.reserve(inputs.size());
  for (const auto& t : inputs) {
    rg = rg || t.requires_grad();
    n->inputs.push_back(t.node_ptr());
  }
  n->requires_grad = rg;
  if (rg) n->backward = std::move(fn);
  return Tensor(std::move(n));
}

// ---------------------------------------------------------------------------
// ComputationTape: the node graph under a root, linearized topologically.
// backward() replays records in reverse exactly once each.
// ---------------------------------------------------------------------------

class ComputationTape {
public:
  struct Record {
    const char* op;
    std::vector<std::uint64_t> input_ids;
    std::uint64_t output_id;
  };

  // Collects the requires-grad subgraph below root in topological order
  // (every record's inputs precede it).
  static ComputationTape trace(const Tensor& root) {
    ComputationTape tape;
    if (!root.defined() || !root.node()->requires_grad) return tape;
    std::unordered_map<TensorNode*, int> state;  // 0 unseen, 1 open, 2 done
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.node(), 0);
    state[root.node()] = 1;
    while (!stack.empty()) {
      auto& [node, next_input] = stack.back();
      if (next_input < node->inputs.size()) {
        TensorNode* child = node->inputs[next_input++].get();
        if (!child->requires_grad) continue;  // constant subtree
        int& st = state[child];
        if (st == 0) {
          st = 1;
          stack.emplace_back(child, 0);
        }
      } else {
        state[node] = 2;
        tape.index_[node] = tape.nodes_.size();
        tape.nodes_.push_back(node);
        stack.pop_back();
      }
    }
    return tape;
  }

  std::size_t size() const { return nodes_.size(); }

  std::vector<Record> records() const {
    std::vector<Record> out;
    out.reserve(nodes_.size());
    for (TensorNode* n : nodes_) {
      Record r;
      r.op = n->op;
      r.output_id = n->id;
      for (const auto& in : n->inputs) r.input_ids.push_back(in->id);
      out.push_back(std::move(r));
    }
    return out;
  }

  // Reverse replay: seeds the root with 1 and accumulates (+=) into the
  // persistent grad buffer of every requires-grad node. Returns the number
  // of records visited (each exactly once).
  std::size_t run_backward() {
    if (nodes_.empty()) return 0;
    std::vector<std::vector<double>> scratch(nodes_.size());
    scratch.back().assign(1, 1.0);  // root is last in topological order
    std::size_t visited = 0;
    std::vector<std::vector<double>*> gin;
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      TensorNode* node = nodes_[i];
      std::vector<double>& g = scratch[i];
      if (g.empty()) continue;  // unreachable along grad paths
      ++visited;
      if (node->grad.empty()) node->grad.assign(node->numel(), 0.0);
      for (std::size_t k = 0; k < g.size(); ++k) node->grad[k] += g[k];
      if (node->backward) {
        gin.clear();
        for (const auto& in : node->inputs) {
          TensorNode* child = in.get();
          if (!child->requires_grad) {
            gin.push_back(nullptr);
            continue;
          }
          std::size_t ci = index_.at(child);
          if (scratch[ci].empty()) scratch[ci].assign(child->numel(), 0.0);
          gin.push_back(&scratch[ci]);
        }
        node->backward(g, gin);
      }
      if (i + 1 < nodes_.size()) g.clear();  // free as we go; keep root's for inspection
    }
    return visited;
  }

private:
  std::vector<TensorNode*> nodes_;
  std::unordered_map<TensorNode*, std::size_t> index_;
};

inline void backward(const Tensor& root) {
  if (!root.defined()) throw ContractError("backward: undefined tensor");
  if (root.numel() != 1) {
    throw ContractError("backward: root must be scalar, got shape " + shape_str(root.shape()));
  }
  ComputationTape::trace(root).run_backward();
}

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

namespace detail {
inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.ndim() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " + shape_str(t.shape()));
  }
}

inline void require_vector(const Tensor& t, const char* op) {
  if (t.ndim() != 1) {
    throw ShapeError(std::string(op) + ": expected a vector, got " + shape_str(t.shape()));
  }
}

// Sign-preserving magnitude floor used by div-like ops.
inline double floored(double d) {
  if (d >= 0.0) return d < kEps ? kEps : d;
  return d > -kEps ? -kEps : d;
}

template <typename Fwd, typename Dfn>
Tensor unary_elementwise(const char* name, const Tensor& x, Fwd f, Dfn df) {
  std::vector<double> out(x.numel());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
  TensorNode* xn = x.node();
  return make_op(name, x.shape(), std::move(out), {x},
                 [xn, df](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   auto& gx = *gin[0];
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     gx[i] += g[i] * df(xn->value[i]);
                   }
                 });
}
}  // namespace detail

// --- binary elementwise -----------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op("add", a.shape(), std::move(out), {a, b},
                 [](const std::vector<double>& g, const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (gin[0]) (*gin[0])[i] += g[i];
                     if (gin[1]) (*gin[1])[i] += g[i];
                   }
                 });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op("sub", a.shape(), std::move(out), {a, b},
                 [](const std::vector<double>& g, const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (gin[0]) (*gin[0])[i] += g[i];
                     if (gin[1]) (*gin[1])[i] -= g[i];
                   }
                 });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return make_op("mul", a.shape(), std::move(out), {a, b},
                 [an, bn](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (gin[0]) (*gin[0])[i] += g[i] * bn->value[i];
                     if (gin[1]) (*gin[1])[i] += g[i] * an->value[i];
                   }
                 });
}

// Denominator magnitude is floored at 1e-12 (sign preserved); inside the
// floor the quotient is locally constant in b, so its b-gradient is zero.
inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "div");
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a.value()[i] / detail::floored(b.value()[i]);
  }
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return make_op("div", a.shape(), std::move(out), {a, b},
                 [an, bn](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     const double d = detail::floored(bn->value[i]);
                     if (gin[0]) (*gin[0])[i] += g[i] / d;
                     if (gin[1] && std::abs(bn->value[i]) >= kEps) {
                       (*gin[1])[i] -= g[i] * an->value[i] / (d * d);
                     }
                   }
                 });
}

// --- unary elementwise -------------------------------------------------------

inline Tensor exp(const Tensor& x) {
  return detail::unary_elementwise(
      "exp", x, [](double v) { return std::exp(v); },
      [](double v) { return std::exp(v); });
}

// Input clamped to [1e-12, inf) before the log; below the clamp the output
// is locally constant, so the gradient there is zero.
inline Tensor log(const Tensor& x) {
  return detail::unary_elementwise(
      "log", x, [](double v) { return std::log(v < kEps ? kEps : v); },
      [](double v) { return v < kEps ? 0.0 : 1.0 / v; });
}

inline Tensor sqrt(const Tensor& x) {
  return detail::unary_elementwise(
      "sqrt", x, [](double v) { return std::sqrt(v); },
      [](double v) {
        const double r = std::sqrt(v);
        return r > 0.0 ? 0.5 / r : 0.0;
      });
}

inline Tensor relu(const Tensor& x) {
  return detail::unary_elementwise(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_scalar(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary_elementwise(
      "sigmoid", x, [](double v) { return sigmoid_scalar(v); },
      [](double v) {
        const double s = sigmoid_scalar(v);
        return s * (1.0 - s);
      });
}

inline Tensor abs(const Tensor& x) {
  return detail::unary_elementwise(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) throw ContractError("clamp: lo must not exceed hi");
  return detail::unary_elementwise(
      "clamp", x, [lo, hi](double v) { return v < lo ? lo : (v > hi ? hi : v); },
      [lo, hi](double v) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

inline Tensor clamp_min(const Tensor& x, double lo) {
  return detail::unary_elementwise(
      "clamp_min", x, [lo](double v) { return v < lo ? lo : v; },
      [lo](double v) { return v > lo ? 1.0 : 0.0; });
}

// --- scalar broadcast ---------------------------------------------------------

inline Tensor add_scalar(const Tensor& x, double c) {
  return detail::unary_elementwise(
      "add_scalar", x, [c](double v) { return v + c; }, [](double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& x, double c) {
  return detail::unary_elementwise(
      "mul_scalar", x, [c](double v) { return v * c; }, [c](double) { return c; });
}

inline Tensor sub_from_scalar(double c, const Tensor& x) {
  return detail::unary_elementwise(
      "sub_from_scalar", x, [c](double v) { return c - v; }, [](double) { return -1.0; });
}

// out = x * s where s is a 1-element tensor (differentiable in both).
inline Tensor scale(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) throw ShapeError("scale: scale factor must be a 1-element tensor");
  const double sv = s.value()[0];
  std::vector<double> out(x.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x.value()[i] * sv;
  TensorNode* xn = x.node();
  return make_op("scale", x.shape(), std::move(out), {x, s},
                 [xn, sv](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gin) {
                   double gs = 0.0;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     if (gin[0]) (*gin[0])[i] += g[i] * sv;
                     gs += g[i] * xn->value[i];
                   }
                   if (gin[1]) (*gin[1])[0] += gs;
                 });
}

// --- reductions ----------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  return make_op("sum", {1}, {acc}, {x},
                 [](const std::vector<double>& g, const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (double& gi : *gin[0]) gi += g[0];
                 });
}

inline Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ShapeError("mean: empty tensor");
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  const double inv = 1.0 / static_cast<double>(x.numel());
  return make_op("mean", {1}, {acc * inv}, {x},
                 [inv](const std::vector<double>& g,
                       const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (double& gi : *gin[0]) gi += g[0] * inv;
                 });
}

inline Tensor l2norm(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.value()) acc += v * v;
  const double nrm = std::sqrt(acc);
  TensorNode* xn = x.node();
  return make_op("l2norm", {1}, {nrm}, {x},
                 [xn, nrm](const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   const double d = nrm < kEps ? kEps : nrm;
                   for (std::size_t i = 0; i < xn->value.size(); ++i) {
                     (*gin[0])[i] += g[0] * xn->value[i] / d;
                   }
                 });
}

// Per-row sums of an N x F matrix -> vector of length N.
inline Tensor row_sum(const Tensor& x) {
  detail::require_matrix(x, "row_sum");
  const std::size_t n = x.dim(0), f = x.dim(1);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) out[r] += x.value()[r * f + c];
  }
  return make_op("row_sum", {n}, std::move(out), {x},
                 [n, f](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t r = 0; r < n; ++r) {
                     for (std::size_t c = 0; c < f; ++c) (*gin[0])[r * f + c] += g[r];
                   }
                 });
}

// Per-row Euclidean norms of an N x F matrix -> vector of length N.
inline Tensor row_l2norm(const Tensor& x) {
  detail::require_matrix(x, "row_l2norm");
  const std::size_t n = x.dim(0), f = x.dim(1);
  std::vector<double> out(n, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < f; ++c) {
      const double v = x.value()[r * f + c];
      acc += v * v;
    }
    out[r] = std::sqrt(acc);
  }
  TensorNode* xn = x.node();
  std::vector<double> norms = out;
  return make_op("row_l2norm", {n}, std::move(out), {x},
                 [xn, n, f, norms](const std::vector<double>& g,
                                   const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t r = 0; r < n; ++r) {
                     const double d = norms[r] < kEps ? kEps : norms[r];
                     for (std::size_t c = 0; c < f; ++c) {
                       (*gin[0])[r * f + c] += g[r] * xn->value[r * f + c] / d;
                     }
                   }
                 });
}

// Per-column max of |x| over rows -> vector of length F. Gradient routes to
// the first attaining row, signed.
inline Tensor col_max_abs(const Tensor& x) {
  detail::require_matrix(x, "col_max_abs");
  const std::size_t n = x.dim(0), f = x.dim(1);
  std::vector<double> out(f, 0.0);
  std::vector<std::size_t> arg(f, 0);
  for (std::size_t c = 0; c < f; ++c) {
    double best = -1.0;
    for (std::size_t r = 0; r < n; ++r) {
      const double v = std::abs(x.value()[r * f + c]);
      if (v > best) {
        best = v;
        arg[c] = r;
      }
    }
    out[c] = best;
  }
  TensorNode* xn = x.node();
  return make_op("col_max_abs", {f}, std::move(out), {x},
                 [xn, f, arg](const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t c = 0; c < f; ++c) {
                     const double v = xn->value[arg[c] * f + c];
                     const double s = v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
                     (*gin[0])[arg[c] * f + c] += g[c] * s;
                   }
                 });
}

// --- linear algebra -------------------------------------------------------------

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), k2 = b.dim(0), n = b.dim(1);
  if (k != k2) {
    throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  std::vector<double> out(m * n, 0.0);
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += aip * bv[p * n + j];
    }
  }
  TensorNode* an = a.node();
  TensorNode* bn = b.node();
  return make_op("matmul", {m, n}, std::move(out), {a, b},
                 [an, bn, m, k, n](const std::vector<double>& g,
                                   const std::vector<std::vector<double>*>& gin) {
                   if (gin[0]) {  // gA += g . B^T
                     auto& ga = *gin[0];
                     for (std::size_t i = 0; i < m; ++i) {
                       for (std::size_t p = 0; p < k; ++p) {
                         double acc = 0.0;
                         for (std::size_t j = 0; j < n; ++j) {
                           acc += g[i * n + j] * bn->value[p * n + j];
                         }
                         ga[i * k + p] += acc;
                       }
                     }
                   }
                   if (gin[1]) {  // gB += A^T . g
                     auto& gb = *gin[1];
                     for (std::size_t p = 0; p < k; ++p) {
                       for (std::size_t j = 0; j < n; ++j) {
                         double acc = 0.0;
                         for (std::size_t i = 0; i < m; ++i) {
                           acc += an->value[i * k + p] * g[i * n + j];
                         }
                         gb[p * n + j] += acc;
                       }
                     }
                   }
                 });
}

inline Tensor transpose(const Tensor& a) {
  detail::require_matrix(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.value()[i * n + j];
  }
  return make_op("transpose", {n, m}, std::move(out), {a},
                 [m, n](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t i = 0; i < m; ++i) {
                     for (std::size_t j = 0; j < n; ++j) (*gin[0])[i * n + j] += g[j * m + i];
                   }
                 });
}

// --- softmax ---------------------------------------------------------------------

// Vector softmax with max subtraction; adding a constant to all logits
// leaves the output bit-identical whenever the additions are exact.
inline Tensor softmax(const Tensor& x) {
  detail::require_vector(x, "softmax");
  const std::size_t n = x.numel();
  if (n == 0) throw ShapeError("softmax: empty input");
  double mx = x.value()[0];
  for (double v : x.value()) mx = std::max(mx, v);
  std::vector<double> out(n);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = std::exp(x.value()[i] - mx);
    z += out[i];
  }
  for (std::size_t i = 0; i < n; ++i) out[i] /= z;
  std::vector<double> sv = out;
  return make_op("softmax", {n}, std::move(out), {x},
                 [sv](const std::vector<double>& g,
                      const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   double dot = 0.0;
                   for (std::size_t i = 0; i < sv.size(); ++i) dot += g[i] * sv[i];
                   for (std::size_t i = 0; i < sv.size(); ++i) {
                     (*gin[0])[i] += sv[i] * (g[i] - dot);
                   }
                 });
}

// --- concatenation ----------------------------------------------------------------

// Vectors: [a | b]. Matrices with equal row counts: column-wise [A | B].
inline Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.ndim() == 1 && b.ndim() == 1) {
    const std::size_t n = a.numel(), m = b.numel();
    std::vector<double> out;
    out.reserve(n + m);
    out.insert(out.end(), a.value().begin(), a.value().end());
    out.insert(out.end(), b.value().begin(), b.value().end());
    return make_op("concat", {n + m}, std::move(out), {a, b},
                   [n, m](const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gin) {
                     if (gin[0]) {
                       for (std::size_t i = 0; i < n; ++i) (*gin[0])[i] += g[i];
                     }
                     if (gin[1]) {
                       for (std::size_t i = 0; i < m; ++i) (*gin[1])[i] += g[n + i];
                     }
                   });
  }
  if (a.ndim() == 2 && b.ndim() == 2) {
    if (a.dim(0) != b.dim(0)) {
      throw ShapeError("concat: row counts differ, " + shape_str(a.shape()) + " vs " +
                       shape_str(b.shape()));
    }
    const std::size_t r = a.dim(0), fa = a.dim(1), fb = b.dim(1);
    std::vector<double> out(r * (fa + fb));
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t c = 0; c < fa; ++c) out[i * (fa + fb) + c] = a.value()[i * fa + c];
      for (std::size_t c = 0; c < fb; ++c) out[i * (fa + fb) + fa + c] = b.value()[i * fb + c];
    }
    return make_op("concat", {r, fa + fb}, std::move(out), {a, b},
                   [r, fa, fb](const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& gin) {
                     for (std::size_t i = 0; i < r; ++i) {
                       if (gin[0]) {
                         for (std::size_t c = 0; c < fa; ++c) {
                           (*gin[0])[i * fa + c] += g[i * (fa + fb) + c];
                         }
                       }
                       if (gin[1]) {
                         for (std::size_t c = 0; c < fb; ++c) {
                           (*gin[1])[i * fb + c] += g[i * (fa + fb) + fa + c];
                         }
                       }
                     }
                   });
  }
  throw ShapeError("concat: operands must both be vectors or both matrices");
}

// --- row gather / scatter ops --------------------------------------------------------

inline Tensor gather_rows(const Tensor& x, std::vector<std::size_t> idx) {
  detail::require_matrix(x, "gather_rows");
  const std::size_t n = x.dim(0), f = x.dim(1), m = idx.size();
  for (std::size_t i : idx) {
    if (i >= n) throw IndexError("gather_rows: row index out of range");
  }
  std::vector<double> out(m * f);
  for (std::size_t e = 0; e < m; ++e) {
    for (std::size_t c = 0; c < f; ++c) out[e * f + c] = x.value()[idx[e] * f + c];
  }
  return make_op("gather_rows", {m, f}, std::move(out), {x},
                 [idx = std::move(idx), f](const std::vector<double>& g,
                                           const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t e = 0; e < idx.size(); ++e) {
                     for (std::size_t c = 0; c < f; ++c) {
                       (*gin[0])[idx[e] * f + c] += g[e * f + c];
                     }
                   }
                 });
}

// Per-node reductions over explicit neighbor lists. Row v of the output is
// the reduction of the listed rows of x; lists must be nonempty. The mean
// accumulates in list order and divides by the list length, so with lists =
// full sorted neighborhoods it reproduces a no-sampling reference bitwise.

inline Tensor neighbor_mean(const Tensor& x, std::vector<std::vector<std::size_t>> lists) {
  detail::require_matrix(x, "neighbor_mean");
  const std::size_t n = lists.size(), f = x.dim(1);
  std::vector<double> out(n * f, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    if (lists[v].empty()) throw ContractError("neighbor_mean: empty neighbor list");
    for (std::size_t u : lists[v]) {
      if (u >= x.dim(0)) throw IndexError("neighbor_mean: row index out of range");
      for (std::size_t c = 0; c < f; ++c) out[v * f + c] += x.value()[u * f + c];
    }
    const double inv = 1.0 / static_cast<double>(lists[v].size());
    for (std::size_t c = 0; c < f; ++c) out[v * f + c] *= inv;
  }
  return make_op("neighbor_mean", {n, f}, std::move(out), {x},
                 [lists = std::move(lists), f](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t v = 0; v < lists.size(); ++v) {
                     const double inv = 1.0 / static_cast<double>(lists[v].size());
                     for (std::size_t u : lists[v]) {
                       for (std::size_t c = 0; c < f; ++c) {
                         (*gin[0])[u * f + c] += g[v * f + c] * inv;
                       }
                     }
                   }
                 });
}

inline Tensor neighbor_sum(const Tensor& x, std::vector<std::vector<std::size_t>> lists) {
  detail::require_matrix(x, "neighbor_sum");
  const std::size_t n = lists.size(), f = x.dim(1);
  std::vector<double> out(n * f, 0.0);
  for (std::size_t v = 0; v < n; ++v) {
    for (std::size_t u : lists[v]) {
      if (u >= x.dim(0)) throw IndexError("neighbor_sum: row index out of range");
      for (std::size_t c = 0; c < f; ++c) out[v * f + c] += x.value()[u * f + c];
    }
  }
  return make_op("neighbor_sum", {n, f}, std::move(out), {x},
                 [lists = std::move(lists), f](const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t v = 0; v < lists.size(); ++v) {
                     for (std::size_t u : lists[v]) {
                       for (std::size_t c = 0; c < f; ++c) {
                         (*gin[0])[u * f + c] += g[v * f + c];
                       }
                     }
                   }
                 });
}

inline Tensor neighbor_maxpool(const Tensor& x, std::vector<std::vector<std::size_t>> lists) {
  detail::require_matrix(x, "neighbor_maxpool");
  const std::size_t n = lists.size(), f = x.dim(1);
  std::vector<double> out(n * f);
  std::vector<std::size_t> arg(n * f);
  for (std::size_t v = 0; v < n; ++v) {
    if (lists[v].empty()) throw ContractError("neighbor_maxpool: empty neighbor list");
    for (std::size_t c = 0; c < f; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t bi = lists[v][0];
      for (std::size_t u : lists[v]) {
        if (u >= x.dim(0)) throw IndexError("neighbor_maxpool: row index out of range");
        const double val = x.value()[u * f + c];
        if (val > best) {
          best = val;
          bi = u;
        }
      }
      out[v * f + c] = best;
      arg[v * f + c] = bi;
    }
  }
  return make_op("neighbor_maxpool", {n, f}, std::move(out), {x},
                 [arg = std::move(arg), f](const std::vector<double>& g,
                                           const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t i = 0; i < g.size(); ++i) {
                     (*gin[0])[arg[i] * f + i % f] += g[i];
                   }
                 });
}

// --- segmented ops (CSR-style offsets over an edge dimension) ----------------------

// Softmax within each [offsets[s], offsets[s+1]) segment of a vector, with
// per-segment max subtraction.
inline Tensor segment_softmax(const Tensor& x, std::vector<std::size_t> offsets) {
  detail::require_vector(x, "segment_softmax");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != x.numel()) {
    throw ContractError("segment_softmax: offsets must cover the input exactly");
  }
  std::vector<double> out(x.numel());
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t lo = offsets[s], hi = offsets[s + 1];
    if (lo >= hi) throw ContractError("segment_softmax: empty segment");
    double mx = x.value()[lo];
    for (std::size_t i = lo; i < hi; ++i) mx = std::max(mx, x.value()[i]);
    double z = 0.0;
    for (std::size_t i = lo; i < hi; ++i) {
      out[i] = std::exp(x.value()[i] - mx);
      z += out[i];
    }
    for (std::size_t i = lo; i < hi; ++i) out[i] /= z;
  }
  std::vector<double> sv = out;
  return make_op("segment_softmax", x.shape(), std::move(out), {x},
                 [sv = std::move(sv), offsets = std::move(offsets)](
                     const std::vector<double>& g,
                     const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                     const std::size_t lo = offsets[s], hi = offsets[s + 1];
                     double dot = 0.0;
                     for (std::size_t i = lo; i < hi; ++i) dot += g[i] * sv[i];
                     for (std::size_t i = lo; i < hi; ++i) {
                       (*gin[0])[i] += sv[i] * (g[i] - dot);
                     }
                   }
                 });
}

// Sum the rows of each segment of an E x F matrix into one output row per
// segment.
inline Tensor segment_sum(const Tensor& x, std::vector<std::size_t> offsets) {
  detail::require_matrix(x, "segment_sum");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != x.dim(0)) {
    throw ContractError("segment_sum: offsets must cover the rows exactly");
  }
  const std::size_t n = offsets.size() - 1, f = x.dim(1);
  std::vector<double> out(n * f, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
      for (std::size_t c = 0; c < f; ++c) out[s * f + c] += x.value()[e * f + c];
    }
  }
  return make_op("segment_sum", {n, f}, std::move(out), {x},
                 [offsets = std::move(offsets), f](const std::vector<double>& g,
                                                   const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
                     for (std::size_t e = offsets[s]; e < offsets[s + 1]; ++e) {
                       for (std::size_t c = 0; c < f; ++c) {
                         (*gin[0])[e * f + c] += g[s * f + c];
                       }
                     }
                   }
                 });
}

// --- row/column vector broadcasts ----------------------------------------------------

namespace detail {
inline void require_rowvec(const Tensor& a, const Tensor& v, const char* op) {
  require_matrix(a, op);
  require_vector(v, op);
  if (v.numel() != a.dim(1)) {
    throw ShapeError(std::string(op) + ": vector length " + std::to_string(v.numel()) +
                     " does not match column count " + std::to_string(a.dim(1)));
  }
}

inline void require_colvec(const Tensor& a, const Tensor& v, const char* op) {
  require_matrix(a, op);
  require_vector(v, op);
  if (v.numel() != a.dim(0)) {
    throw ShapeError(std::string(op) + ": vector length " + std::to_string(v.numel()) +
                     " does not match row count " + std::to_string(a.dim(0)));
  }
}
}  // namespace detail

inline Tensor add_rowvec(const Tensor& a, const Tensor& v) {
  detail::require_rowvec(a, v, "add_rowvec");
  const std::size_t n = a.dim(0), f = a.dim(1);
  std::vector<double> out(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) out[r * f + c] = a.value()[r * f + c] + v.value()[c];
  }
  return make_op("add_rowvec", a.shape(), std::move(out), {a, v},
                 [n, f](const std::vector<double>& g,
                        const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t r = 0; r < n; ++r) {
                     for (std::size_t c = 0; c < f; ++c) {
                       if (gin[0]) (*gin[0])[r * f + c] += g[r * f + c];
                       if (gin[1]) (*gin[1])[c] += g[r * f + c];
                     }
                   }
                 });
}

inline Tensor mul_rowvec(const Tensor& a, const Tensor& v) {
  detail::require_rowvec(a, v, "mul_rowvec");
  const std::size_t n = a.dim(0), f = a.dim(1);
  std::vector<double> out(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) out[r * f + c] = a.value()[r * f + c] * v.value()[c];
  }
  TensorNode* an = a.node();
  TensorNode* vn = v.node();
  return make_op("mul_rowvec", a.shape(), std::move(out), {a, v},
                 [an, vn, n, f](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t r = 0; r < n; ++r) {
                     for (std::size_t c = 0; c < f; ++c) {
                       if (gin[0]) (*gin[0])[r * f + c] += g[r * f + c] * vn->value[c];
                       if (gin[1]) (*gin[1])[c] += g[r * f + c] * an->value[r * f + c];
                     }
                   }
                 });
}

// Divide each row by v[c] columnwise; same 1e-12 magnitude floor as div.
inline Tensor div_rowvec(const Tensor& a, const Tensor& v) {
  detail::require_rowvec(a, v, "div_rowvec");
  const std::size_t n = a.dim(0), f = a.dim(1);
  std::vector<double> out(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      out[r * f + c] = a.value()[r * f + c] / detail::floored(v.value()[c]);
    }
  }
  TensorNode* an = a.node();
  TensorNode* vn = v.node();
  return make_op("div_rowvec", a.shape(), std::move(out), {a, v},
                 [an, vn, n, f](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t c = 0; c < f; ++c) {
                     const double d = detail::floored(vn->value[c]);
                     const bool live = std::abs(vn->value[c]) >= kEps;
                     for (std::size_t r = 0; r < n; ++r) {
                       if (gin[0]) (*gin[0])[r * f + c] += g[r * f + c] / d;
                       if (gin[1] && live) {
                         (*gin[1])[c] -= g[r * f + c] * an->value[r * f + c] / (d * d);
                       }
                     }
                   }
                 });
}

inline Tensor mul_colvec(const Tensor& a, const Tensor& v) {
  detail::require_colvec(a, v, "mul_colvec");
  const std::size_t n = a.dim(0), f = a.dim(1);
  std::vector<double> out(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) out[r * f + c] = a.value()[r * f + c] * v.value()[r];
  }
  TensorNode* an = a.node();
  TensorNode* vn = v.node();
  return make_op("mul_colvec", a.shape(), std::move(out), {a, v},
                 [an, vn, n, f](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t r = 0; r < n; ++r) {
                     for (std::size_t c = 0; c < f; ++c) {
                       if (gin[0]) (*gin[0])[r * f + c] += g[r * f + c] * vn->value[r];
                       if (gin[1]) (*gin[1])[r] += g[r * f + c] * an->value[r * f + c];
                     }
                   }
                 });
}

// Divide each row r by v[r]; same 1e-12 magnitude floor as div.
inline Tensor div_colvec(const Tensor& a, const Tensor& v) {
  detail::require_colvec(a, v, "div_colvec");
  const std::size_t n = a.dim(0), f = a.dim(1);
  std::vector<double> out(n * f);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < f; ++c) {
      out[r * f + c] = a.value()[r * f + c] / detail::floored(v.value()[r]);
    }
  }
  TensorNode* an = a.node();
  TensorNode* vn = v.node();
  return make_op("div_colvec", a.shape(), std::move(out), {a, v},
                 [an, vn, n, f](const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gin) {
                   for (std::size_t r = 0; r < n; ++r) {
                     const double d = detail::floored(vn->value[r]);
                     const bool live = std::abs(vn->value[r]) >= kEps;
                     for (std::size_t c = 0; c < f; ++c) {
                       if (gin[0]) (*gin[0])[r * f + c] += g[r * f + c] / d;
                       if (gin[1] && live) {
                         (*gin[1])[r] -= g[r * f + c] * an->value[r * f + c] / (d * d);
                       }
                     }
                   }
                 });
}

// --- grid stencils (channels laid out on a rows x cols grid, row-major nodes) ---------

namespace detail {
inline void require_grid(const Tensor& x, std::size_t rows, std::size_t cols, const char* op) {
  require_matrix(x, op);
  if (x.dim(0) != rows * cols) {
    throw ShapeError(std::string(op) + ": node count " + std::to_string(x.dim(0)) +
                     " does not equal rows*cols");
  }
}
}  // namespace detail

// Central x-difference with replicate padding, per channel.
inline Tensor grid_dx(const Tensor& x, std::size_t rows, std::size_t cols) {
  detail::require_grid(x, rows, cols, "grid_dx");
  const std::size_t f = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t cp = c + 1 < cols ? c + 1 : cols - 1;
      const std::size_t cm = c > 0 ? c - 1 : 0;
      for (std::size_t ch = 0; ch < f; ++ch) {
        out[(r * cols + c) * f + ch] =
            0.5 * (x.value()[(r * cols + cp) * f + ch] - x.value()[(r * cols + cm) * f + ch]);
      }
    }
  }
  return make_op("grid_dx", x.shape(), std::move(out), {x},
                 [rows, cols, f](const std::vector<double>& g,
                                 const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t r = 0; r < rows; ++r) {
                     for (std::size_t c = 0; c < cols; ++c) {
                       const std::size_t cp = c + 1 < cols ? c + 1 : cols - 1;
                       const std::size_t cm = c > 0 ? c - 1 : 0;
                       for (std::size_t ch = 0; ch < f; ++ch) {
                         const double gv = 0.5 * g[(r * cols + c) * f + ch];
                         (*gin[0])[(r * cols + cp) * f + ch] += gv;
                         (*gin[0])[(r * cols + cm) * f + ch] -= gv;
                       }
                     }
                   }
                 });
}

// Central y-difference with replicate padding, per channel.
inline Tensor grid_dy(const Tensor& x, std::size_t rows, std::size_t cols) {
  detail::require_grid(x, rows, cols, "grid_dy");
  const std::size_t f = x.dim(1);
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t rp = r + 1 < rows ? r + 1 : rows - 1;
    const std::size_t rm = r > 0 ? r - 1 : 0;
    for (std::size_t c = 0; c < cols; ++c) {
      for (std::size_t ch = 0; ch < f; ++ch) {
        out[(r * cols + c) * f + ch] =
            0.5 * (x.value()[(rp * cols + c) * f + ch] - x.value()[(rm * cols + c) * f + ch]);
      }
    }
  }
  return make_op("grid_dy", x.shape(), std::move(out), {x},
                 [rows, cols, f](const std::vector<double>& g,
                                 const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t r = 0; r < rows; ++r) {
                     const std::size_t rp = r + 1 < rows ? r + 1 : rows - 1;
                     const std::size_t rm = r > 0 ? r - 1 : 0;
                     for (std::size_t c = 0; c < cols; ++c) {
                       for (std::size_t ch = 0; ch < f; ++ch) {
                         const double gv = 0.5 * g[(r * cols + c) * f + ch];
                         (*gin[0])[(rp * cols + c) * f + ch] += gv;
                         (*gin[0])[(rm * cols + c) * f + ch] -= gv;
                       }
                     }
                   }
                 });
}

// 5-point Laplacian with replicate padding, per channel.
inline Tensor grid_laplacian(const Tensor& x, std::size_t rows, std::size_t cols) {
  detail::require_grid(x, rows, cols, "grid_laplacian");
  const std::size_t f = x.dim(1);
  auto idx = [cols, f](std::size_t r, std::size_t c, std::size_t ch) {
    return (r * cols + c) * f + ch;
  };
  std::vector<double> out(x.numel());
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t rp = r + 1 < rows ? r + 1 : rows - 1;
    const std::size_t rm = r > 0 ? r - 1 : 0;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t cp = c + 1 < cols ? c + 1 : cols - 1;
      const std::size_t cm = c > 0 ? c - 1 : 0;
      for (std::size_t ch = 0; ch < f; ++ch) {
        out[idx(r, c, ch)] = x.value()[idx(rm, c, ch)] + x.value()[idx(rp, c, ch)] +
                             x.value()[idx(r, cm, ch)] + x.value()[idx(r, cp, ch)] -
                             4.0 * x.value()[idx(r, c, ch)];
      }
    }
  }
  return make_op("grid_laplacian", x.shape(), std::move(out), {x},
                 [rows, cols, f, idx](const std::vector<double>& g,
                                      const std::vector<std::vector<double>*>& gin) {
                   if (!gin[0]) return;
                   for (std::size_t r = 0; r < rows; ++r) {
                     const std::size_t rp = r + 1 < rows ? r + 1 : rows - 1;
                     const std::size_t rm = r > 0 ? r - 1 : 0;
                     for (std::size_t c = 0; c < cols; ++c) {
                       const std::size_t cp = c + 1 < cols ? c + 1 : cols - 1;
                       const std::size_t cm = c > 0 ? c - 1 : 0;
                       for (std::size_t ch = 0; ch < f; ++ch) {
                         const double gv = g[idx(r, c, ch)];
                         (*gin[0])[idx(rm, c, ch)] += gv;
                         (*gin[0])[idx(rp, c, ch)] += gv;
                         (*gin[0])[idx(r, cm, ch)] += gv;
                         (*gin[0])[idx(r, cp, ch)] += gv;
                         (*gin[0])[idx(r, c, ch)] -= 4.0 * gv;
                       }
                     }
                   }
                 });
}

// ---------------------------------------------------------------------------
// Independent gradient oracle: central finite differences.
// ---------------------------------------------------------------------------

// f must be a pure, deterministic Tensor -> double function.
template <typename F>
Tensor finite_diff_gradient(F&& f, const Tensor& x, double h) {
  if (!(h > 0.0 && h <= 1e-2)) {
    throw ContractError("finite_diff_gradient: step must lie in (0, 1e-2]");
  }
  std::vector<double> g(x.numel());
  std::vector<double> probe = x.value();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    const double orig = probe[i];
    probe[i] = orig + h;
    const double fp = f(Tensor::from_data(x.shape(), probe));
    probe[i] = orig - h;
    const double fm = f(Tensor::from_data(x.shape(), probe));
    probe[i] = orig;
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      throw NumericError("finite_diff_gradient: non-finite objective value");
    }
    g[i] = (fp - fm) / (2.0 * h);
  }
  return Tensor::from_data(x.shape(), std::move(g));
}

}  // namespace uwdet
