// Copyright 2026 The Navigability Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef NAVIG_AUTODIFF_HPP
#define NAVIG_AUTODIFF_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "navig/errors.hpp"
#include "navig/rng.hpp"

namespace navig::ad {

/// Tensors are row-major [rows x cols]; rows index the batch.
template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string shape_str(Eigen::Index r, Eigen::Index c) {
  return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
}

template <typename S>
struct Parameter {
  std::string name;
  Mat<S> value;
  Mat<S> grad;
  Mat<S> m;  // first moment
  Mat<S> v;  // second moment
};

/// Named parameters with their optimizer state. References stay valid as
/// parameters are added.
template <typename S>
class ParamStore {
 public:
  Parameter<S>& add(const std::string& name, Mat<S> init) {
    if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter '" + name + "'");
    Parameter<S>& p = params_.emplace_back();
    p.name = name;
    p.grad = Mat<S>::Zero(init.rows(), init.cols());
    p.m = p.grad;
    p.v = p.grad;
    p.value = std::move(init);
    index_[name] = params_.size() - 1;
    return p;
  }

  Parameter<S>& get(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter '" + name + "'");
    return params_[it->second];
  }
  const Parameter<S>& get(const std::string& name) const { return const_cast<ParamStore*>(this)->get(name); }
  bool contains(const std::string& name) const { return index_.count(name) != 0; }

  std::deque<Parameter<S>>& params() { return params_; }
  const std::deque<Parameter<S>>& params() const { return params_; }

  void zero_grad() {
    for (auto& p : params_) p.grad.setZero();
  }
  void reset_optimizer() {
    for (auto& p : params_) {
      p.m.setZero();
      p.v.setZero();
    }
    step = 0;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }

  /// Copies values (and optimizer state) into another scalar type.
  template <typename T>
  ParamStore<T> cast() const {
    ParamStore<T> out;
    for (const auto& p : params_) {
      auto& q = out.add(p.name, p.value.template cast<T>());
      q.m = p.m.template cast<T>();
      q.v = p.v.template cast<T>();
    }
    out.step = step;
    return out;
  }

  /// Copies values of every parameter present in `other` by name.
  void assign_values(const ParamStore& other) {
    for (auto& p : params_)
      if (other.contains(p.name)) p.value = other.get(p.name).value;
  }

  std::int64_t step = 0;

 private:
  std::deque<Parameter<S>> params_;
  std::map<std::string, std::size_t> index_;
};

template <typename S>
class Tape;

/// Handle to a tape node.
template <typename S>
struct Var {
  Tape<S>* tape = nullptr;
  int id = -1;

  const Mat<S>& value() const { return tape->value(id); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  S scalar() const { return value()(0, 0); }
  bool valid() const { return tape != nullptr && id >= 0; }
};

/// Reverse-mode tape. Nodes are evaluated eagerly on creation; backward()
/// replays the recorded closures in reverse creation order.
template <typename S>
class Tape {
 public:
  using M = Mat<S>;
  using Backward = std::function<void(Tape&, int)>;

  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }
  std::size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Var<S> constant(M value) { return push(std::move(value), false); }
  Var<S> leaf(M value) { return push(std::move(value), record_); }

  /// Leaf that reads the parameter value in place and accumulates into its grad.
  Var<S> param(Parameter<S>& p) {
    Node& n = nodes_.emplace_back();
    n.ext = &p.value;
    n.needs_grad = record_;
    if (record_) n.sink = &p.grad;
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  /// General op: `backward(tape, self)` reads grad(self) and accumulates into
  /// the inputs. Recorded only when an input needs a gradient.
  Var<S> op(M value, std::initializer_list<Var<S>> inputs, Backward backward) {
    bool needs = false;
    if (record_)
      for (const Var<S>& v : inputs) needs = needs || (v.id >= 0 && nodes_[v.id].needs_grad);
    Var<S> out = push(std::move(value), needs);
    if (needs) nodes_.back().backward = std::move(backward);
    return out;
  }
  Var<S> op(M value, const std::vector<Var<S>>& inputs, Backward backward) {
    bool needs = false;
    if (record_)
      for (const Var<S>& v : inputs) needs = needs || (v.id >= 0 && nodes_[v.id].needs_grad);
    Var<S> out = push(std::move(value), needs);
    if (needs) nodes_.back().backward = std::move(backward);
    return out;
  }

  const M& value(int id) const {
    const Node& n = nodes_[id];
    return n.ext ? *n.ext : n.value;
  }
  bool needs_grad(int id) const { return id >= 0 && nodes_[id].needs_grad; }
  bool has_grad(int id) const {
    const Node& n = nodes_[id];
    return n.sink ? true : n.grad.size() != 0;
  }

  /// Gradient accumulator of a node, zero-initialized on first access.
  M& grad(int id) {
    Node& n = nodes_[id];
    if (n.sink) return *n.sink;
    if (n.grad.size() == 0) {
      const M& v = value(id);
      n.grad.setZero(v.rows(), v.cols());
    }
    return n.grad;
  }

  /// Seeds d(out)/d(out) = 1 for a 1x1 output and propagates.
  void backward(Var<S> out) {
    if (out.rows() != 1 || out.cols() != 1)
      throw ShapeError("backward: output must be 1x1, got " + shape_str(out.rows(), out.cols()));
    if (!nodes_[out.id].needs_grad) return;
    grad(out.id)(0, 0) += S(1);
    for (int i = out.id; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.backward || n.grad.size() == 0) continue;
      n.backward(*this, i);
    }
  }

 private:
  struct Node {
    M value;
    const M* ext = nullptr;
    M grad;
    M* sink = nullptr;
    bool needs_grad = false;
    Backward backward;
  };

  Var<S> push(M value, bool needs) {
    Node& n = nodes_.emplace_back();
    n.value = std::move(value);
    n.needs_grad = needs;
    return {this, static_cast<int>(nodes_.size()) - 1};
  }

  bool record_;
  std::deque<Node> nodes_;
};

namespace detail {

template <typename S>
void require_same(const char* op, const Var<S>& a, const Var<S>& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.rows(), a.cols()) + " vs " +
                     shape_str(b.rows(), b.cols()));
}

template <typename S>
void accumulate(Tape<S>& t, int id, const Mat<S>& g) {
  if (t.needs_grad(id)) t.grad(id) += g;
}

}  // namespace detail

template <typename S>
Var<S> matmul(Var<S> a, Var<S> b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: inner dimensions differ " + shape_str(a.rows(), a.cols()) + " x " +
                     shape_str(b.rows(), b.cols()));
  Mat<S> out(a.rows(), b.cols());
  out.noalias() = a.value() * b.value();
  return a.tape->op(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    if (t.needs_grad(a.id)) t.grad(a.id).noalias() += g * t.value(b.id).transpose();
    if (t.needs_grad(b.id)) t.grad(b.id).noalias() += t.value(a.id).transpose() * g;
  });
}

/// x W + b with b a single row broadcast over the batch.
template <typename S>
Var<S> linear(Var<S> x, Var<S> w, Var<S> b) {
  if (x.cols() != w.rows() || b.rows() != 1 || b.cols() != w.cols())
    throw ShapeError("linear: incompatible shapes x" + shape_str(x.rows(), x.cols()) + " W" +
                     shape_str(w.rows(), w.cols()) + " b" + shape_str(b.rows(), b.cols()));
  Mat<S> out(x.rows(), w.cols());
  out.noalias() = x.value() * w.value();
  out.rowwise() += b.value().row(0);
  return x.tape->op(std::move(out), {x, w, b}, [x, w, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    if (t.needs_grad(x.id)) t.grad(x.id).noalias() += g * t.value(w.id).transpose();
    if (t.needs_grad(w.id)) t.grad(w.id).noalias() += t.value(x.id).transpose() * g;
    if (t.needs_grad(b.id)) t.grad(b.id) += g.colwise().sum();
  });
}

template <typename S>
Var<S> add(Var<S> a, Var<S> b) {
  detail::require_same("add", a, b);
  return a.tape->op(a.value() + b.value(), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    detail::accumulate(t, a.id, g);
    detail::accumulate(t, b.id, g);
  });
}

template <typename S>
Var<S> sub(Var<S> a, Var<S> b) {
  detail::require_same("sub", a, b);
  return a.tape->op(a.value() - b.value(), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    detail::accumulate(t, a.id, g);
    if (t.needs_grad(b.id)) t.grad(b.id) -= g;
  });
}

/// Elementwise product.
template <typename S>
Var<S> mul(Var<S> a, Var<S> b) {
  detail::require_same("mul", a, b);
  return a.tape->op(a.value().cwiseProduct(b.value()), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    if (t.needs_grad(a.id)) t.grad(a.id) += g.cwiseProduct(t.value(b.id));
    if (t.needs_grad(b.id)) t.grad(b.id) += g.cwiseProduct(t.value(a.id));
  });
}

template <typename S>
Var<S> add_bias(Var<S> a, Var<S> b) {
  if (b.rows() != 1 || b.cols() != a.cols())
    throw ShapeError("add_bias: bias " + shape_str(b.rows(), b.cols()) + " for input " +
                     shape_str(a.rows(), a.cols()));
  Mat<S> out = a.value();
  out.rowwise() += b.value().row(0);
  return a.tape->op(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    detail::accumulate(t, a.id, g);
    if (t.needs_grad(b.id)) t.grad(b.id) += g.colwise().sum();
  });
}

template <typename S>
Var<S> scale(Var<S> a, S s) {
  return a.tape->op(a.value() * s, {a}, [a, s](Tape<S>& t, int self) {
    if (t.needs_grad(a.id)) t.grad(a.id) += t.grad(self) * s;
  });
}

template <typename S>
Var<S> add_scalar(Var<S> a, S s) {
  return a.tape->op((a.value().array() + s).matrix(), {a}, [a](Tape<S>& t, int self) {
    detail::accumulate(t, a.id, t.grad(self));
  });
}

template <typename S>
Var<S> tanh(Var<S> a) {
  Mat<S> out = a.value().array().tanh().matrix();
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const auto y = t.value(self).array();
    t.grad(a.id).array() += t.grad(self).array() * (S(1) - y * y);
  });
}

template <typename S>
Var<S> sigmoid(Var<S> a) {
  Mat<S> out = (S(1) / (S(1) + (-a.value().array()).exp())).matrix();
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const auto y = t.value(self).array();
    t.grad(a.id).array() += t.grad(self).array() * y * (S(1) - y);
  });
}

template <typename S>
Var<S> relu(Var<S> a) {
  Mat<S> out = a.value().cwiseMax(S(0));
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    t.grad(a.id).array() += (t.value(a.id).array() > S(0)).select(t.grad(self).array(), S(0));
  });
}

template <typename S>
Var<S> exp(Var<S> a) {
  Mat<S> out = a.value().array().exp().matrix();
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (t.needs_grad(a.id)) t.grad(a.id).array() += t.grad(self).array() * t.value(self).array();
  });
}

template <typename S>
Var<S> square(Var<S> a) {
  return a.tape->op(a.value().cwiseAbs2(), {a}, [a](Tape<S>& t, int self) {
    if (t.needs_grad(a.id)) t.grad(a.id).array() += S(2) * t.grad(self).array() * t.value(a.id).array();
  });
}

/// Elementwise minimum; ties route the gradient to `a`.
template <typename S>
Var<S> minimum(Var<S> a, Var<S> b) {
  detail::require_same("minimum", a, b);
  Mat<S> out = a.value().cwiseMin(b.value());
  return a.tape->op(std::move(out), {a, b}, [a, b](Tape<S>& t, int self) {
    const auto pick_a = t.value(a.id).array() <= t.value(b.id).array();
    const auto g = t.grad(self).array();
    if (t.needs_grad(a.id)) t.grad(a.id).array() += pick_a.select(g, S(0));
    if (t.needs_grad(b.id)) t.grad(b.id).array() += pick_a.select(S(0), g);
  });
}

/// Gradient passes only strictly inside (lo, hi).
template <typename S>
Var<S> clamp(Var<S> a, S lo, S hi) {
  Mat<S> out = a.value().cwiseMax(lo).cwiseMin(hi);
  return a.tape->op(std::move(out), {a}, [a, lo, hi](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const auto x = t.value(a.id).array();
    t.grad(a.id).array() += (x > lo && x < hi).select(t.grad(self).array(), S(0));
  });
}

namespace detail {

template <typename S>
Mat<S> row_softmax(const Mat<S>& x) {
  Mat<S> y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    r.array() -= r.maxCoeff();
    r = r.array().exp().matrix();
    r /= r.sum();
  }
  return y;
}

template <typename S>
Mat<S> row_log_softmax(const Mat<S>& x) {
  Mat<S> y = x;
  for (Eigen::Index i = 0; i < y.rows(); ++i) {
    auto r = y.row(i);
    const S m = r.maxCoeff();
    const S lse = m + std::log((r.array() - m).exp().sum());
    r.array() -= lse;
  }
  return y;
}

}  // namespace detail

template <typename S>
Var<S> softmax(Var<S> a) {
  return a.tape->op(detail::row_softmax(a.value()), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const Mat<S>& y = t.value(self);
    const Mat<S>& g = t.grad(self);
    const Eigen::Matrix<S, Eigen::Dynamic, 1> dot = g.cwiseProduct(y).rowwise().sum();
    t.grad(a.id).array() += y.array() * (g.colwise() - dot).array();
  });
}

template <typename S>
Var<S> log_softmax(Var<S> a) {
  return a.tape->op(detail::row_log_softmax(a.value()), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const Mat<S>& g = t.grad(self);
    const Mat<S> p = t.value(self).array().exp().matrix();
    const Eigen::Matrix<S, Eigen::Dynamic, 1> gs = g.rowwise().sum();
    t.grad(a.id) += g - (p.array().colwise() * gs.array()).matrix();
  });
}

/// Mean cross-entropy of row logits against class targets; rows with a
/// negative target are excluded. Zero (and no gradient) when no row counts.
template <typename S>
Var<S> cross_entropy(Var<S> logits, const std::vector<int>& targets) {
  if (static_cast<Eigen::Index>(targets.size()) != logits.rows())
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for logits " +
                     shape_str(logits.rows(), logits.cols()));
  const Mat<S> logp = detail::row_log_softmax(logits.value());
  S total = 0;
  int count = 0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0) continue;
    if (targets[i] >= logits.cols()) throw ShapeError("cross_entropy: target out of range");
    total -= logp(static_cast<Eigen::Index>(i), targets[i]);
    ++count;
  }
  Mat<S> out(1, 1);
  out(0, 0) = count ? total / S(count) : S(0);
  if (count == 0) return logits.tape->constant(std::move(out));
  return logits.tape->op(std::move(out), {logits}, [logits, targets, count](Tape<S>& t, int self) {
    if (!t.needs_grad(logits.id)) return;
    const S g = t.grad(self)(0, 0) / S(count);
    const Mat<S> p = detail::row_softmax(t.value(logits.id));
    Mat<S>& gl = t.grad(logits.id);
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (targets[i] < 0) continue;
      const auto r = static_cast<Eigen::Index>(i);
      gl.row(r) += g * p.row(r);
      gl(r, targets[i]) -= g;
    }
  });
}

/// out[i] = a[i, index[i]] as a column.
template <typename S>
Var<S> pick(Var<S> a, const std::vector<int>& index) {
  if (static_cast<Eigen::Index>(index.size()) != a.rows()) throw ShapeError("pick: index count != rows");
  Mat<S> out(a.rows(), 1);
  for (Eigen::Index i = 0; i < a.rows(); ++i) out(i, 0) = a.value()(i, index[static_cast<std::size_t>(i)]);
  return a.tape->op(std::move(out), {a}, [a, index](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    const Mat<S>& g = t.grad(self);
    Mat<S>& ga = t.grad(a.id);
    for (Eigen::Index i = 0; i < g.rows(); ++i) ga(i, index[static_cast<std::size_t>(i)]) += g(i, 0);
  });
}

template <typename S>
Var<S> sum(Var<S> a) {
  Mat<S> out(1, 1);
  out(0, 0) = a.value().sum();
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (t.needs_grad(a.id)) t.grad(a.id).array() += t.grad(self)(0, 0);
  });
}

template <typename S>
Var<S> mean(Var<S> a) {
  return scale(sum(a), S(1) / static_cast<S>(a.value().size()));
}

/// Per-row sum as a column.
template <typename S>
Var<S> row_sum(Var<S> a) {
  Mat<S> out = a.value().rowwise().sum();
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    t.grad(a.id).colwise() += t.grad(self).col(0);
  });
}

template <typename S>
Var<S> concat_cols(const std::vector<Var<S>>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const Eigen::Index rows = parts.front().rows();
  Eigen::Index cols = 0;
  for (const auto& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + shape_str(rows, parts.front().cols()) + " vs " +
                       shape_str(p.rows(), p.cols()));
    cols += p.cols();
  }
  Mat<S> out(rows, cols);
  Eigen::Index c = 0;
  for (const auto& p : parts) {
    out.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return parts.front().tape->op(std::move(out), parts, [parts](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    Eigen::Index c0 = 0;
    for (const auto& p : parts) {
      const Eigen::Index w = t.value(p.id).cols();
      if (t.needs_grad(p.id)) t.grad(p.id) += g.middleCols(c0, w);
      c0 += w;
    }
  });
}

template <typename S>
Var<S> slice_cols(Var<S> a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.cols())
    throw ShapeError("slice_cols: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                     shape_str(a.rows(), a.cols()));
  return a.tape->op(a.value().middleCols(begin, count), {a}, [a, begin, count](Tape<S>& t, int self) {
    if (t.needs_grad(a.id)) t.grad(a.id).middleCols(begin, count) += t.grad(self);
  });
}

template <typename S>
Var<S> slice_rows(Var<S> a, Eigen::Index begin, Eigen::Index count) {
  if (begin < 0 || count < 0 || begin + count > a.rows())
    throw ShapeError("slice_rows: [" + std::to_string(begin) + ", +" + std::to_string(count) + ") out of " +
                     shape_str(a.rows(), a.cols()));
  return a.tape->op(a.value().middleRows(begin, count), {a}, [a, begin, count](Tape<S>& t, int self) {
    if (t.needs_grad(a.id)) t.grad(a.id).middleRows(begin, count) += t.grad(self);
  });
}

/// Row-major reinterpretation.
template <typename S>
Var<S> reshape(Var<S> a, Eigen::Index rows, Eigen::Index cols) {
  if (rows * cols != a.value().size())
    throw ShapeError("reshape: " + shape_str(a.rows(), a.cols()) + " to " + shape_str(rows, cols));
  Mat<S> out = Eigen::Map<const Mat<S>>(a.value().data(), rows, cols);
  return a.tape->op(std::move(out), {a}, [a](Tape<S>& t, int self) {
    if (!t.needs_grad(a.id)) return;
    Mat<S>& ga = t.grad(a.id);
    Eigen::Map<Mat<S>>(ga.data(), t.grad(self).rows(), t.grad(self).cols()) += t.grad(self);
  });
}

/// Reference to one row of a tape node; a default (invalid) ref reads zeros.
template <typename S>
struct RowRef {
  Var<S> var;
  Eigen::Index row = 0;
};

/// Stacks referenced rows, possibly from many nodes, into one tensor.
template <typename S>
Var<S> gather_rows(Tape<S>& tape, const std::vector<RowRef<S>>& refs, Eigen::Index cols) {
  Mat<S> out = Mat<S>::Zero(static_cast<Eigen::Index>(refs.size()), cols);
  std::vector<Var<S>> inputs;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const RowRef<S>& r = refs[i];
    if (!r.var.valid()) continue;
    if (r.var.cols() != cols)
      throw ShapeError("gather_rows: source " + shape_str(r.var.rows(), r.var.cols()) + " for width " +
                       std::to_string(cols));
    out.row(static_cast<Eigen::Index>(i)) = r.var.value().row(r.row);
    inputs.push_back(r.var);
  }
  return tape.op(std::move(out), inputs, [refs](Tape<S>& t, int self) {
    const Mat<S>& g = t.grad(self);
    for (std::size_t i = 0; i < refs.size(); ++i) {
      const RowRef<S>& r = refs[i];
      if (r.var.valid() && t.needs_grad(r.var.id)) t.grad(r.var.id).row(r.row) += g.row(static_cast<Eigen::Index>(i));
    }
  });
}

/// Rows of `table` selected by index.
template <typename S>
Var<S> embedding(Var<S> table, const std::vector<int>& index) {
  Mat<S> out(static_cast<Eigen::Index>(index.size()), table.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= table.rows())
      throw ShapeError("embedding: index " + std::to_string(index[i]) + " outside table " +
                       shape_str(table.rows(), table.cols()));
    out.row(static_cast<Eigen::Index>(i)) = table.value().row(index[i]);
  }
  return table.tape->op(std::move(out), {table}, [table, index](Tape<S>& t, int self) {
    if (!t.needs_grad(table.id)) return;
    const Mat<S>& g = t.grad(self);
    Mat<S>& gt = t.grad(table.id);
    for (std::size_t i = 0; i < index.size(); ++i) gt.row(index[i]) += g.row(static_cast<Eigen::Index>(i));
  });
}

template <typename S>
Var<S> operator+(Var<S> a, Var<S> b) {
  return add(a, b);
}
template <typename S>
Var<S> operator-(Var<S> a, Var<S> b) {
  return sub(a, b);
}

/// Dense layer parameters: W [in x out], b [1 x out].
template <typename S>
struct DenseLayer {
  Parameter<S>* w = nullptr;
  Parameter<S>* b = nullptr;

  Var<S> operator()(Tape<S>& t, Var<S> x) const { return linear(x, t.param(*w), t.param(*b)); }
  Eigen::Index in() const { return w->value.rows(); }
  Eigen::Index out() const { return w->value.cols(); }
};

template <typename S>
Mat<S> uniform_init(Eigen::Index rows, Eigen::Index cols, double bound, Rng& rng) {
  Mat<S> m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<S>(rng.uniform(-bound, bound));
  return m;
}

/// Glorot-uniform weights and zero bias.
template <typename S>
DenseLayer<S> make_dense(ParamStore<S>& store, const std::string& name, Eigen::Index in, Eigen::Index out, Rng& rng) {
  DenseLayer<S> d;
  d.w = &store.add(name + ".w", uniform_init<S>(in, out, std::sqrt(6.0 / static_cast<double>(in + out)), rng));
  d.b = &store.add(name + ".b", Mat<S>::Zero(1, out));
  return d;
}

/// GRU cell, h' = (1 - z) * h + z * candidate with
/// z = sigmoid(Wz [x, h] + bz), r = sigmoid(Wr [x, h] + br),
/// candidate = tanh(Wh [x, r * h] + bh).
template <typename S>
struct GruCell {
  Parameter<S>* w_gates = nullptr;  // [(in + H) x 2H], columns [z | r]
  Parameter<S>* b_gates = nullptr;  // [1 x 2H]
  Parameter<S>* w_cand = nullptr;   // [(in + H) x H]
  Parameter<S>* b_cand = nullptr;   // [1 x H]

  Eigen::Index hidden() const { return b_cand->value.cols(); }
  Eigen::Index input() const { return w_cand->value.rows() - hidden(); }
};

template <typename S>
GruCell<S> make_gru(ParamStore<S>& store, const std::string& name, Eigen::Index in, Eigen::Index hidden, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  GruCell<S> g;
  g.w_gates = &store.add(name + ".w_gates", uniform_init<S>(in + hidden, 2 * hidden, bound, rng));
  g.b_gates = &store.add(name + ".b_gates", Mat<S>::Zero(1, 2 * hidden));
  g.w_cand = &store.add(name + ".w_cand", uniform_init<S>(in + hidden, hidden, bound, rng));
  g.b_cand = &store.add(name + ".b_cand", Mat<S>::Zero(1, hidden));
  return g;
}

template <typename S>
Var<S> gru_step(Tape<S>& t, const GruCell<S>& cell, Var<S> x, Var<S> h) {
  const Eigen::Index H = cell.hidden();
  if (h.cols() != H || x.cols() != cell.input() || x.rows() != h.rows())
    throw ShapeError("gru_step: input " + shape_str(x.rows(), x.cols()) + " hidden " + shape_str(h.rows(), h.cols()) +
                     " for cell in=" + std::to_string(cell.input()) + " H=" + std::to_string(H));
  const Var<S> gates = sigmoid(linear(concat_cols<S>({x, h}), t.param(*cell.w_gates), t.param(*cell.b_gates)));
  const Var<S> z = slice_cols(gates, 0, H);
  const Var<S> r = slice_cols(gates, H, H);
  const Var<S> cand = tanh(linear(concat_cols<S>({x, mul(r, h)}), t.param(*cell.w_cand), t.param(*cell.b_cand)));
  return add(h, mul(z, sub(cand, h)));
}

struct OptimConfig {
  double lr = 1e-3;
  double weight_decay = 0.0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double max_grad_norm = 0.0;  // global-norm clipping, 0 disables

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("optim: lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("optim: betas must lie in [0, 1)");
    if (!(eps > 0.0) || weight_decay < 0.0 || max_grad_norm < 0.0)
      throw ConfigError("optim: eps must be > 0, weight_decay and max_grad_norm >= 0");
  }
};

/// Global L2 norm of all gradients.
template <typename S>
double grad_norm(const ParamStore<S>& store) {
  double total = 0.0;
  for (const auto& p : store.params()) total += static_cast<double>(p.grad.squaredNorm());
  return std::sqrt(total);
}

/// Decoupled weight decay followed by a bias-corrected Adam step; zeroes the
/// gradients afterwards.
template <typename S>
void adamw_step(ParamStore<S>& store, const OptimConfig& c) {
  for (const auto& p : store.params())
    if (!p.grad.allFinite()) throw NumericalError("adamw_step: non-finite gradient in parameter '" + p.name + "'");
  S clip = S(1);
  if (c.max_grad_norm > 0.0) {
    const double n = grad_norm(store);
    if (n > c.max_grad_norm) clip = static_cast<S>(c.max_grad_norm / n);
  }
  ++store.step;
  const double t = static_cast<double>(store.step);
  const S bc1 = static_cast<S>(1.0 - std::pow(c.beta1, t));
  const S bc2 = static_cast<S>(1.0 - std::pow(c.beta2, t));
  const S lr = static_cast<S>(c.lr), b1 = static_cast<S>(c.beta1), b2 = static_cast<S>(c.beta2);
  const S eps = static_cast<S>(c.eps), decay = static_cast<S>(1.0 - c.lr * c.weight_decay);
  for (auto& p : store.params()) {
    if (c.weight_decay != 0.0) p.value *= decay;
    const auto g = (p.grad.array() * clip);
    p.m.array() = b1 * p.m.array() + (S(1) - b1) * g;
    p.v.array() = b2 * p.v.array() + (S(1) - b2) * g * g;
    p.value.array() -= lr * (p.m.array() / bc1) / ((p.v.array() / bc2).sqrt() + eps);
    p.grad.setZero();
  }
}

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
}

using CheckFn = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

/// Max relative error between backward() and central differences over every
/// input coordinate.
inline double grad_check(const CheckFn& f, std::vector<Mat<double>> inputs, double eps = 1e-6) {
  std::vector<Mat<double>> analytic;
  {
    Tape<double> t;
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(t.leaf(x));
    t.backward(f(t, vars));
    for (const auto& v : vars)
      analytic.push_back(t.has_grad(v.id) ? t.grad(v.id) : Mat<double>::Zero(v.rows(), v.cols()));
  }
  auto eval = [&]() {
    Tape<double> t(false);
    std::vector<Var<double>> vars;
    for (const auto& x : inputs) vars.push_back(t.leaf(x));
    return f(t, vars).scalar();
  };
  double worst = 0.0;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) {
      double& x = inputs[k].data()[i];
      const double x0 = x;
      x = x0 + eps;
      const double fp = eval();
      x = x0 - eps;
      const double fm = eval();
      x = x0;
      worst = std::max(worst, relative_error(analytic[k].data()[i], (fp - fm) / (2.0 * eps)));
    }
  return worst;
}

using ParamCheckFn = std::function<Var<double>(Tape<double>&)>;

/// Same check over the parameters of a store; `stride` > 1 samples every
/// stride-th coordinate of each parameter.
inline double grad_check_params(const ParamCheckFn& f, ParamStore<double>& store, double eps = 1e-6,
                                Eigen::Index stride = 1) {
  store.zero_grad();
  {
    Tape<double> t;
    t.backward(f(t));
  }
  double worst = 0.0;
  for (auto& p : store.params())
    for (Eigen::Index i = 0; i < p.value.size(); i += stride) {
      double& x = p.value.data()[i];
      const double x0 = x;
      auto eval = [&]() {
        Tape<double> t(false);
        return f(t).scalar();
      };
      x = x0 + eps;
      const double fp = eval();
      x = x0 - eps;
      const double fm = eval();
      x = x0;
      worst = std::max(worst, relative_error(p.grad.data()[i], (fp - fm) / (2.0 * eps)));
    }
  store.zero_grad();
  return worst;
}

/// Parameter check whose numeric side runs in extended precision. `f` must be
/// callable as f(Tape<S>&, ParamStore<S>&) for S = double and long double; the
/// analytic gradient comes from the double store.
template <typename F>
double grad_check_params_extended(F&& f, ParamStore<double>& store, double eps = 1e-6, Eigen::Index stride = 1) {
  store.zero_grad();
  {
    Tape<double> t;
    t.backward(f(t, store));
  }
  ParamStore<long double> ext = store.template cast<long double>();
  const long double h = static_cast<long double>(eps);
  auto eval = [&]() {
    Tape<long double> t(false);
    return f(t, ext).scalar();
  };
  double worst = 0.0;
  for (auto& p : store.params()) {
    Parameter<long double>& q = ext.get(p.name);
    for (Eigen::Index i = 0; i < p.value.size(); i += stride) {
      long double& x = q.value.data()[i];
      const long double x0 = x;
      x = x0 + h;
      const long double fp = eval();
      x = x0 - h;
      const long double fm = eval();
      x = x0;
      worst = std::max(worst, relative_error(p.grad.data()[i], static_cast<double>((fp - fm) / (2.0L * h))));
    }
  }
  store.zero_grad();
  return worst;
}

}  // namespace navig::ad

#endif  // NAVIG_AUTODIFF_HPP
