// Copyright 2026 The AVSepChain Authors.
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

// Minimal reverse-mode differentiation over row-major Eigen matrices.
//
// A Tape records every operation of one forward pass. Nodes that do not
// depend on a variable or parameter carry no backward closure, so frozen
// sub-graphs (front-end tables, DFT bases) cost nothing during backward.
// Sequences are stored time-major: row t of a [T x d] matrix is frame t.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "avsep/errors.hpp"

namespace avsep::ag {

template <typename T>
using Matrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
struct Parameter {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

/// Named, insertion-ordered parameter collection with stable addresses.
template <typename T>
class ParamSet {
 public:
  Parameter<T>& add(const std::string& name, Matrix<T> init) {
    AVSEP_REQUIRE(!index_.count(name), InvalidArgument, "duplicate parameter " + name);
    index_[name] = params_.size();
    params_.push_back(Parameter<T>{name, std::move(init), {}});
    params_.back().zero_grad();
    return params_.back();
  }
  Parameter<T>& get(const std::string& name) {
    auto it = index_.find(name);
    AVSEP_REQUIRE(it != index_.end(), InvalidArgument, "unknown parameter " + name);
    return params_[it->second];
  }
  const Parameter<T>& get(const std::string& name) const {
    return const_cast<ParamSet*>(this)->get(name);
  }
  bool contains(const std::string& name) const { return index_.count(name) > 0; }
  std::size_t size() const { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }
  std::size_t num_scalars() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
    return n;
  }
  /// Copy into a set with another scalar type; names and order preserved.
  template <typename U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

template <typename T>
class Tape;

/// Handle to a node on a Tape.
template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, int id) : tape_(tape), id_(id) {}

  const Matrix<T>& value() const { return tape_->value(id_); }
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  T scalar() const { return value()(0, 0); }
  Tape<T>* tape() const { return tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  bool requires_grad() const { return tape_->requires_grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  int id_ = -1;
};

template <typename T>
class Tape {
 public:
  using Backward = std::function<void(const Matrix<T>& grad_out)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Matrix<T> v) { return push(std::move(v), false, nullptr); }
  Var<T> variable(Matrix<T> v) { return push(std::move(v), true, nullptr); }

  /// Inference mode: parameters bind as constants and nothing is recorded
  /// for the backward sweep.
  void set_grad_enabled(bool on) { grad_enabled_ = on; }
  bool grad_enabled() const { return grad_enabled_; }

  /// Binds a parameter once per tape; later calls return the same node.
  Var<T> parameter(Parameter<T>& p) {
    auto it = bound_.find(&p);
    if (it != bound_.end()) return Var<T>(this, it->second);
    Var<T> v = grad_enabled_ ? push(p.value, true, &p) : push(p.value, false, nullptr);
    bound_[&p] = v.id();
    return v;
  }

  /// Records an op result. The closure is dropped when no input needs grad.
  Var<T> record(Matrix<T> value, std::initializer_list<Var<T>> inputs, Backward fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || requires_grad(in.id());
    Var<T> out = push(std::move(value), needs, nullptr);
    if (needs) nodes_[out.id()].backward = std::move(fn);
    return out;
  }

  const Matrix<T>& value(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  /// Gradient accumulated at a node; empty when nothing reached it.
  const Matrix<T>& grad(Var<T> v) const { return nodes_[v.id()].grad; }

  /// Zero-initialized gradient buffer, or nullptr for nodes without grad.
  Matrix<T>* grad_buffer(int id) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return nullptr;
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return &n.grad;
  }

  template <typename Expr>
  void accumulate(int id, const Eigen::MatrixBase<Expr>& g) {
    Node& n = nodes_[id];
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Reverse sweep from a scalar root. Parameter grads are accumulated
  /// into Parameter::grad so several tapes can contribute to one step.
  /// Gradients survive only at leaves (variables and parameters).
  void backward(Var<T> root) {
    AVSEP_REQUIRE(root.rows() == 1 && root.cols() == 1, InvalidArgument,
                  "backward root must be a scalar");
    if (!requires_grad(root.id())) return;
    nodes_[root.id()].grad = Matrix<T>::Ones(1, 1);
    for (int id = root.id(); id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.grad.size() == 0) continue;
      if (n.param != nullptr) {
        if (n.param->grad.size() == 0) n.param->zero_grad();
        n.param->grad += n.grad;
      }
      if (n.backward) {
        n.backward(n.grad);
        // Interior gradients and saved state are dead once propagated.
        n.backward = nullptr;
        n.grad.resize(0, 0);
      }
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix<T> value;
    Matrix<T> grad;
    Backward backward;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
  };

  Var<T> push(Matrix<T> v, bool needs_grad, Parameter<T>* param) {
    nodes_.push_back(Node{std::move(v), {}, nullptr, param, needs_grad});
    return Var<T>(this, static_cast<int>(nodes_.size()) - 1);
  }

  std::deque<Node> nodes_;
  std::unordered_map<const Parameter<T>*, int> bound_;
  bool grad_enabled_ = true;
};

// ---------------------------------------------------------------------------
// Elementwise and linear algebra.

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  AVSEP_REQUIRE(a.cols() == b.rows(), InvalidArgument, "matmul: inner dimension mismatch");
  Tape<T>* t = a.tape();
  Matrix<T> out;
  out.noalias() = a.value() * b.value();
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix<T>& g) {
    if (auto* ga = t->grad_buffer(a.id())) ga->noalias() += g * b.value().transpose();
    if (auto* gb = t->grad_buffer(b.id())) gb->noalias() += a.value().transpose() * g;
  });
}

/// x * w + bias, with the [1 x cols] bias added to every row.
template <typename T>
Var<T> affine(Var<T> x, Var<T> w, Var<T> bias) {
  AVSEP_REQUIRE(x.cols() == w.rows(), InvalidArgument, "affine: inner dimension mismatch");
  AVSEP_REQUIRE(bias.rows() == 1 && bias.cols() == w.cols(), InvalidArgument,
                "affine: bias must be [1 x cols]");
  Tape<T>* t = x.tape();
  Matrix<T> out(x.rows(), w.cols());
  out.rowwise() = bias.value().row(0);
  out.noalias() += x.value() * w.value();
  return t->record(std::move(out), {x, w, bias}, [t, x, w, bias](const Matrix<T>& g) {
    if (auto* gx = t->grad_buffer(x.id())) gx->noalias() += g * w.value().transpose();
    if (auto* gw = t->grad_buffer(w.id())) gw->noalias() += x.value().transpose() * g;
    t->accumulate(bias.id(), g.colwise().sum());
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  Tape<T>* t = a.tape();
  return t->record(a.value().transpose(), {a},
                   [t, a](const Matrix<T>& g) { t->accumulate(a.id(), g.transpose()); });
}

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  AVSEP_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), InvalidArgument,
                "add: shape mismatch");
  Tape<T>* t = a.tape();
  return t->record(a.value() + b.value(), {a, b}, [t, a, b](const Matrix<T>& g) {
    t->accumulate(a.id(), g);
    t->accumulate(b.id(), g);
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  AVSEP_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), InvalidArgument,
                "sub: shape mismatch");
  Tape<T>* t = a.tape();
  return t->record(a.value() - b.value(), {a, b}, [t, a, b](const Matrix<T>& g) {
    t->accumulate(a.id(), g);
    t->accumulate(b.id(), -g);
  });
}

/// Elementwise product.
template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  AVSEP_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), InvalidArgument,
                "mul: shape mismatch");
  Tape<T>* t = a.tape();
  return t->record(a.value().cwiseProduct(b.value()), {a, b}, [t, a, b](const Matrix<T>& g) {
    t->accumulate(a.id(), g.cwiseProduct(b.value()));
    t->accumulate(b.id(), g.cwiseProduct(a.value()));
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  Tape<T>* t = a.tape();
  return t->record(a.value() * s, {a},
                   [t, a, s](const Matrix<T>& g) { t->accumulate(a.id(), g * s); });
}

/// a + 1 * bias, bias is [1 x cols].
template <typename T>
Var<T> add_row(Var<T> a, Var<T> bias) {
  AVSEP_REQUIRE(bias.rows() == 1 && bias.cols() == a.cols(), InvalidArgument,
                "add_row: bias must be [1 x cols]");
  Tape<T>* t = a.tape();
  Matrix<T> out = a.value();
  out.rowwise() += bias.value().row(0);
  return t->record(std::move(out), {a, bias}, [t, a, bias](const Matrix<T>& g) {
    t->accumulate(a.id(), g);
    t->accumulate(bias.id(), g.colwise().sum());
  });
}

template <typename T>
Var<T> relu(Var<T> a) {
  Tape<T>* t = a.tape();
  return t->record(a.value().cwiseMax(T(0)), {a}, [t, a](const Matrix<T>& g) {
    t->accumulate(a.id(), (a.value().array() > T(0)).select(g, T(0)));
  });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  Tape<T>* t = a.tape();
  Matrix<T> y = (T(1) / (T(1) + (-a.value().array()).exp())).matrix();
  const int out_id = static_cast<int>(t->size());
  return t->record(std::move(y), {a}, [t, a, out_id](const Matrix<T>& g) {
    const auto& yv = t->value(out_id);
    t->accumulate(a.id(), (g.array() * yv.array() * (T(1) - yv.array())).matrix());
  });
}

/// log(max(a, floor)); no gradient where clamped.
template <typename T>
Var<T> log_floor(Var<T> a, T floor) {
  Tape<T>* t = a.tape();
  Matrix<T> out = a.value().cwiseMax(floor).array().log().matrix();
  return t->record(std::move(out), {a}, [t, a, floor](const Matrix<T>& g) {
    t->accumulate(a.id(),
                  (a.value().array() > floor).select(g.array() / a.value().array(), T(0)).matrix());
  });
}

template <typename T>
Var<T> square(Var<T> a) {
  Tape<T>* t = a.tape();
  return t->record(a.value().cwiseAbs2(), {a}, [t, a](const Matrix<T>& g) {
    t->accumulate(a.id(), T(2) * g.cwiseProduct(a.value()));
  });
}

template <typename T>
Var<T> sum(Var<T> a) {
  Tape<T>* t = a.tape();
  Matrix<T> out(1, 1);
  out(0, 0) = a.value().sum();
  return t->record(std::move(out), {a}, [t, a](const Matrix<T>& g) {
    t->accumulate(a.id(), Matrix<T>::Constant(a.rows(), a.cols(), g(0, 0)));
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  return scale(sum(a), T(1) / static_cast<T>(a.value().size()));
}

/// Same data, new row-major shape.
template <typename T>
Var<T> reshape(Var<T> a, Eigen::Index rows, Eigen::Index cols) {
  AVSEP_REQUIRE(rows * cols == a.value().size(), InvalidArgument, "reshape: size mismatch");
  Tape<T>* t = a.tape();
  Matrix<T> out = Eigen::Map<const Matrix<T>>(a.value().data(), rows, cols);
  return t->record(std::move(out), {a}, [t, a](const Matrix<T>& g) {
    t->accumulate(a.id(), Eigen::Map<const Matrix<T>>(g.data(), a.rows(), a.cols()));
  });
}

template <typename T>
Var<T> concat_cols(Var<T> a, Var<T> b) {
  AVSEP_REQUIRE(a.rows() == b.rows(), InvalidArgument, "concat_cols: row mismatch");
  Tape<T>* t = a.tape();
  Matrix<T> out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  return t->record(std::move(out), {a, b}, [t, a, b](const Matrix<T>& g) {
    t->accumulate(a.id(), g.leftCols(a.cols()));
    t->accumulate(b.id(), g.rightCols(b.cols()));
  });
}

// ---------------------------------------------------------------------------
// Index-driven row movement.

/// out[i] = a[index[i]], or a zero row where index[i] < 0.
template <typename T>
Var<T> gather_rows(Var<T> a, std::shared_ptr<const std::vector<int>> index) {
  Tape<T>* t = a.tape();
  const auto& idx = *index;
  Matrix<T> out(static_cast<Eigen::Index>(idx.size()), a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0) {
      out.row(i).setZero();
    } else {
      out.row(i) = a.value().row(idx[i]);
    }
  }
  return t->record(std::move(out), {a}, [t, a, index](const Matrix<T>& g) {
    Matrix<T>* ga = t->grad_buffer(a.id());
    if (!ga) return;
    const auto& ix = *index;
    for (std::size_t i = 0; i < ix.size(); ++i) {
      if (ix[i] >= 0) ga->row(ix[i]) += g.row(i);
    }
  });
}

/// out[index[i]] += weight[i] * a[i]; rows with index < 0 are dropped.
template <typename T>
Var<T> scatter_rows(Var<T> a, std::shared_ptr<const std::vector<int>> index,
                    std::shared_ptr<const std::vector<T>> weight, Eigen::Index out_rows) {
  Tape<T>* t = a.tape();
  const auto& idx = *index;
  const auto& w = *weight;
  Matrix<T> out = Matrix<T>::Zero(out_rows, a.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] >= 0) out.row(idx[i]) += w[i] * a.value().row(i);
  }
  return t->record(std::move(out), {a}, [t, a, index, weight](const Matrix<T>& g) {
    Matrix<T>* ga = t->grad_buffer(a.id());
    if (!ga) return;
    const auto& ix = *index;
    const auto& wt = *weight;
    for (std::size_t i = 0; i < ix.size(); ++i) {
      if (ix[i] >= 0) ga->row(i) += wt[i] * g.row(ix[i]);
    }
  });
}

/// Frames a [1 x L] signal: out(f, j) = x[offset + f * hop + j], zero outside.
template <typename T>
Var<T> frame_signal(Var<T> x, int frame_len, int hop, int n_frames, int offset) {
  AVSEP_REQUIRE(x.rows() == 1, InvalidArgument, "frame_signal: expects a [1 x L] row");
  Tape<T>* t = x.tape();
  const Eigen::Index len = x.cols();
  Matrix<T> out = Matrix<T>::Zero(n_frames, frame_len);
  for (int f = 0; f < n_frames; ++f) {
    for (int j = 0; j < frame_len; ++j) {
      const Eigen::Index s = offset + static_cast<Eigen::Index>(f) * hop + j;
      if (s >= 0 && s < len) out(f, j) = x.value()(0, s);
    }
  }
  return t->record(std::move(out), {x}, [t, x, frame_len, hop, n_frames, offset](const Matrix<T>& g) {
    Matrix<T>* gx = t->grad_buffer(x.id());
    if (!gx) return;
    const Eigen::Index n = x.cols();
    for (int f = 0; f < n_frames; ++f) {
      for (int j = 0; j < frame_len; ++j) {
        const Eigen::Index s = offset + static_cast<Eigen::Index>(f) * hop + j;
        if (s >= 0 && s < n) (*gx)(0, s) += g(f, j);
      }
    }
  });
}

/// Adjoint of frame_signal: sums frames back into a [1 x out_len] signal.
template <typename T>
Var<T> overlap_add(Var<T> frames, int hop, Eigen::Index out_len, int offset) {
  Tape<T>* t = frames.tape();
  const int n_frames = static_cast<int>(frames.rows());
  const int frame_len = static_cast<int>(frames.cols());
  Matrix<T> out = Matrix<T>::Zero(1, out_len);
  for (int f = 0; f < n_frames; ++f) {
    for (int j = 0; j < frame_len; ++j) {
      const Eigen::Index s = offset + static_cast<Eigen::Index>(f) * hop + j;
      if (s >= 0 && s < out_len) out(0, s) += frames.value()(f, j);
    }
  }
  return t->record(std::move(out), {frames}, [t, frames, hop, offset](const Matrix<T>& g) {
    Matrix<T>* gf = t->grad_buffer(frames.id());
    if (!gf) return;
    const Eigen::Index n = g.cols();
    for (Eigen::Index f = 0; f < gf->rows(); ++f) {
      for (Eigen::Index j = 0; j < gf->cols(); ++j) {
        const Eigen::Index s = offset + f * hop + j;
        if (s >= 0 && s < n) (*gf)(f, j) += g(0, s);
      }
    }
  });
}

/// Stacks a centered window of `kernel` neighbouring rows into each row:
/// out(t, j * C + c) = x(t + j - kernel / 2, c), zero outside. A [C*kernel x
/// C_out] matmul on the result is a same-padded 1-D convolution.
template <typename T>
Var<T> conv_context(Var<T> x, int kernel) {
  Tape<T>* t = x.tape();
  const Eigen::Index rows = x.rows();
  const Eigen::Index ch = x.cols();
  const int half = kernel / 2;
  Matrix<T> out = Matrix<T>::Zero(rows, ch * kernel);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (int j = 0; j < kernel; ++j) {
      const Eigen::Index src = r + j - half;
      if (src >= 0 && src < rows) out.row(r).segment(j * ch, ch) = x.value().row(src);
    }
  }
  return t->record(std::move(out), {x}, [t, x, kernel, half](const Matrix<T>& g) {
    Matrix<T>* gx = t->grad_buffer(x.id());
    if (!gx) return;
    const Eigen::Index n = gx->rows();
    const Eigen::Index c = gx->cols();
    for (Eigen::Index r = 0; r < n; ++r) {
      for (int j = 0; j < kernel; ++j) {
        const Eigen::Index src = r + j - half;
        if (src >= 0 && src < n) gx->row(src) += g.row(r).segment(j * c, c);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// Fused layers.

/// Row-wise layer normalization with affine [1 x d] gain and bias.
template <typename T>
Var<T> layer_norm(Var<T> x, Var<T> gamma, Var<T> beta, T eps = T(1e-5)) {
  Tape<T>* t = x.tape();
  const Eigen::Index d = x.cols();
  const auto& xv = x.value();
  Matrix<T> xhat(x.rows(), d);
  Eigen::Matrix<T, Eigen::Dynamic, 1> inv_std(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const T mu = xv.row(r).mean();
    const T var = (xv.row(r).array() - mu).square().mean();
    inv_std(r) = T(1) / std::sqrt(var + eps);
    xhat.row(r) = (xv.row(r).array() - mu) * inv_std(r);
  }
  Matrix<T> out = xhat.array().rowwise() * gamma.value().row(0).array();
  out.rowwise() += beta.value().row(0);
  auto saved = std::make_shared<std::pair<Matrix<T>, Eigen::Matrix<T, Eigen::Dynamic, 1>>>(
      std::move(xhat), std::move(inv_std));
  return t->record(std::move(out), {x, gamma, beta}, [t, x, gamma, beta, saved](const Matrix<T>& g) {
    const auto& xh = saved->first;
    const auto& istd = saved->second;
    t->accumulate(gamma.id(), g.cwiseProduct(xh).colwise().sum());
    t->accumulate(beta.id(), g.colwise().sum());
    if (Matrix<T>* gx = t->grad_buffer(x.id())) {
      const T n = static_cast<T>(xh.cols());
      Matrix<T> dxh = g.array().rowwise() * gamma.value().row(0).array();
      for (Eigen::Index r = 0; r < xh.rows(); ++r) {
        const T m1 = dxh.row(r).sum() / n;
        const T m2 = dxh.row(r).dot(xh.row(r)) / n;
        gx->row(r).array() += istd(r) * (dxh.row(r).array() - m1 - xh.row(r).array() * m2);
      }
    }
  });
}

/// Blockwise multi-head scaled dot-product attention without projections.
///
/// Rows of q are split into `blocks` equal groups, rows of k and v likewise;
/// block b of q attends only to block b of k/v. Columns are split into
/// `heads` equal slices. Softmax runs over the key rows of each block.
template <typename T>
Var<T> attention(Var<T> q, Var<T> k, Var<T> v, int blocks = 1, int heads = 1) {
  AVSEP_REQUIRE(q.cols() == k.cols() && k.cols() == v.cols(), InvalidArgument,
                "attention: feature dimension mismatch");
  AVSEP_REQUIRE(k.rows() == v.rows(), InvalidArgument, "attention: key/value length mismatch");
  AVSEP_REQUIRE(blocks >= 1 && q.rows() % blocks == 0 && k.rows() % blocks == 0, InvalidArgument,
                "attention: rows not divisible into blocks");
  AVSEP_REQUIRE(heads >= 1 && q.cols() % heads == 0, InvalidArgument,
                "attention: dimension not divisible by heads");
  Tape<T>* t = q.tape();
  const Eigen::Index lq = q.rows() / blocks;
  const Eigen::Index lk = k.rows() / blocks;
  const Eigen::Index dh = q.cols() / heads;
  const T sc = T(1) / std::sqrt(static_cast<T>(dh));
  const auto& Q = q.value();
  const auto& K = k.value();
  const auto& V = v.value();

  auto probs = std::make_shared<std::vector<Matrix<T>>>(static_cast<std::size_t>(blocks) * heads);
  Matrix<T> out(q.rows(), v.cols());
  for (int b = 0; b < blocks; ++b) {
    for (int h = 0; h < heads; ++h) {
      Matrix<T>& p = (*probs)[static_cast<std::size_t>(b) * heads + h];
      p.noalias() = Q.block(b * lq, h * dh, lq, dh) * K.block(b * lk, h * dh, lk, dh).transpose();
      // Row loops keep the exp vectorized; broadcast expressions do not.
      for (Eigen::Index r = 0; r < lq; ++r) {
        auto row = p.row(r);
        const T m = row.maxCoeff();
        row = ((row.array() - m) * sc).exp();
        row *= T(1) / row.sum();
      }
      out.block(b * lq, h * dh, lq, dh).noalias() = p * V.block(b * lk, h * dh, lk, dh);
    }
  }
  return t->record(std::move(out), {q, k, v},
                   [t, q, k, v, probs, blocks, heads, lq, lk, dh, sc](const Matrix<T>& g) {
    Matrix<T>* gq = t->grad_buffer(q.id());
    Matrix<T>* gk = t->grad_buffer(k.id());
    Matrix<T>* gv = t->grad_buffer(v.id());
    const auto& Qv = q.value();
    const auto& Kv = k.value();
    const auto& Vv = v.value();
    Matrix<T> dp;
    for (int b = 0; b < blocks; ++b) {
      for (int h = 0; h < heads; ++h) {
        const Matrix<T>& p = (*probs)[static_cast<std::size_t>(b) * heads + h];
        auto go = g.block(b * lq, h * dh, lq, dh);
        if (gv) gv->block(b * lk, h * dh, lk, dh).noalias() += p.transpose() * go;
        if (!gq && !gk) continue;
        dp.noalias() = go * Vv.block(b * lk, h * dh, lk, dh).transpose();
        for (Eigen::Index r = 0; r < lq; ++r) {
          auto row = dp.row(r);
          const T rs = row.dot(p.row(r));
          row = (p.row(r).array() * (row.array() - rs) * sc).matrix();
        }
        if (gq) gq->block(b * lq, h * dh, lq, dh).noalias() += dp * Kv.block(b * lk, h * dh, lk, dh);
        if (gk) gk->block(b * lk, h * dh, lk, dh).noalias() += dp.transpose() * Qv.block(b * lq, h * dh, lq, dh);
      }
    }
  });
}

/// Divides each row by max(||row||, eps).
template <typename T>
Var<T> row_normalize(Var<T> a, T eps = T(1e-12)) {
  Tape<T>* t = a.tape();
  Eigen::Matrix<T, Eigen::Dynamic, 1> r = a.value().rowwise().norm().cwiseMax(eps);
  Matrix<T> y = a.value().array().colwise() / r.array();
  auto saved = std::make_shared<std::pair<Matrix<T>, Eigen::Matrix<T, Eigen::Dynamic, 1>>>(y, r);
  return t->record(std::move(y), {a}, [t, a, saved, eps](const Matrix<T>& g) {
    Matrix<T>* ga = t->grad_buffer(a.id());
    if (!ga) return;
    const auto& yv = saved->first;
    const auto& rv = saved->second;
    for (Eigen::Index i = 0; i < yv.rows(); ++i) {
      if (a.value().row(i).norm() > eps) {
        ga->row(i) += (g.row(i) - yv.row(i) * g.row(i).dot(yv.row(i))) / rv(i);
      } else {
        ga->row(i) += g.row(i) / rv(i);
      }
    }
  });
}

/// Mean over rows of ||a_i - b_i||_2, as a [1 x 1] value.
template <typename T>
Var<T> mean_row_distance(Var<T> a, Var<T> b) {
  AVSEP_REQUIRE(a.rows() == b.rows() && a.cols() == b.cols(), InvalidArgument,
                "mean_row_distance: shape mismatch");
  Tape<T>* t = a.tape();
  Matrix<T> diff = a.value() - b.value();
  Eigen::Matrix<T, Eigen::Dynamic, 1> dist = diff.rowwise().norm();
  Matrix<T> out(1, 1);
  out(0, 0) = dist.mean();
  auto saved = std::make_shared<std::pair<Matrix<T>, Eigen::Matrix<T, Eigen::Dynamic, 1>>>(
      std::move(diff), std::move(dist));
  return t->record(std::move(out), {a, b}, [t, a, b, saved](const Matrix<T>& g) {
    const auto& df = saved->first;
    const auto& ds = saved->second;
    Matrix<T> gd = Matrix<T>::Zero(df.rows(), df.cols());
    const T w = g(0, 0) / static_cast<T>(df.rows());
    for (Eigen::Index i = 0; i < df.rows(); ++i) {
      if (ds(i) > T(0)) gd.row(i) = df.row(i) * (w / ds(i));
    }
    t->accumulate(a.id(), gd);
    t->accumulate(b.id(), -gd);
  });
}

}  // namespace avsep::ag
