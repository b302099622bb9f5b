#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "minaf/common/error.hpp"
#include "minaf/nn/kernel.hpp"

namespace minaf::nn {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// A named trainable matrix with its gradient accumulator.
template <typename T>
struct Param {
  std::string name;
  Mat<T> value;
  Mat<T> grad;

  Param(std::string n, Mat<T> v) : name(std::move(n)), value(std::move(v)), grad(Mat<T>::Zero(value.rows(), value.cols())) {}
  std::size_t size() const { return static_cast<std::size_t>(value.size()); }
};

/// Owns parameters in registration order; pointers stay valid for its lifetime.
template <typename T>
class ParamSet {
 public:
  Param<T>& add(std::string name, Mat<T> value) {
    for (const auto& p : params_) require(p->name != name, "ParamSet: duplicate parameter " + name);
    params_.push_back(std::make_unique<Param<T>>(std::move(name), std::move(value)));
    return *params_.back();
  }
  std::size_t size() const { return params_.size(); }
  Param<T>& operator[](std::size_t i) { return *params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return *params_[i]; }
  Param<T>* find(const std::string& name) {
    for (auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  const Param<T>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p->name == name) return p.get();
    }
    return nullptr;
  }
  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }
  void zero_grad() {
    for (auto& p : params_) p->grad.setZero();
  }

 private:
  std::vector<std::unique_ptr<Param<T>>> params_;
};

/// Handle to a tape node.
struct Var {
  int id = -1;
};

/// Reverse-mode tape over row-major matrices. A tape records one forward
/// pass; backward() propagates from a 1x1 node and accumulates into the
/// gradients of the parameters used.
template <typename T>
class Tape {
 public:
  using M = Mat<T>;

  /// With track_params false, parameters enter as constants and no backward
  /// closures are recorded (inference).
  explicit Tape(bool track_params = true) : track_(track_params) {}

  Var param(Param<T>& p) {
    Node& n = push(nullptr, track_);
    n.ref = &p.value;
    n.param = &p;
    return last();
  }
  Var constant(M value) {
    Node& n = push(nullptr, false);
    n.own = std::move(value);
    return last();
  }

  const M& value(Var v) const { return node(v).val(); }
  const M& grad(Var v) const { return node(v).grad; }
  std::size_t size() const { return nodes_.size(); }

  /// x (n x in) times w^T (w is out x in) plus bias row b (1 x out).
  Var affine(Var x, Var w, Var b) {
    const M& xv = value(x);
    const M& wv = value(w);
    const M& bv = value(b);
    require(xv.cols() == wv.cols() && bv.rows() == 1 && bv.cols() == wv.rows(), "affine: shape mismatch");
    const auto packed = PackedAffine<T>::pack(wv.data(), bv.data(), static_cast<std::size_t>(wv.rows()),
                                              static_cast<std::size_t>(wv.cols()));
    M y(xv.rows(), wv.rows());
    affine_forward(packed, xv.data(), static_cast<std::size_t>(xv.rows()), y.data());
    return record(std::move(y), {x, w, b}, [x, w, b](Tape& t, const M& g) {
      if (t.wants(x)) t.acc(x, g * t.value(w));
      if (t.wants(w)) t.acc(w, g.transpose() * t.value(x));
      if (t.wants(b)) t.acc(b, g.colwise().sum());
    });
  }

  Var matmul(Var a, Var b) {
    require(value(a).cols() == value(b).rows(), "matmul: shape mismatch");
    M y = value(a) * value(b);
    return record(std::move(y), {a, b}, [a, b](Tape& t, const M& g) {
      if (t.wants(a)) t.acc(a, g * t.value(b).transpose());
      if (t.wants(b)) t.acc(b, t.value(a).transpose() * g);
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    require(value(a).cols() == value(b).cols(), "matmul_nt: shape mismatch");
    M y = value(a) * value(b).transpose();
    return record(std::move(y), {a, b}, [a, b](Tape& t, const M& g) {
      if (t.wants(a)) t.acc(a, g * t.value(b));
      if (t.wants(b)) t.acc(b, g.transpose() * t.value(a));
    });
  }

  Var add(Var a, Var b) {
    require(same_shape(a, b), "add: shape mismatch");
    M y = value(a) + value(b);
    return record(std::move(y), {a, b}, [a, b](Tape& t, const M& g) {
      if (t.wants(a)) t.acc(a, g);
      if (t.wants(b)) t.acc(b, g);
    });
  }

  /// x (n x m) plus row vector b (1 x m) broadcast over rows.
  Var add_row(Var x, Var b) {
    require(value(b).rows() == 1 && value(b).cols() == value(x).cols(), "add_row: shape mismatch");
    M y = value(x).rowwise() + value(b).row(0);
    return record(std::move(y), {x, b}, [x, b](Tape& t, const M& g) {
      if (t.wants(x)) t.acc(x, g);
      if (t.wants(b)) t.acc(b, g.colwise().sum());
    });
  }

  Var mul(Var a, Var b) {
    require(same_shape(a, b), "mul: shape mismatch");
    M y = value(a).cwiseProduct(value(b));
    return record(std::move(y), {a, b}, [a, b](Tape& t, const M& g) {
      if (t.wants(a)) t.acc(a, g.cwiseProduct(t.value(b)));
      if (t.wants(b)) t.acc(b, g.cwiseProduct(t.value(a)));
    });
  }

  Var scale(Var a, T k) {
    M y = value(a) * k;
    return record(std::move(y), {a}, [a, k](Tape& t, const M& g) { t.acc(a, g * k); });
  }

  /// Subgradient 0 at 0.
  Var relu(Var a) {
    M y = value(a);
    T* d = y.data();
    for (Eigen::Index i = 0; i < y.size(); ++i) d[i] = d[i] > T(0) ? d[i] : T(0);
    return record(std::move(y), {a}, [a](Tape& t, const M& g) {
      M m = g;
      const T* x = t.value(a).data();
      for (Eigen::Index i = 0; i < m.size(); ++i) {
        if (!(x[i] > T(0))) m.data()[i] = T(0);
      }
      t.acc(a, m);
    });
  }

  Var tanh(Var a) {
    M y = value(a);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = std::tanh(y.data()[i]);
    const int out = static_cast<int>(nodes_.size());
    return record(std::move(y), {a}, [a, out](Tape& t, const M& g) {
      const M& yv = t.nodes_[static_cast<std::size_t>(out)]->val();
      t.acc(a, g.cwiseProduct((M::Ones(yv.rows(), yv.cols()) - yv.cwiseProduct(yv)).eval()));
    });
  }

  Var exp(Var a) {
    M y = value(a);
    for (Eigen::Index i = 0; i < y.size(); ++i) y.data()[i] = std::exp(y.data()[i]);
    const int out = static_cast<int>(nodes_.size());
    return record(std::move(y), {a}, [a, out](Tape& t, const M& g) {
      t.acc(a, g.cwiseProduct(t.nodes_[static_cast<std::size_t>(out)]->val()));
    });
  }

  /// Horizontal concatenation; all parts share the row count.
  Var concat_cols(const std::vector<Var>& parts) {
    require(!parts.empty(), "concat_cols: no inputs");
    const Eigen::Index rows = value(parts[0]).rows();
    Eigen::Index cols = 0;
    for (Var p : parts) {
      require(value(p).rows() == rows, "concat_cols: row mismatch");
      cols += value(p).cols();
    }
    M y(rows, cols);
    Eigen::Index c = 0;
    for (Var p : parts) {
      y.middleCols(c, value(p).cols()) = value(p);
      c += value(p).cols();
    }
    return record(std::move(y), parts, [parts](Tape& t, const M& g) {
      Eigen::Index c0 = 0;
      for (Var p : parts) {
        const Eigen::Index w = t.value(p).cols();
        if (t.wants(p)) t.acc(p, g.middleCols(c0, w));
        c0 += w;
      }
    });
  }

  /// Row i of the result is row idx[i] of x.
  Var gather_rows(Var x, std::vector<int> idx) {
    const M& xv = value(x);
    M y(static_cast<Eigen::Index>(idx.size()), xv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      require(idx[i] >= 0 && idx[i] < xv.rows(), "gather_rows: index out of range");
      y.row(static_cast<Eigen::Index>(i)) = xv.row(idx[i]);
    }
    return record(std::move(y), {x}, [x, idx = std::move(idx)](Tape& t, const M& g) {
      M gx = M::Zero(t.value(x).rows(), t.value(x).cols());
      for (std::size_t i = 0; i < idx.size(); ++i) gx.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      t.acc(x, gx);
    });
  }

  /// Repeat the columns of x k times: (n x m) -> (n x k*m).
  Var tile_cols(Var x, int k) {
    require(k >= 1, "tile_cols: repeat count must be positive");
    const M& xv = value(x);
    M y(xv.rows(), xv.cols() * k);
    for (int r = 0; r < k; ++r) y.middleCols(r * xv.cols(), xv.cols()) = xv;
    return record(std::move(y), {x}, [x, k](Tape& t, const M& g) {
      const Eigen::Index m = t.value(x).cols();
      M gx = g.middleCols(0, m);
      for (int r = 1; r < k; ++r) gx += g.middleCols(r * m, m);
      t.acc(x, gx);
    });
  }

  /// Row-major reshape.
  Var reshape(Var x, Eigen::Index rows, Eigen::Index cols) {
    const M& xv = value(x);
    require(rows * cols == xv.size(), "reshape: size mismatch");
    M y = Eigen::Map<const M>(xv.data(), rows, cols);
    return record(std::move(y), {x}, [x](Tape& t, const M& g) {
      t.acc(x, Eigen::Map<const M>(g.data(), t.value(x).rows(), t.value(x).cols()));
    });
  }

  Var transpose(Var x) {
    M y = value(x).transpose();
    return record(std::move(y), {x}, [x](Tape& t, const M& g) { t.acc(x, g.transpose()); });
  }

  /// Identity forward, no gradient flows back.
  Var detach(Var x) { return constant(value(x)); }

  Var mean(Var x) {
    const auto n = static_cast<T>(value(x).size());
    M y(1, 1);
    y(0, 0) = value(x).sum() / n;
    return record(std::move(y), {x}, [x, n](Tape& t, const M& g) {
      t.acc(x, M::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0) / n));
    });
  }

  Var sum(Var x) {
    M y(1, 1);
    y(0, 0) = value(x).sum();
    return record(std::move(y), {x}, [x](Tape& t, const M& g) {
      t.acc(x, M::Constant(t.value(x).rows(), t.value(x).cols(), g(0, 0)));
    });
  }

  /// Sum of absolute values; subgradient 0 at 0.
  Var abs_sum(Var x) {
    M y(1, 1);
    y(0, 0) = value(x).cwiseAbs().sum();
    return record(std::move(y), {x}, [x](Tape& t, const M& g) {
      M s = t.value(x).unaryExpr([](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
      t.acc(x, s * g(0, 0));
    });
  }

  /// mean |x - target| for a constant target.
  Var l1_mean(Var x, const M& target) {
    require(value(x).rows() == target.rows() && value(x).cols() == target.cols(), "l1_mean: shape mismatch");
    const M diff = value(x) - target;
    const auto n = static_cast<T>(diff.size());
    M y(1, 1);
    y(0, 0) = diff.cwiseAbs().sum() / n;
    M sign = diff.unaryExpr([](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
    return record(std::move(y), {x}, [x, n, sign = std::move(sign)](Tape& t, const M& g) {
      t.acc(x, sign * (g(0, 0) / n));
    });
  }

  /// Energy-decay L1 on predicted log magnitudes. Rows of `logmag` are
  /// frames, grouped as n_rirs blocks of n_frames consecutive rows; columns
  /// are frequency bins. Linear magnitude is max(exp(x) - eps, 0); per block
  /// the frame-energy Schroeder curve (dB, floored at floor_db) is compared
  /// with target_edc (n_rirs x n_frames) where the target exceeds
  /// compare_above_db. Returns the mean absolute difference over compared
  /// entries (0 when none).
  Var edc_l1(Var logmag, std::size_t n_rirs, std::size_t n_frames, const M& target_edc, T eps, T floor_db,
             T compare_above_db);

  /// Sum of several 1x1 nodes with weights.
  Var weighted_sum(const std::vector<Var>& terms, const std::vector<T>& weights) {
    require(terms.size() == weights.size() && !terms.empty(), "weighted_sum: size mismatch");
    M y = M::Zero(1, 1);
    for (std::size_t i = 0; i < terms.size(); ++i) {
      require(value(terms[i]).size() == 1, "weighted_sum: terms must be scalar");
      y(0, 0) += weights[i] * value(terms[i])(0, 0);
    }
    return record(std::move(y), terms, [terms, weights](Tape& t, const M& g) {
      for (std::size_t i = 0; i < terms.size(); ++i) {
        if (t.wants(terms[i])) t.acc(terms[i], M::Constant(1, 1, g(0, 0) * weights[i]));
      }
    });
  }

  /// Seeds d(root)/d(root) = 1 and runs the recorded closures in reverse,
  /// adding into Param::grad.
  void backward(Var root) {
    require(value(root).size() == 1, "backward: root must be a scalar");
    for (auto& n : nodes_) {
      if (n->needs_grad) n->grad = M::Zero(n->val().rows(), n->val().cols());
    }
    Node& r = *nodes_[static_cast<std::size_t>(root.id)];
    if (!r.needs_grad) return;
    r.grad(0, 0) = T(1);
    for (std::size_t i = static_cast<std::size_t>(root.id) + 1; i-- > 0;) {
      Node& n = *nodes_[i];
      if (!n.needs_grad) continue;
      if (n.backward) n.backward(*this, n.grad);
      if (n.param != nullptr) n.param->grad += n.grad;
    }
  }

 private:
  using Backward = std::function<void(Tape&, const M&)>;

  struct Node {
    M own;
    const M* ref = nullptr;
    Param<T>* param = nullptr;
    bool needs_grad = false;
    M grad;
    Backward backward;
    const M& val() const { return ref != nullptr ? *ref : own; }
  };

  Node& node(Var v) const {
    require(v.id >= 0 && static_cast<std::size_t>(v.id) < nodes_.size(), "Tape: invalid variable");
    return *nodes_[static_cast<std::size_t>(v.id)];
  }
  bool same_shape(Var a, Var b) const {
    return value(a).rows() == value(b).rows() && value(a).cols() == value(b).cols();
  }
  bool wants(Var v) const { return node(v).needs_grad; }
  template <typename Expr>
  void acc(Var v, const Expr& g) {
    node(v).grad += g;
  }
  Node& push(Backward fn, bool needs_grad) {
    auto n = std::make_unique<Node>();
    n->backward = std::move(fn);
    n->needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return *nodes_.back();
  }
  Var last() const { return Var{static_cast<int>(nodes_.size()) - 1}; }
  Var record(M value, const std::vector<Var>& inputs, Backward fn) {
    bool needs = false;
    for (Var v : inputs) needs = needs || wants(v);
    Node& n = push(needs ? std::move(fn) : Backward{}, needs);
    n.own = std::move(value);
    return last();
  }

  bool track_ = true;
  std::vector<std::unique_ptr<Node>> nodes_;
};

template <typename T>
Var Tape<T>::edc_l1(Var logmag, std::size_t n_rirs, std::size_t n_frames, const M& target_edc, T eps, T floor_db,
                    T compare_above_db) {
  const M& x = value(logmag);
  require(static_cast<std::size_t>(x.rows()) == n_rirs * n_frames, "edc_l1: row count must be n_rirs * n_frames");
  require(static_cast<std::size_t>(target_edc.rows()) == n_rirs &&
              static_cast<std::size_t>(target_edc.cols()) == n_frames,
          "edc_l1: target shape mismatch");
  const T db = T(10) / std::log(T(10));
  // Per-entry dL/dEDC (sign / count); computed in forward, applied in backward.
  M dedc = M::Zero(static_cast<Eigen::Index>(n_rirs), static_cast<Eigen::Index>(n_frames));
  M energy(static_cast<Eigen::Index>(n_rirs), static_cast<Eigen::Index>(n_frames));
  M tail(static_cast<Eigen::Index>(n_rirs), static_cast<Eigen::Index>(n_frames));
  M pred(static_cast<Eigen::Index>(n_rirs), static_cast<Eigen::Index>(n_frames));
  for (std::size_t b = 0; b < n_rirs; ++b) {
    for (std::size_t t = 0; t < n_frames; ++t) {
      T e = 0;
      const auto row = x.row(static_cast<Eigen::Index>(b * n_frames + t));
      for (Eigen::Index f = 0; f < row.size(); ++f) {
        const T m = std::exp(row(f)) - eps;
        if (m > T(0)) e += m * m;
      }
      energy(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = e;
    }
    T acc_e = 0;
    for (std::size_t t = n_frames; t-- > 0;) {
      acc_e += energy(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t));
      tail(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) = acc_e;
    }
    for (std::size_t t = 0; t < n_frames; ++t) {
      const T tl = tail(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t));
      pred(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(t)) =
          (acc_e > T(0) && tl > T(0)) ? std::max(floor_db, db * std::log(tl / acc_e)) : floor_db;
    }
  }
  std::size_t count = 0;
  T total = 0;
  for (Eigen::Index i = 0; i < target_edc.size(); ++i) {
    if (target_edc.data()[i] > compare_above_db) {
      ++count;
      total += std::abs(pred.data()[i] - target_edc.data()[i]);
    }
  }
  M y(1, 1);
  y(0, 0) = count > 0 ? total / static_cast<T>(count) : T(0);
  for (Eigen::Index i = 0; i < target_edc.size(); ++i) {
    if (target_edc.data()[i] > compare_above_db && count > 0) {
      const T d = pred.data()[i] - target_edc.data()[i];
      dedc.data()[i] = (d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0))) / static_cast<T>(count);
    }
  }
  return record(std::move(y), {logmag},
                [logmag, n_rirs, n_frames, eps, floor_db, db, dedc = std::move(dedc), tail = std::move(tail),
                 pred = std::move(pred)](Tape& tp, const M& g) {
                  const M& xv = tp.value(logmag);
                  M gx = M::Zero(xv.rows(), xv.cols());
                  for (std::size_t b = 0; b < n_rirs; ++b) {
                    const auto bi = static_cast<Eigen::Index>(b);
                    const T total_e = tail(bi, 0);
                    if (!(total_e > T(0))) continue;
                    // dL/dE_s = sum_t dedc_t * db * (1[s >= t] / tail_t - 1 / total)
                    T prefix = 0;  // sum over t <= s of dedc_t / tail_t
                    T all = 0;     // sum over t of dedc_t
                    for (std::size_t t = 0; t < n_frames; ++t) {
                      const auto ti = static_cast<Eigen::Index>(t);
                      if (pred(bi, ti) > floor_db) all += dedc(bi, ti);
                    }
                    for (std::size_t s = 0; s < n_frames; ++s) {
                      const auto si = static_cast<Eigen::Index>(s);
                      if (pred(bi, si) > floor_db) prefix += dedc(bi, si) / tail(bi, si);
                      const T de = g(0, 0) * db * (prefix - all / total_e);
                      if (de == T(0)) continue;
                      const Eigen::Index r = static_cast<Eigen::Index>(b * n_frames + s);
                      for (Eigen::Index f = 0; f < xv.cols(); ++f) {
                        const T ex = std::exp(xv(r, f));
                        const T m = ex - eps;
                        if (m > T(0)) gx(r, f) = de * T(2) * m * ex;
                      }
                    }
                  }
                  tp.acc(logmag, gx);
                });
}

}  // namespace minaf::nn
