#pragma once

#include <Eigen/Dense>
#include <functional>

#include "mape/common.hpp"

namespace mape {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

// A named weight matrix. Gradients accumulate into `grad` across backward
// passes until the owner clears them.
template <typename Scalar>
struct Param {
  std::string name;
  Mat<Scalar> value;
  Mat<Scalar> grad;
  bool trainable = true;

  Param() = default;
  Param(std::string n, Mat<Scalar> v)
      : name(std::move(n)),
        value(std::move(v)),
        grad(Mat<Scalar>::Zero(value.rows(), value.cols())) {}

  void zero_grad() { grad.setZero(); }
};

// Reverse-mode tape over dense matrices. Activations live in column-major
// layout with one sequence position per column. The tape is rebuilt per
// forward pass and reused via reset() to keep allocations stable. All
// computation is single-threaded and deterministic.
template <typename Scalar>
class Tape {
 public:
  using M = Mat<Scalar>;

  struct Node {
    M value;
    M grad;
    bool has_grad = false;
    Param<Scalar>* bound = nullptr;  // set for parameter leaves
    std::function<void(Tape&, int)> backward;
  };

  void reset() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }
  const M& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

  // Accumulates upstream gradient into a node, allocating lazily.
  void add_grad(int id, const M& g) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (!n.has_grad) {
      n.grad = g;
      n.has_grad = true;
    } else {
      n.grad += g;
    }
  }
  const M& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].has_grad; }

  // ---- graph construction -------------------------------------------------

  int constant(M v) { return push(std::move(v), nullptr, {}); }

  int leaf(Param<Scalar>& p) {
    return push(p.value, &p, {});
  }

  int matmul(int a, int b) {
    M v = value(a) * value(b);
    return push(std::move(v), nullptr, [a, b](Tape& t, int self) {
      const M& g = t.grad(self);
      t.add_grad(a, g * t.value(b).transpose());
      t.add_grad(b, t.value(a).transpose() * g);
    });
  }

  int add(int a, int b) {
    M v = value(a) + value(b);
    return push(std::move(v), nullptr, [a, b](Tape& t, int self) {
      t.add_grad(a, t.grad(self));
      t.add_grad(b, t.grad(self));
    });
  }

  // Broadcast-add a column vector across every column of a.
  int add_colvec(int a, int bias) {
    M v = value(a).colwise() + Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(
                                   value(bias).col(0));
    return push(std::move(v), nullptr, [a, bias](Tape& t, int self) {
      const M& g = t.grad(self);
      t.add_grad(a, g);
      t.add_grad(bias, g.rowwise().sum());
    });
  }

  int scale(int a, Scalar c) {
    M v = value(a) * c;
    return push(std::move(v), nullptr, [a, c](Tape& t, int self) {
      t.add_grad(a, t.grad(self) * c);
    });
  }

  int hadamard(int a, int b) {
    M v = value(a).cwiseProduct(value(b));
    return push(std::move(v), nullptr, [a, b](Tape& t, int self) {
      const M& g = t.grad(self);
      t.add_grad(a, g.cwiseProduct(t.value(b)));
      t.add_grad(b, g.cwiseProduct(t.value(a)));
    });
  }

  int relu(int a) {
    M v = value(a).cwiseMax(Scalar(0));
    return push(std::move(v), nullptr, [a](Tape& t, int self) {
      const M mask =
          (t.value(a).array() > Scalar(0)).template cast<Scalar>().matrix();
      t.add_grad(a, t.grad(self).cwiseProduct(mask));
    });
  }

  // Column-wise softmax (each column is a distribution), numerically
  // stabilized by subtracting the column maximum.
  int softmax_cols(int a) {
    M v = value(a);
    for (Eigen::Index c = 0; c < v.cols(); ++c) {
      auto col = v.col(c);
      const Scalar mx = col.maxCoeff();
      col = (col.array() - mx).exp();
      col /= col.sum();
    }
    return push(std::move(v), nullptr, [a](Tape& t, int self) {
      const M& s = t.value(self);
      const M& g = t.grad(self);
      M out(s.rows(), s.cols());
      for (Eigen::Index c = 0; c < s.cols(); ++c) {
        const Scalar dot = g.col(c).dot(s.col(c));
        out.col(c) =
            s.col(c).cwiseProduct(g.col(c) - M::Constant(s.rows(), 1, dot));
      }
      t.add_grad(a, out);
    });
  }

  // Layer normalization over the feature dimension (rows) of each column,
  // with learned gain and bias vectors.
  int layer_norm(int x, int gamma, int beta, Scalar eps = Scalar(1e-5)) {
    const M& xv = value(x);
    const auto d = xv.rows();
    M xhat(xv.rows(), xv.cols());
    M inv_sd(1, xv.cols());
    for (Eigen::Index c = 0; c < xv.cols(); ++c) {
      const Scalar mu = xv.col(c).mean();
      const Scalar var =
          (xv.col(c).array() - mu).square().sum() / static_cast<Scalar>(d);
      const Scalar isd = Scalar(1) / std::sqrt(var + eps);
      inv_sd(0, c) = isd;
      xhat.col(c) = (xv.col(c).array() - mu).matrix() * isd;
    }
    M v(xv.rows(), xv.cols());
    const auto& gcol = value(gamma).col(0);
    const auto& bcol = value(beta).col(0);
    for (Eigen::Index c = 0; c < xv.cols(); ++c)
      v.col(c) = xhat.col(c).cwiseProduct(gcol) + bcol;

    // Stash the normalized values and scales for the backward pass.
    const int xhat_id = constant(std::move(xhat));
    const int isd_id = constant(std::move(inv_sd));
    return push(std::move(v), nullptr,
                [x, gamma, beta, xhat_id, isd_id, d](Tape& t, int self) {
                  const M& g = t.grad(self);
                  const M& xh = t.value(xhat_id);
                  const M& isd = t.value(isd_id);
                  const auto& gc = t.value(gamma).col(0);
                  M dgamma = M::Zero(gc.rows(), 1);
                  M dbeta = M::Zero(gc.rows(), 1);
                  M dx(xh.rows(), xh.cols());
                  for (Eigen::Index c = 0; c < xh.cols(); ++c) {
                    dgamma.col(0) += g.col(c).cwiseProduct(xh.col(c));
                    dbeta.col(0) += g.col(c);
                    const M gh = g.col(c).cwiseProduct(gc);
                    const Scalar m1 = gh.mean();
                    const Scalar m2 =
                        gh.cwiseProduct(xh.col(c)).sum() / static_cast<Scalar>(d);
                    dx.col(c) = (gh.array() - m1 - xh.col(c).array() * m2)
                                    .matrix() *
                                isd(0, c);
                  }
                  t.add_grad(x, dx);
                  t.add_grad(gamma, dgamma);
                  t.add_grad(beta, dbeta);
                });
  }

  int transpose(int a) {
    M v = value(a).transpose();
    return push(std::move(v), nullptr, [a](Tape& t, int self) {
      t.add_grad(a, t.grad(self).transpose());
    });
  }

  int slice_rows(int a, Eigen::Index start, Eigen::Index n) {
    M v = value(a).middleRows(start, n);
    return push(std::move(v), nullptr, [a, start, n](Tape& t, int self) {
      M g = M::Zero(t.value(a).rows(), t.value(a).cols());
      g.middleRows(start, n) = t.grad(self);
      t.add_grad(a, g);
    });
  }

  int slice_cols(int a, Eigen::Index start, Eigen::Index n) {
    M v = value(a).middleCols(start, n);
    return push(std::move(v), nullptr, [a, start, n](Tape& t, int self) {
      M g = M::Zero(t.value(a).rows(), t.value(a).cols());
      g.middleCols(start, n) = t.grad(self);
      t.add_grad(a, g);
    });
  }

  int concat_cols(const std::vector<int>& parts) {
    if (parts.empty()) throw ArgumentError("concat_cols: no inputs");
    Eigen::Index cols = 0;
    for (const int p : parts) cols += value(p).cols();
    M v(value(parts[0]).rows(), cols);
    Eigen::Index at = 0;
    for (const int p : parts) {
      v.middleCols(at, value(p).cols()) = value(p);
      at += value(p).cols();
    }
    return push(std::move(v), nullptr, [parts](Tape& t, int self) {
      Eigen::Index at = 0;
      for (const int p : parts) {
        const Eigen::Index n = t.value(p).cols();
        t.add_grad(p, t.grad(self).middleCols(at, n));
        at += n;
      }
    });
  }

  int concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw ArgumentError("concat_rows: no inputs");
    Eigen::Index rows = 0;
    for (const int p : parts) rows += value(p).rows();
    M v(rows, value(parts[0]).cols());
    Eigen::Index at = 0;
    for (const int p : parts) {
      v.middleRows(at, value(p).rows()) = value(p);
      at += value(p).rows();
    }
    return push(std::move(v), nullptr, [parts](Tape& t, int self) {
      Eigen::Index at = 0;
      for (const int p : parts) {
        const Eigen::Index n = t.value(p).rows();
        t.add_grad(p, t.grad(self).middleRows(at, n));
        at += n;
      }
    });
  }

  // Gathers embedding columns for a token id sequence.
  int embedding(int table, const std::vector<int>& ids) {
    const M& e = value(table);
    M v(e.rows(), static_cast<Eigen::Index>(ids.size()));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      if (ids[i] < 0 || ids[i] >= e.cols())
        throw ArgumentError("embedding: token id out of range");
      v.col(static_cast<Eigen::Index>(i)) = e.col(ids[i]);
    }
    return push(std::move(v), nullptr, [table, ids](Tape& t, int self) {
      const M& g = t.grad(self);
      M dtab = M::Zero(t.value(table).rows(), t.value(table).cols());
      for (std::size_t i = 0; i < ids.size(); ++i)
        dtab.col(ids[i]) += g.col(static_cast<Eigen::Index>(i));
      t.add_grad(table, dtab);
    });
  }

  // Gathers selected columns (duplicates allowed); backward scatter-adds.
  int gather_cols(int a, const std::vector<int>& idx) {
    const M& src = value(a);
    M v(src.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] < 0 || idx[i] >= src.cols())
        throw ArgumentError("gather_cols: index out of range");
      v.col(static_cast<Eigen::Index>(i)) = src.col(idx[i]);
    }
    return push(std::move(v), nullptr, [a, idx](Tape& t, int self) {
      const M& g = t.grad(self);
      M da = M::Zero(t.value(a).rows(), t.value(a).cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        da.col(idx[i]) += g.col(static_cast<Eigen::Index>(i));
      t.add_grad(a, da);
    });
  }

  int mean_cols(int a) {
    M v = value(a).rowwise().mean();
    const Eigen::Index n = value(a).cols();
    return push(std::move(v), nullptr, [a, n](Tape& t, int self) {
      const M& g = t.grad(self);
      t.add_grad(a, g.replicate(1, n) / static_cast<Scalar>(n));
    });
  }

  // Sum of cross-entropy over the selected columns of a logits matrix
  // (classes in rows, positions in columns). Unselected positions neither
  // contribute loss nor receive gradient. Returns a 1x1 node.
  int cross_entropy_cols(int logits, const std::vector<int>& targets,
                         const std::vector<bool>& active) {
    const M& z = value(logits);
    if (static_cast<Eigen::Index>(targets.size()) != z.cols())
      throw ArgumentError("cross_entropy_cols: target count mismatch");
    if (active.size() != targets.size())
      throw ArgumentError("cross_entropy_cols: mask size mismatch");
    Scalar total = 0;
    for (Eigen::Index c = 0; c < z.cols(); ++c) {
      if (!active[static_cast<std::size_t>(c)]) continue;
      const int tgt = targets[static_cast<std::size_t>(c)];
      if (tgt < 0 || tgt >= z.rows())
        throw ArgumentError("cross_entropy_cols: target id out of range");
      const Scalar mx = z.col(c).maxCoeff();
      const Scalar lse = std::log((z.col(c).array() - mx).exp().sum()) + mx;
      total += lse - z(tgt, c);
    }
    M v(1, 1);
    v(0, 0) = total;
    return push(std::move(v), nullptr,
                [logits, targets, active](Tape& t, int self) {
                  const Scalar g = t.grad(self)(0, 0);
                  const M& z = t.value(logits);
                  M dz = M::Zero(z.rows(), z.cols());
                  for (Eigen::Index c = 0; c < z.cols(); ++c) {
                    if (!active[static_cast<std::size_t>(c)]) continue;
                    const Scalar mx = z.col(c).maxCoeff();
                    M p = (z.col(c).array() - mx).exp().matrix();
                    p /= p.sum();
                    p(targets[static_cast<std::size_t>(c)], 0) -= Scalar(1);
                    dz.col(c) = p * g;
                  }
                  t.add_grad(logits, dz);
                });
  }

  // Squared error between a 1x1 prediction node and a constant target.
  int squared_error(int pred, Scalar target) {
    const Scalar diff = value(pred)(0, 0) - target;
    M v(1, 1);
    v(0, 0) = diff * diff;
    return push(std::move(v), nullptr, [pred, target](Tape& t, int self) {
      const Scalar g = t.grad(self)(0, 0);
      M d(1, 1);
      d(0, 0) = Scalar(2) * (t.value(pred)(0, 0) - target) * g;
      t.add_grad(pred, d);
    });
  }

  // Weighted sum of 1x1 nodes.
  int weighted_sum(const std::vector<int>& parts,
                   const std::vector<Scalar>& weights) {
    if (parts.size() != weights.size() || parts.empty())
      throw ArgumentError("weighted_sum: size mismatch");
    Scalar total = 0;
    for (std::size_t i = 0; i < parts.size(); ++i)
      total += weights[i] * value(parts[i])(0, 0);
    M v(1, 1);
    v(0, 0) = total;
    return push(std::move(v), nullptr, [parts, weights](Tape& t, int self) {
      const Scalar g = t.grad(self)(0, 0);
      M d(1, 1);
      for (std::size_t i = 0; i < parts.size(); ++i) {
        d(0, 0) = weights[i] * g;
        t.add_grad(parts[i], d);
      }
    });
  }

  // ---- execution ------------------------------------------------------------

  // Clears node gradients (parameter grads are independent accumulators and
  // are untouched).
  void zero_node_grads() {
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad.resize(0, 0);
    }
  }

  // Seeds the root with `seed` and propagates to all reachable nodes.
  void backward(int root, Scalar seed = Scalar(1)) {
    Node& r = nodes_[static_cast<std::size_t>(root)];
    M s(r.value.rows(), r.value.cols());
    s.setConstant(seed);
    add_grad(root, s);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (!n.has_grad || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  // Adds the gradients sitting on parameter leaves into their params.
  void harvest_param_grads(Scalar scale = Scalar(1)) {
    for (auto& n : nodes_)
      if (n.bound && n.has_grad) n.bound->grad += n.grad * scale;
  }

  // Visits (param, node-gradient) pairs without touching param state.
  template <class F>
  void visit_param_grads(F&& f) {
    for (auto& n : nodes_)
      if (n.bound && n.has_grad) f(*n.bound, n.grad);
  }

 private:
  int push(M value, Param<Scalar>* bound,
           std::function<void(Tape&, int)> backward) {
    Node n;
    n.value = std::move(value);
    n.bound = bound;
    n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  std::vector<Node> nodes_;
};

}  // namespace mape
