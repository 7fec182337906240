#pragma once

// Reverse-mode automatic differentiation over dense matrices: a flat tape of
// nodes, each holding a value, a gradient accumulator and a backward closure.
// The op set is exactly what the losses in this library need (affine maps,
// leaky ReLU, exp/log/square, clamp, row-wise log-softmax, gathers, masked
// and grouped log-sum-exp, reductions). Anything else is out of contract.
//
// Shapes follow the batch convention: rows are subjects (or draws), columns
// are features. All math is double precision.

#include "vsi/common.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace vsi::ad {

using Var = int;

class Tape {
 public:
  struct Node {
    Mat value;
    Mat grad;
    std::function<void(Tape&)> backward;  // empty for leaves and constants
  };

  void clear() { nodes_.clear(); }
  std::size_t size() const { return nodes_.size(); }

  const Mat& value(Var v) const { return nodes_[static_cast<std::size_t>(v)].value; }
  const Mat& grad(Var v) const { return nodes_[static_cast<std::size_t>(v)].grad; }

  /** Tracked input; its gradient is available after backward(). */
  Var leaf(Mat v) { return push(std::move(v), {}); }

  Var matmul(Var a, Var b) {
    Mat out = value(a) * value(b);
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      t.g(a) += n.grad * t.value(b).transpose();
      t.g(b) += t.value(a).transpose() * n.grad;
    });
  }

  Var add(Var a, Var b) {
    Mat out = value(a) + value(b);
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      t.g(a) += n.grad;
      t.g(b) += n.grad;
    });
  }

  Var sub(Var a, Var b) {
    Mat out = value(a) - value(b);
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      t.g(a) += n.grad;
      t.g(b) -= n.grad;
    });
  }

  Var cmul(Var a, Var b) {
    Mat out = value(a).cwiseProduct(value(b));
    return push(std::move(out), [a, b](Tape& t, const Node& n) {
      t.g(a) += n.grad.cwiseProduct(t.value(b));
      t.g(b) += n.grad.cwiseProduct(t.value(a));
    });
  }

  /** Broadcast-add a 1 x k row vector (bias) to every row of an n x k matrix. */
  Var add_rowvec(Var a, Var rv) {
    Mat out = value(a);
    out.rowwise() += value(rv).row(0);
    return push(std::move(out), [a, rv](Tape& t, const Node& n) {
      t.g(a) += n.grad;
      t.g(rv).row(0) += n.grad.colwise().sum();
    });
  }

  /** Broadcast-multiply every row of an n x k matrix by a 1 x k row vector. */
  Var mul_rowvec(Var a, Var rv) {
    Mat out = value(a).array().rowwise() * value(rv).row(0).array();
    return push(std::move(out), [a, rv](Tape& t, const Node& n) {
      t.g(a) += Mat(n.grad.array().rowwise() * t.value(rv).row(0).array());
      t.g(rv).row(0) +=
          n.grad.cwiseProduct(t.value(a)).colwise().sum();
    });
  }

  Var scale(Var a, double c) {
    Mat out = value(a) * c;
    return push(std::move(out), [a, c](Tape& t, const Node& n) { t.g(a) += c * n.grad; });
  }

  Var add_const(Var a, double c) {
    Mat out = value(a).array() + c;
    return push(std::move(out), [a](Tape& t, const Node& n) { t.g(a) += n.grad; });
  }

  Var exp_(Var a) {
    Mat out = value(a).array().exp();
    return push(std::move(out), [a](Tape& t, const Node& n) {
      t.g(a) += n.grad.cwiseProduct(n.value);
    });
  }

  Var log_(Var a) {
    Mat out = value(a).array().log();
    return push(std::move(out), [a](Tape& t, const Node& n) {
      t.g(a) += n.grad.cwiseQuotient(t.value(a));
    });
  }

  Var square(Var a) {
    Mat out = value(a).array().square();
    return push(std::move(out), [a](Tape& t, const Node& n) {
      t.g(a) += 2.0 * n.grad.cwiseProduct(t.value(a));
    });
  }

  Var leaky_relu(Var a, double slope) {
    const Mat& x = value(a);
    Mat out = (x.array() > 0.0).select(x, slope * x);
    return push(std::move(out), [a, slope](Tape& t, const Node& n) {
      const auto& x = t.value(a).array();
      t.g(a).array() += n.grad.array() * (x > 0.0).select(Mat::Ones(x.rows(), x.cols()),
                                                          Mat::Constant(x.rows(), x.cols(), slope))
                                             .array();
    });
  }

  /** Hard clamp; subgradient is 1 strictly inside (lo, hi), 0 outside. */
  Var clamp(Var a, double lo, double hi) {
    Mat out = value(a).array().max(lo).min(hi);
    return push(std::move(out), [a, lo, hi](Tape& t, const Node& n) {
      const auto& x = t.value(a).array();
      t.g(a).array() +=
          n.grad.array() * ((x > lo) && (x < hi)).cast<double>();
    });
  }

  Var slice_cols(Var a, Eigen::Index c0, Eigen::Index width) {
    Mat out = value(a).middleCols(c0, width);
    return push(std::move(out), [a, c0, width](Tape& t, const Node& n) {
      t.g(a).middleCols(c0, width) += n.grad;
    });
  }

  /** Repeat each row K consecutive times: (n x c) -> (n*K x c). */
  Var repeat_rows(Var a, int K) {
    const Mat& x = value(a);
    Mat out(x.rows() * K, x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      for (int k = 0; k < K; ++k) out.row(i * K + k) = x.row(i);
    return push(std::move(out), [a, K](Tape& t, const Node& n) {
      Mat& ga = t.g(a);
      for (Eigen::Index i = 0; i < ga.rows(); ++i)
        for (int k = 0; k < K; ++k) ga.row(i) += n.grad.row(i * K + k);
    });
  }

  /** Numerically stable row-wise log-softmax. */
  Var log_softmax_rows(Var a) {
    const Mat& x = value(a);
    Mat out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      const double m = x.row(i).maxCoeff();
      const double lse = m + std::log((x.row(i).array() - m).exp().sum());
      out.row(i) = x.row(i).array() - lse;
    }
    return push(std::move(out), [a](Tape& t, const Node& n) {
      // d x = d y - softmax(x) * rowsum(d y)
      const Mat soft = n.value.array().exp();
      const Vec rs = n.grad.rowwise().sum();
      t.g(a) += n.grad - Mat(soft.array().colwise() * rs.array());
    });
  }

  /** Per-row element pick: out(i, 0) = a(i, idx[i]). */
  Var gather_cols(Var a, std::vector<int> idx) {
    const Mat& x = value(a);
    Mat out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      out(i, 0) = x(i, idx[static_cast<std::size_t>(i)]);
    return push(std::move(out), [a, idx = std::move(idx)](Tape& t, const Node& n) {
      Mat& ga = t.g(a);
      for (Eigen::Index i = 0; i < ga.rows(); ++i)
        ga(i, idx[static_cast<std::size_t>(i)]) += n.grad(i, 0);
    });
  }

  /**
   * Row-wise log-sum-exp restricted to entries where mask > 0; out is n x 1.
   * Every row must have at least one unmasked entry.
   */
  Var masked_logsumexp_rows(Var a, const Mat& mask) {
    const Mat& x = value(a);
    Mat out(x.rows(), 1);
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
      double m = -std::numeric_limits<double>::infinity();
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j) > 0.0 && x(i, j) > m) m = x(i, j);
      if (!std::isfinite(m)) throw numeric_error("masked_logsumexp_rows: empty row mask");
      double s = 0.0;
      for (Eigen::Index j = 0; j < x.cols(); ++j)
        if (mask(i, j) > 0.0) s += std::exp(x(i, j) - m);
      out(i, 0) = m + std::log(s);
    }
    return push(std::move(out), [a, mask](Tape& t, const Node& n) {
      const Mat& x = t.value(a);
      Mat& ga = t.g(a);
      for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
          if (mask(i, j) > 0.0)
            ga(i, j) += std::exp(x(i, j) - n.value(i, 0)) * n.grad(i, 0);
    });
  }

  /**
   * Log-sum-exp over consecutive groups of K rows of an (n*K) x 1 column;
   * out is n x 1. Used for Monte-Carlo marginals log(sum_k exp(.)).
   */
  Var group_logsumexp(Var a, int K) {
    const Mat& x = value(a);
    const Eigen::Index n = x.rows() / K;
    Mat out(n, 1);
    for (Eigen::Index gI = 0; gI < n; ++gI) {
      double m = x.block(gI * K, 0, K, 1).maxCoeff();
      double s = (x.block(gI * K, 0, K, 1).array() - m).exp().sum();
      out(gI, 0) = m + std::log(s);
    }
    return push(std::move(out), [a, K](Tape& t, const Node& n_) {
      const Mat& x = t.value(a);
      Mat& ga = t.g(a);
      const Eigen::Index n = x.rows() / K;
      for (Eigen::Index gI = 0; gI < n; ++gI)
        for (int k = 0; k < K; ++k)
          ga(gI * K + k, 0) +=
              std::exp(x(gI * K + k, 0) - n_.value(gI, 0)) * n_.grad(gI, 0);
    });
  }

  Var rowwise_sum(Var a) {
    Mat out = value(a).rowwise().sum();
    return push(std::move(out), [a](Tape& t, const Node& n) {
      t.g(a).colwise() += n.grad.col(0);
    });
  }

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push(std::move(out), [a](Tape& t, const Node& n) {
      t.g(a).array() += n.grad(0, 0);
    });
  }

  /** Affine layer helper: x * W + broadcast bias. */
  Var affine(Var x, Var W, Var b) { return add_rowvec(matmul(x, W), b); }

  /** Seed the scalar loss with gradient 1 and sweep the tape in reverse. */
  void backward(Var loss) {
    Node& ln = nodes_[static_cast<std::size_t>(loss)];
    if (ln.value.size() != 1) throw numeric_error("backward: loss must be scalar");
    ln.grad(0, 0) = 1.0;
    for (Var v = loss; v >= 0; --v) {
      const Node& n = nodes_[static_cast<std::size_t>(v)];
      if (n.backward) n.backward(*this);
    }
  }

 private:
  Mat& g(Var v) { return nodes_[static_cast<std::size_t>(v)].grad; }

  Var push(Mat value, std::function<void(Tape&, const Node&)> bw) {
    Node n;
    n.grad = Mat::Zero(value.rows(), value.cols());
    n.value = std::move(value);
    const Var id = static_cast<Var>(nodes_.size());
    if (bw)
      n.backward = [id, bw = std::move(bw)](Tape& t) {
        bw(t, t.nodes_[static_cast<std::size_t>(id)]);
      };
    nodes_.push_back(std::move(n));
    return id;
  }

  std::vector<Node> nodes_;
};

}  // namespace vsi::ad
