#pragma once

// Minimal reverse-mode differentiation over dense matrices. A Tape records
// every operation as a node; backward() walks the nodes in reverse creation
// order and accumulates adjoints. Scalars are 1x1 matrices.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace topoleak::autodiff {

struct Var {
  int id = -1;
};

template <typename T>
class Tape {
 public:
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

  Tape() = default;
  // Recorded closures capture `this`.
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Input node. Gradients are only tracked for leaves with requires_grad.
  Var leaf(Mat value, bool requires_grad) {
    return push(std::move(value), requires_grad, {});
  }

  Var constant(Mat value) { return leaf(std::move(value), false); }

  Var scalar_constant(T v) {
    Mat m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  const Mat& value(Var v) const { return nodes_[v.id].value; }
  T scalar(Var v) const { return nodes_[v.id].value(0, 0); }

  /// Adjoint of v after backward(); zero-sized when v does not need grads.
  const Mat& grad(Var v) const { return nodes_[v.id].grad; }

  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }

  /// Moves a value or adjoint out of the tape; the node is unusable afterwards.
  Mat take_value(Var v) { return std::move(nodes_[v.id].value); }
  Mat take_grad(Var v) { return std::move(nodes_[v.id].grad); }

  std::size_t size() const noexcept { return nodes_.size(); }

  /// Seeds d(loss)/d(loss) = seed and propagates. `loss` must be 1x1.
  void backward(Var loss, T seed = T(1)) {
    auto& root = nodes_[loss.id];
    if (root.value.rows() != 1 || root.value.cols() != 1)
      throw std::invalid_argument("backward: loss must be a scalar");
    for (auto& n : nodes_) {
      if (n.requires_grad) n.grad = Mat::Zero(n.value.rows(), n.value.cols());
    }
    if (!root.requires_grad) return;
    root.grad(0, 0) = seed;
    for (int id = loss.id; id >= 0; --id) {
      auto& n = nodes_[id];
      if (n.requires_grad && n.backward) n.backward();
    }
  }

  // ---- structural ops -----------------------------------------------------

  /// Same value as a, cut off from gradient flow.
  Var detach(Var a) { return constant(value(a)); }

  Var matmul(Var a, Var b) {
    check(cols(a) == rows(b), "matmul shape mismatch");
    Mat out = value(a) * value(b);
    return push_op(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (requires_grad(a)) grad_ref(a).noalias() += g * value(b).transpose();
      if (requires_grad(b)) grad_ref(b).noalias() += value(a).transpose() * g;
    });
  }

  /// a * b^T
  Var matmul_nt(Var a, Var b) {
    check(cols(a) == cols(b), "matmul_nt shape mismatch");
    Mat out = value(a) * value(b).transpose();
    return push_op(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (requires_grad(a)) grad_ref(a).noalias() += g * value(b);
      if (requires_grad(b)) grad_ref(b).noalias() += g.transpose() * value(a);
    });
  }

  Var add(Var a, Var b) {
    check(same_shape(a, b), "add shape mismatch");
    Mat out = value(a) + value(b);
    return push_op(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (requires_grad(a)) grad_ref(a) += g;
      if (requires_grad(b)) grad_ref(b) += g;
    });
  }

  Var sub(Var a, Var b) {
    check(same_shape(a, b), "sub shape mismatch");
    Mat out = value(a) - value(b);
    return push_op(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (requires_grad(a)) grad_ref(a) += g;
      if (requires_grad(b)) grad_ref(b) -= g;
    });
  }

  /// scale * a + shift, elementwise.
  Var affine(Var a, T scale, T shift = T(0)) {
    Mat out = (value(a).array() * scale + shift).matrix();
    return push_op(std::move(out), {a}, [this, a, scale](const Mat& g) {
      grad_ref(a) += g * scale;
    });
  }

  /// a plus the 1xC row vector b broadcast over rows.
  Var add_rowvec(Var a, Var b) {
    check(rows(b) == 1 && cols(b) == cols(a), "add_rowvec shape mismatch");
    Mat out = value(a).rowwise() + value(b).row(0);
    return push_op(std::move(out), {a, b}, [this, a, b](const Mat& g) {
      if (requires_grad(a)) grad_ref(a) += g;
      if (requires_grad(b)) grad_ref(b) += g.colwise().sum();
    });
  }

  Var concat_cols(Var a, Var b) {
    check(rows(a) == rows(b), "concat_cols row mismatch");
    Mat out(rows(a), cols(a) + cols(b));
    out << value(a), value(b);
    const auto ca = cols(a);
    const auto cb = cols(b);
    return push_op(std::move(out), {a, b}, [this, a, b, ca, cb](const Mat& g) {
      if (requires_grad(a)) grad_ref(a) += g.leftCols(ca);
      if (requires_grad(b)) grad_ref(b) += g.rightCols(cb);
    });
  }

  Var slice_rows(Var a, Eigen::Index start, Eigen::Index count) {
    check(start >= 0 && count >= 0 && start + count <= rows(a), "slice_rows out of range");
    Mat out = value(a).middleRows(start, count);
    return push_op(std::move(out), {a}, [this, a, start, count](const Mat& g) {
      grad_ref(a).middleRows(start, count) += g;
    });
  }

  /// Rows grouped into `blocks` consecutive equal blocks; returns blocks x C of
  /// per-block row means.
  Var block_row_means(Var a, Eigen::Index blocks) {
    check(blocks > 0 && rows(a) % blocks == 0, "block_row_means: rows not divisible");
    const Eigen::Index per = rows(a) / blocks;
    Mat out(blocks, cols(a));
    for (Eigen::Index b = 0; b < blocks; ++b)
      out.row(b) = value(a).middleRows(b * per, per).colwise().mean();
    return push_op(std::move(out), {a}, [this, a, blocks, per](const Mat& g) {
      auto& ga = grad_ref(a);
      for (Eigen::Index b = 0; b < blocks; ++b)
        ga.middleRows(b * per, per).rowwise() += g.row(b) / static_cast<T>(per);
    });
  }

  /// Row r of the output is row r of `a` scaled to unit norm; zero rows stay zero.
  Var normalize_rows(Var a) {
    const Mat& x = value(a);
    std::vector<T> norms(static_cast<std::size_t>(x.rows()));
    Mat out = x;
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      norms[r] = x.row(r).norm();
      if (norms[r] > T(0)) out.row(r) /= norms[r];
    }
    const int out_id = static_cast<int>(nodes_.size());
    return push_op(std::move(out), {a}, [this, a, out_id, norms = std::move(norms)](const Mat& g) {
      const Mat& y = nodes_[out_id].value;
      auto& ga = grad_ref(a);
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        if (norms[r] == T(0)) continue;
        ga.row(r) += (g.row(r) - g.row(r).dot(y.row(r)) * y.row(r)) / norms[r];
      }
    });
  }

  /// Rows grouped into `blocks` consecutive equal blocks; block b becomes one
  /// output row holding its rows side by side.
  Var stack_blocks(Var a, Eigen::Index blocks) {
    check(blocks > 0 && rows(a) % blocks == 0, "stack_blocks: rows not divisible");
    const Eigen::Index per = rows(a) / blocks;
    const Eigen::Index c = cols(a);
    Mat out(blocks, per * c);
    for (Eigen::Index b = 0; b < blocks; ++b)
      for (Eigen::Index k = 0; k < per; ++k) out.block(b, k * c, 1, c) = value(a).row(b * per + k);
    return push_op(std::move(out), {a}, [this, a, blocks, per, c](const Mat& g) {
      auto& ga = grad_ref(a);
      for (Eigen::Index b = 0; b < blocks; ++b)
        for (Eigen::Index k = 0; k < per; ++k) ga.row(b * per + k) += g.block(b, k * c, 1, c);
    });
  }

  // ---- elementwise ---------------------------------------------------------

  Var tanh(Var a) {
    Mat out = value(a).array().tanh().matrix();
    const int out_id = static_cast<int>(nodes_.size());
    return push_op(std::move(out), {a}, [this, a, out_id](const Mat& g) {
      const auto& y = nodes_[out_id].value.array();
      grad_ref(a).array() += g.array() * (T(1) - y * y);
    });
  }

  Var log(Var a) {
    Mat out = value(a).array().log().matrix();
    return push_op(std::move(out), {a}, [this, a](const Mat& g) {
      grad_ref(a).array() += g.array() / value(a).array();
    });
  }

  /// Elementwise clamp; gradient passes only where the input is inside.
  Var clamp(Var a, T lo, T hi) {
    Mat out = value(a).cwiseMax(lo).cwiseMin(hi);
    return push_op(std::move(out), {a}, [this, a, lo, hi](const Mat& g) {
      const auto& x = value(a).array();
      grad_ref(a).array() += (x >= lo && x <= hi).select(g.array(), T(0));
    });
  }

  // ---- reductions ----------------------------------------------------------

  Var sum(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).sum();
    return push_op(std::move(out), {a}, [this, a](const Mat& g) {
      grad_ref(a).array() += g(0, 0);
    });
  }

  Var mean(Var a) {
    const auto count = static_cast<T>(value(a).size());
    return affine(sum(a), T(1) / count);
  }

  Var sum_squares(Var a) {
    Mat out(1, 1);
    out(0, 0) = value(a).squaredNorm();
    return push_op(std::move(out), {a}, [this, a](const Mat& g) {
      grad_ref(a) += (T(2) * g(0, 0)) * value(a);
    });
  }

  Var trace(Var a) {
    check(rows(a) == cols(a), "trace of non-square matrix");
    Mat out(1, 1);
    out(0, 0) = value(a).trace();
    return push_op(std::move(out), {a}, [this, a](const Mat& g) {
      grad_ref(a).diagonal().array() += g(0, 0);
    });
  }

  /// Rx1 column of log(sum_j exp(a_ij)), computed stably.
  Var row_logsumexp(Var a) {
    const Mat& x = value(a);
    Mat out(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T m = x.row(r).maxCoeff();
      out(r, 0) = m + std::log((x.row(r).array() - m).exp().sum());
    }
    const int out_id = static_cast<int>(nodes_.size());
    return push_op(std::move(out), {a}, [this, a, out_id](const Mat& g) {
      const Mat& x = value(a);
      const Mat& lse = nodes_[out_id].value;
      auto& ga = grad_ref(a);
      for (Eigen::Index r = 0; r < x.rows(); ++r)
        ga.row(r).array() += g(r, 0) * (x.row(r).array() - lse(r, 0)).exp();
    });
  }

  /// Rx1 column of a_rr - log(sum_j exp(a_rj)) for a square a: the log
  /// softmax of each row at its diagonal entry. Never positive.
  Var diag_log_softmax(Var a) {
    check(rows(a) == cols(a), "diag_log_softmax of non-square matrix");
    const Mat& x = value(a);
    Mat out(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const T m = x.row(r).maxCoeff();
      out(r, 0) = (x(r, r) - m) - std::log((x.row(r).array() - m).exp().sum());
    }
    return push_op(std::move(out), {a}, [this, a](const Mat& g) {
      const Mat& x = value(a);
      auto& ga = grad_ref(a);
      for (Eigen::Index r = 0; r < x.rows(); ++r) {
        const T m = x.row(r).maxCoeff();
        const auto e = (x.row(r).array() - m).exp();
        ga.row(r).array() -= g(r, 0) * e / e.sum();
        ga(r, r) += g(r, 0);
      }
    });
  }

  /// Px1 cosine similarities between the listed row pairs of a. A pair with a
  /// zero row gets cosine 0 and no gradient.
  Var pair_cosine(Var a, std::vector<std::pair<int, int>> pairs) {
    const Mat& x = value(a);
    const auto p = static_cast<Eigen::Index>(pairs.size());
    Mat out(p, 1);
    std::vector<T> norms(static_cast<std::size_t>(x.rows()));
    for (Eigen::Index r = 0; r < x.rows(); ++r) norms[r] = x.row(r).norm();
    for (Eigen::Index k = 0; k < p; ++k) {
      const auto [i, j] = pairs[k];
      check(i >= 0 && j >= 0 && i < x.rows() && j < x.rows(), "pair_cosine index out of range");
      const T denom = norms[i] * norms[j];
      out(k, 0) = denom > T(0) ? x.row(i).dot(x.row(j)) / denom : T(0);
    }
    const int out_id = static_cast<int>(nodes_.size());
    return push_op(std::move(out), {a},
                   [this, a, out_id, pairs = std::move(pairs), norms = std::move(norms)](const Mat& g) {
                     const Mat& x = value(a);
                     const Mat& c = nodes_[out_id].value;
                     auto& ga = grad_ref(a);
                     for (std::size_t k = 0; k < pairs.size(); ++k) {
                       const auto [i, j] = pairs[k];
                       const T ni = norms[i];
                       const T nj = norms[j];
                       if (ni == T(0) || nj == T(0)) continue;
                       const T gk = g(static_cast<Eigen::Index>(k), 0);
                       const T ck = c(static_cast<Eigen::Index>(k), 0);
                       ga.row(i) += gk * (x.row(j) / (ni * nj) - ck * x.row(i) / (ni * ni));
                       ga.row(j) += gk * (x.row(i) / (ni * nj) - ck * x.row(j) / (nj * nj));
                     }
                   });
  }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void()> backward;
  };

  Var push(Mat value, bool requires_grad, std::function<void()> backward) {
    nodes_.push_back(Node{std::move(value), Mat(), requires_grad, std::move(backward)});
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  template <typename F>
  Var push_op(Mat value, std::initializer_list<Var> parents, F&& local_backward) {
    bool needs = false;
    for (Var p : parents) needs = needs || requires_grad(p);
    const int id = static_cast<int>(nodes_.size());
    std::function<void()> bw;
    if (needs) {
      bw = [this, id, f = std::forward<F>(local_backward)]() { f(nodes_[id].grad); };
    }
    return push(std::move(value), needs, std::move(bw));
  }

  Mat& grad_ref(Var v) { return nodes_[v.id].grad; }
  Eigen::Index rows(Var v) const { return value(v).rows(); }
  Eigen::Index cols(Var v) const { return value(v).cols(); }
  bool same_shape(Var a, Var b) const { return rows(a) == rows(b) && cols(a) == cols(b); }

  static void check(bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("autodiff: ") + what);
  }

  std::vector<Node> nodes_;
};

}  // namespace topoleak::autodiff
