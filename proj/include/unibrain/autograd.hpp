// Reverse-mode autodiff over dense row-major matrices. A Graph is a
// define-by-run tape: values are computed eagerly at op creation, gradients
// flow backwards in reverse creation order. Templated on scalar so the same
// model code runs in float for training and double for gradient oracles.
#pragma once

#include "unibrain/common.hpp"

#include <cassert>
#include <functional>
#include <utility>
#include <vector>

namespace unibrain {

template <typename S>
struct Param {
  std::string name;
  Mat<S> value;
  Mat<S> grad;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
  Eigen::Index size() const { return value.size(); }
};

template <typename S>
class Graph {
 public:
  using M = Mat<S>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // ---- leaves -------------------------------------------------------------

  int input(M v, bool needs_grad = false) {
    Node n;
    n.value = std::move(v);
    n.needs_grad = needs_grad;
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  int constant(M v) { return input(std::move(v), false); }

  int scalar(S v) {
    M m(1, 1);
    m(0, 0) = v;
    return constant(std::move(m));
  }

  // Binds a persistent parameter: gradients land in p.grad after
  // collect_param_grads(). The same Param may be bound more than once.
  int param(Param<S>& p) {
    int id = input(p.value, true);
    bindings_.emplace_back(id, &p);
    return id;
  }

  // ---- elementwise / linear ops --------------------------------------------

  int matmul(int a, int b) {
    int id = make(val(a) * val(b), {a, b});
    set_back(id, [a, b](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      g.acc(a, gy * g.val(b).transpose());
      g.acc(b, g.val(a).transpose() * gy);
    });
    return id;
  }

  int add(int a, int b) {
    int id = make(val(a) + val(b), {a, b});
    set_back(id, [a, b](Graph& g, int self) {
      g.acc(a, g.nodes_[self].grad);
      g.acc(b, g.nodes_[self].grad);
    });
    return id;
  }

  int sub(int a, int b) {
    int id = make(val(a) - val(b), {a, b});
    set_back(id, [a, b](Graph& g, int self) {
      g.acc(a, g.nodes_[self].grad);
      g.acc(b, -g.nodes_[self].grad);
    });
    return id;
  }

  int cwise_mul(int a, int b) {
    int id = make(val(a).cwiseProduct(val(b)), {a, b});
    set_back(id, [a, b](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      g.acc(a, gy.cwiseProduct(g.val(b)));
      g.acc(b, gy.cwiseProduct(g.val(a)));
    });
    return id;
  }

  // a: (R x C), bias: (1 x C) broadcast over rows
  int add_rowvec(int a, int bias) {
    M out = val(a);
    out.rowwise() += val(bias).row(0);
    int id = make(std::move(out), {a, bias});
    set_back(id, [a, bias](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      g.acc(a, gy);
      g.acc(bias, gy.colwise().sum());
    });
    return id;
  }

  int scale(int a, S k) {
    int id = make(val(a) * k, {a});
    set_back(id, [a, k](Graph& g, int self) { g.acc(a, g.nodes_[self].grad * k); });
    return id;
  }

  // Gradient reversal: identity forward, -alpha * g backward.
  int grl(int a, S alpha) {
    int id = make(val(a), {a});
    set_back(id, [a, alpha](Graph& g, int self) { g.acc(a, g.nodes_[self].grad * (-alpha)); });
    return id;
  }

  int transpose(int a) {
    int id = make(val(a).transpose(), {a});
    set_back(id, [a](Graph& g, int self) { g.acc(a, g.nodes_[self].grad.transpose()); });
    return id;
  }

  // Row-major relayout; element order is preserved.
  int reshape(int a, Eigen::Index rows, Eigen::Index cols) {
    const M& x = val(a);
    if (x.size() != rows * cols) throw ConfigError("reshape: element count mismatch");
    M out = Eigen::Map<const M>(x.data(), rows, cols);
    int id = make(std::move(out), {a});
    set_back(id, [a](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      const M& x = g.val(a);
      g.acc(a, M(Eigen::Map<const M>(gy.data(), x.rows(), x.cols())));
    });
    return id;
  }

  int concat_rows(const std::vector<int>& parts) {
    if (parts.empty()) throw ConfigError("concat_rows: no parts");
    Eigen::Index rows = 0, cols = val(parts[0]).cols();
    for (int p : parts) rows += val(p).rows();
    M out(rows, cols);
    Eigen::Index r = 0;
    for (int p : parts) {
      out.middleRows(r, val(p).rows()) = val(p);
      r += val(p).rows();
    }
    int id = make(std::move(out), parts);
    set_back(id, [parts](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      Eigen::Index r = 0;
      for (int p : parts) {
        Eigen::Index n = g.val(p).rows();
        g.acc(p, gy.middleRows(r, n));
        r += n;
      }
    });
    return id;
  }

  int slice_rows(int a, Eigen::Index r0, Eigen::Index nrows) {
    int id = make(val(a).middleRows(r0, nrows), {a});
    set_back(id, [a, r0](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      g.acc_rows(a, r0, gy);
    });
    return id;
  }

  // Arbitrary row selection (duplicates allowed); backward scatter-adds.
  int gather_rows(int a, std::vector<int> rows) {
    const M& x = val(a);
    M out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    int id = make(std::move(out), {a});
    set_back(id, [a, rows = std::move(rows)](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      M& ga = g.grad_ref(a);
      for (size_t i = 0; i < rows.size(); ++i)
        ga.row(rows[i]) += gy.row(static_cast<Eigen::Index>(i));
    });
    return id;
  }

  // Pure gather from a single row vector: out(g,k) = x(0, idx[g][k]).
  // Backward scatter-adds into the gathered voxels only.
  int gather(int a, const std::vector<std::vector<int>>& idx) {
    const M& x = val(a);
    if (x.rows() != 1) throw ConfigError("gather: expects a row vector input");
    Eigen::Index rows = static_cast<Eigen::Index>(idx.size());
    Eigen::Index cols = idx.empty() ? 0 : static_cast<Eigen::Index>(idx[0].size());
    M out(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
      if (static_cast<Eigen::Index>(idx[r].size()) != cols)
        throw ConfigError("gather: ragged index matrix");
      for (Eigen::Index c = 0; c < cols; ++c) out(r, c) = x(0, idx[r][c]);
    }
    int id = make(std::move(out), {a});
    set_back(id, [a, idx](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      M& ga = g.grad_ref(a);
      for (Eigen::Index r = 0; r < gy.rows(); ++r)
        for (Eigen::Index c = 0; c < gy.cols(); ++c) ga(0, idx[r][c]) += gy(r, c);
    });
    return id;
  }

  // Stacks `times` copies of a vertically; backward sums the copies.
  int tile_rows(int a, int times) {
    const M& x = val(a);
    M out(x.rows() * times, x.cols());
    for (int t = 0; t < times; ++t) out.middleRows(t * x.rows(), x.rows()) = x;
    int id = make(std::move(out), {a});
    set_back(id, [a, times](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      Eigen::Index n = g.val(a).rows();
      M acc = M::Zero(n, gy.cols());
      for (int t = 0; t < times; ++t) acc += gy.middleRows(t * n, n);
      g.acc(a, acc);
    });
    return id;
  }

  // ---- nonlinearities -------------------------------------------------------

  int rowwise_softmax(int a) {
    const M& x = val(a);
    M out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      S mx = x.row(r).maxCoeff();
      out.row(r) = (x.row(r).array() - mx).exp();
      out.row(r) /= out.row(r).sum();
    }
    int id = make(std::move(out), {a});
    set_back(id, [a](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      const M& y = g.nodes_[self].value;
      M dx(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        S dot = y.row(r).dot(gy.row(r));
        dx.row(r) = y.row(r).cwiseProduct(gy.row(r) - M::Constant(1, y.cols(), dot));
      }
      g.acc(a, dx);
    });
    return id;
  }

  int log_softmax_rows(int a) {
    const M& x = val(a);
    M out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      S mx = x.row(r).maxCoeff();
      S lse = std::log((x.row(r).array() - mx).exp().sum()) + mx;
      out.row(r) = x.row(r).array() - lse;
    }
    int id = make(std::move(out), {a});
    set_back(id, [a](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      const M& y = g.nodes_[self].value;
      M dx(y.rows(), y.cols());
      for (Eigen::Index r = 0; r < y.rows(); ++r) {
        S gsum = gy.row(r).sum();
        dx.row(r) = gy.row(r) - y.row(r).array().exp().matrix() * gsum;
      }
      g.acc(a, dx);
    });
    return id;
  }

  // Exact GELU: 0.5 x (1 + erf(x / sqrt(2))).
  int gelu(int a) {
    const M& x = val(a);
    M out = x.unaryExpr([](S v) {
      return static_cast<S>(0.5 * static_cast<double>(v) *
                            (1.0 + std::erf(static_cast<double>(v) * M_SQRT1_2)));
    });
    int id = make(std::move(out), {a});
    set_back(id, [a](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      const M& x = g.val(a);
      M d = x.unaryExpr([](S v) {
        double xd = static_cast<double>(v);
        double cdf = 0.5 * (1.0 + std::erf(xd * M_SQRT1_2));
        double pdf = std::exp(-0.5 * xd * xd) / std::sqrt(2.0 * M_PI);
        return static_cast<S>(cdf + xd * pdf);
      });
      g.acc(a, gy.cwiseProduct(d));
    });
    return id;
  }

  // Per-row layer normalization with learnable gain/bias (each 1 x C).
  int layer_norm(int a, int gain, int bias, S eps = static_cast<S>(1e-5)) {
    const M& x = val(a);
    Eigen::Index C = x.cols();
    M xhat(x.rows(), C);
    M inv_std(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      S mu = x.row(r).mean();
      S var = (x.row(r).array() - mu).square().sum() / static_cast<S>(C);
      S is = static_cast<S>(1) / std::sqrt(var + eps);
      inv_std(r, 0) = is;
      xhat.row(r) = (x.row(r).array() - mu) * is;
    }
    M out = xhat.array().rowwise() * val(gain).row(0).array();
    out.rowwise() += val(bias).row(0);
    int id = make(std::move(out), {a, gain, bias});
    set_back(id, [a, gain, bias, xhat, inv_std](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      Eigen::Index C = gy.cols();
      M dxhat = gy.array().rowwise() * g.val(gain).row(0).array();
      M dx(gy.rows(), C);
      for (Eigen::Index r = 0; r < gy.rows(); ++r) {
        S m1 = dxhat.row(r).mean();
        S m2 = dxhat.row(r).cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = (dxhat.row(r).array() - m1 - xhat.row(r).array() * m2) * inv_std(r, 0);
      }
      g.acc(a, dx);
      g.acc(gain, gy.cwiseProduct(xhat).colwise().sum());
      g.acc(bias, gy.colwise().sum());
    });
    return id;
  }

  // Inverted dropout: zeroed entries, survivors scaled by 1/(1-p).
  int dropout(int a, S p, Rng& rng, bool training) {
    if (!training || p <= S(0)) return a;
    const M& x = val(a);
    M mask(x.rows(), x.cols());
    S keep_scale = static_cast<S>(1.0 / (1.0 - static_cast<double>(p)));
    for (Eigen::Index r = 0; r < x.rows(); ++r)
      for (Eigen::Index c = 0; c < x.cols(); ++c)
        mask(r, c) = rng.uniform() < static_cast<double>(p) ? S(0) : keep_scale;
    int id = make(x.cwiseProduct(mask), {a});
    set_back(id, [a, mask](Graph& g, int self) {
      g.acc(a, g.nodes_[self].grad.cwiseProduct(mask));
    });
    return id;
  }

  // Rows scaled to unit L2 norm; rows with norm < eps are divided by eps.
  int l2_normalize_rows(int a, S eps = static_cast<S>(1e-12)) {
    const M& x = val(a);
    M out(x.rows(), x.cols());
    Mat<S> inv_norm(x.rows(), 1);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      S n = x.row(r).norm();
      S in = static_cast<S>(1) / std::max(n, eps);
      inv_norm(r, 0) = in;
      out.row(r) = x.row(r) * in;
    }
    int id = make(std::move(out), {a});
    set_back(id, [a, inv_norm](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      const M& y = g.nodes_[self].value;
      M dx(gy.rows(), gy.cols());
      for (Eigen::Index r = 0; r < gy.rows(); ++r) {
        S dot = y.row(r).dot(gy.row(r));
        dx.row(r) = (gy.row(r) - y.row(r) * dot) * inv_norm(r, 0);
      }
      g.acc(a, dx);
    });
    return id;
  }

  // Multi-head scaled dot-product attention for one sample.
  // q: (Tq x D), k/v: (Tk x D), D divisible by heads. If probs_out is given,
  // the per-head row-stochastic attention matrices are appended to it.
  int multihead_attention(int q, int k, int v, int heads, std::vector<M>* probs_out = nullptr) {
    const M& Q = val(q);
    const M& K = val(k);
    const M& V = val(v);
    Eigen::Index D = Q.cols();
    if (D % heads != 0) throw ConfigError("multihead_attention: D not divisible by head count");
    if (K.cols() != D || V.cols() != D || K.rows() != V.rows())
      throw ConfigError("multihead_attention: key/value shape mismatch");
    Eigen::Index dh = D / heads;
    S scl = static_cast<S>(1.0 / std::sqrt(static_cast<double>(dh)));
    M out(Q.rows(), D);
    std::vector<M> probs(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
      auto Qh = Q.middleCols(h * dh, dh);
      auto Kh = K.middleCols(h * dh, dh);
      auto Vh = V.middleCols(h * dh, dh);
      M scores = Qh * Kh.transpose() * scl;
      M P(scores.rows(), scores.cols());
      for (Eigen::Index r = 0; r < scores.rows(); ++r) {
        S mx = scores.row(r).maxCoeff();
        P.row(r) = (scores.row(r).array() - mx).exp();
        P.row(r) /= P.row(r).sum();
      }
      out.middleCols(h * dh, dh) = P * Vh;
      probs[static_cast<size_t>(h)] = std::move(P);
    }
    if (probs_out)
      for (auto& p : probs) probs_out->push_back(p);
    int id = make(std::move(out), {q, k, v});
    set_back(id, [q, k, v, heads, dh, scl, probs = std::move(probs)](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      const M& Q = g.val(q);
      const M& K = g.val(k);
      const M& V = g.val(v);
      M dQ = M::Zero(Q.rows(), Q.cols());
      M dK = M::Zero(K.rows(), K.cols());
      M dV = M::Zero(V.rows(), V.cols());
      for (int h = 0; h < heads; ++h) {
        const M& P = probs[static_cast<size_t>(h)];
        auto Qh = Q.middleCols(h * dh, dh);
        auto Kh = K.middleCols(h * dh, dh);
        auto Vh = V.middleCols(h * dh, dh);
        auto dOh = gy.middleCols(h * dh, dh);
        dV.middleCols(h * dh, dh) = P.transpose() * dOh;
        M dP = dOh * Vh.transpose();
        M dSc(P.rows(), P.cols());
        for (Eigen::Index r = 0; r < P.rows(); ++r) {
          S dot = P.row(r).dot(dP.row(r));
          dSc.row(r) = P.row(r).cwiseProduct(dP.row(r) - M::Constant(1, P.cols(), dot));
        }
        dSc *= scl;
        dQ.middleCols(h * dh, dh) = dSc * Kh;
        dK.middleCols(h * dh, dh) = dSc.transpose() * Qh;
      }
      g.acc(q, dQ);
      g.acc(k, dK);
      g.acc(v, dV);
    });
    return id;
  }

  // ---- reductions -----------------------------------------------------------

  int sum_all(int a) {
    M out(1, 1);
    out(0, 0) = val(a).sum();
    int id = make(std::move(out), {a});
    set_back(id, [a](Graph& g, int self) {
      S gy = g.nodes_[self].grad(0, 0);
      const M& x = g.val(a);
      g.acc(a, M::Constant(x.rows(), x.cols(), gy));
    });
    return id;
  }

  int mean_all(int a) {
    const M& x = val(a);
    S inv = static_cast<S>(1) / static_cast<S>(x.size());
    M out(1, 1);
    out(0, 0) = x.sum() * inv;
    int id = make(std::move(out), {a});
    set_back(id, [a, inv](Graph& g, int self) {
      S gy = g.nodes_[self].grad(0, 0) * inv;
      const M& x = g.val(a);
      g.acc(a, M::Constant(x.rows(), x.cols(), gy));
    });
    return id;
  }

  // Sum of 1x1 scalars.
  int sum_list(const std::vector<int>& xs) {
    M out = M::Zero(1, 1);
    for (int x : xs) out(0, 0) += val(x)(0, 0);
    int id = make(std::move(out), xs);
    set_back(id, [xs](Graph& g, int self) {
      const M& gy = g.nodes_[self].grad;
      for (int x : xs) g.acc(x, gy);
    });
    return id;
  }

  // ---- execution ------------------------------------------------------------

  void backward(int root) {
    Node& r = nodes_[root];
    if (r.value.size() != 1) throw ConfigError("backward: root must be a scalar");
    grad_ref(root).setOnes(1, 1);
    for (int i = root; i >= 0; --i) {
      Node& n = nodes_[i];
      if (!n.needs_grad || n.grad.size() == 0 || !n.backward) continue;
      n.backward(*this, i);
    }
  }

  // Adds node gradients into their bound Param::grad slots.
  void collect_param_grads() {
    for (auto& [id, p] : bindings_) {
      if (nodes_[id].grad.size() == 0) continue;
      if (p->grad.size() == 0) p->zero_grad();
      p->grad += nodes_[id].grad;
    }
  }

  const M& val(int id) const { return nodes_[id].value; }
  const M& grad(int id) const { return nodes_[id].grad; }
  bool has_grad(int id) const { return nodes_[id].grad.size() != 0; }
  size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    M value;
    M grad;
    bool needs_grad = false;
    std::function<void(Graph&, int)> backward;
  };

  int make(M value, const std::vector<int>& parents) {
    Node n;
    n.value = std::move(value);
    for (int p : parents)
      if (nodes_[p].needs_grad) {
        n.needs_grad = true;
        break;
      }
    nodes_.push_back(std::move(n));
    return static_cast<int>(nodes_.size()) - 1;
  }

  // Backward closures are only kept on nodes that participate in gradients.
  template <typename F>
  void set_back(int id, F&& f) {
    if (nodes_[id].needs_grad) nodes_[id].backward = std::forward<F>(f);
  }

  M& grad_ref(int id) {
    Node& n = nodes_[id];
    if (n.grad.size() == 0) n.grad.setZero(n.value.rows(), n.value.cols());
    return n.grad;
  }

  template <typename Expr>
  void acc(int id, const Expr& delta) {
    if (!nodes_[id].needs_grad) return;
    grad_ref(id) += delta;
  }

  template <typename Expr>
  void acc_block(int id, Eigen::Index r0, Eigen::Index c0, const Expr& delta) {
    if (!nodes_[id].needs_grad) return;
    grad_ref(id).block(r0, c0, delta.rows(), delta.cols()) += delta;
  }

  template <typename Expr>
  void acc_rows(int id, Eigen::Index r0, const Expr& delta) {
    acc_block(id, r0, 0, delta);
  }

  std::vector<Node> nodes_;
  std::vector<std::pair<int, Param<S>*>> bindings_;
};

}  // namespace unibrain
