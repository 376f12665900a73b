// Trainable building blocks on top of the autograd graph. Parameters live in
// a ParamStore owned by the model; modules keep raw pointers into it and bind
// fresh graph nodes per forward pass.
#pragma once

#include "unibrain/autograd.hpp"

#include <map>
#include <memory>
#include <string>
#include <vector>

namespace unibrain {

template <typename S>
class ParamStore {
 public:
  Param<S>& create(const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    if (by_name_.count(name)) throw ConfigError("duplicate parameter name: " + name);
    auto p = std::make_unique<Param<S>>();
    p->name = name;
    p->value.setZero(rows, cols);
    Param<S>* raw = p.get();
    by_name_[name] = raw;
    params_.push_back(std::move(p));
    return *raw;
  }

  Param<S>* find(const std::string& name) const {
    auto it = by_name_.find(name);
    return it == by_name_.end() ? nullptr : it->second;
  }

  // Insertion order is the canonical iteration order (checkpointing, optimizer).
  const std::vector<std::unique_ptr<Param<S>>>& all() const { return params_; }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& p : params_) n += static_cast<size_t>(p->size());
    return n;
  }

  void zero_grads() {
    for (auto& p : params_) p->zero_grad();
  }

 private:
  std::vector<std::unique_ptr<Param<S>>> params_;
  std::map<std::string, Param<S>*> by_name_;
};

// PyTorch-style fan-in uniform init for affine maps.
template <typename S>
void init_linear(Param<S>& W, Param<S>& b, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(W.value.rows()));
  rng.fill_uniform(W.value, -bound, bound);
  rng.fill_uniform(b.value, -bound, bound);
}

template <typename S>
struct Linear {
  Param<S>* W = nullptr;  // (in x out)
  Param<S>* b = nullptr;  // (1 x out)

  static Linear create(ParamStore<S>& ps, const std::string& prefix, Eigen::Index in,
                       Eigen::Index out, Rng& rng) {
    Linear l;
    l.W = &ps.create(prefix + ".weight", in, out);
    l.b = &ps.create(prefix + ".bias", 1, out);
    init_linear(*l.W, *l.b, rng);
    return l;
  }

  int forward(Graph<S>& g, int x) const {
    return g.add_rowvec(g.matmul(x, g.param(*W)), g.param(*b));
  }
};

template <typename S>
struct LayerNorm {
  Param<S>* gain = nullptr;  // (1 x C)
  Param<S>* bias = nullptr;  // (1 x C)

  static LayerNorm create(ParamStore<S>& ps, const std::string& prefix, Eigen::Index C) {
    LayerNorm ln;
    ln.gain = &ps.create(prefix + ".gain", 1, C);
    ln.bias = &ps.create(prefix + ".bias", 1, C);
    ln.gain->value.setOnes();
    return ln;
  }

  int forward(Graph<S>& g, int x) const {
    return g.layer_norm(x, g.param(*gain), g.param(*bias));
  }
};

// Optional capture of evaluation internals (attention maps).
template <typename S>
struct ForwardCapture {
  std::vector<Mat<S>> attention_probs;
};

// One pre-norm residual block: cross-attention of the query stream over the
// key/value stream, then a feed-forward sublayer (expansion 4, GELU).
template <typename S>
struct CrossAttentionBlock {
  LayerNorm<S> ln_q, ln_kv, ln_ffn;
  Linear<S> wq, wk, wv, wo, ff1, ff2;
  int heads = 1;

  static CrossAttentionBlock create(ParamStore<S>& ps, const std::string& prefix,
                                    Eigen::Index dim, int heads, Rng& rng) {
    CrossAttentionBlock b;
    b.heads = heads;
    b.ln_q = LayerNorm<S>::create(ps, prefix + ".ln_q", dim);
    b.ln_kv = LayerNorm<S>::create(ps, prefix + ".ln_kv", dim);
    b.wq = Linear<S>::create(ps, prefix + ".wq", dim, dim, rng);
    b.wk = Linear<S>::create(ps, prefix + ".wk", dim, dim, rng);
    b.wv = Linear<S>::create(ps, prefix + ".wv", dim, dim, rng);
    b.wo = Linear<S>::create(ps, prefix + ".wo", dim, dim, rng);
    b.ln_ffn = LayerNorm<S>::create(ps, prefix + ".ln_ffn", dim);
    b.ff1 = Linear<S>::create(ps, prefix + ".ff1", dim, dim * 4, rng);
    b.ff2 = Linear<S>::create(ps, prefix + ".ff2", dim * 4, dim, rng);
    return b;
  }

  // q: (B*Tq x D) query stream, kv: (B*Tkv x D); samples are contiguous blocks.
  int forward(Graph<S>& g, int q, int kv, int batch, Eigen::Index t_q, Eigen::Index t_kv,
              ForwardCapture<S>* capture = nullptr) const {
    int qn = ln_q.forward(g, q);
    int kvn = ln_kv.forward(g, kv);
    int qp = wq.forward(g, qn);
    int kp = wk.forward(g, kvn);
    int vp = wv.forward(g, kvn);
    std::vector<int> outs;
    outs.reserve(static_cast<size_t>(batch));
    for (int b = 0; b < batch; ++b) {
      int qb = g.slice_rows(qp, b * t_q, t_q);
      int kb = g.slice_rows(kp, b * t_kv, t_kv);
      int vb = g.slice_rows(vp, b * t_kv, t_kv);
      outs.push_back(g.multihead_attention(qb, kb, vb, heads,
                                           capture ? &capture->attention_probs : nullptr));
    }
    int attn = batch == 1 ? outs[0] : g.concat_rows(outs);
    int h = g.add(q, wo.forward(g, attn));
    int f = ff2.forward(g, g.gelu(ff1.forward(g, ln_ffn.forward(g, h))));
    return g.add(h, f);
  }
};

// Stack of cross-attention blocks driven by learnable query tokens; the
// updated queries are the output embeddings.
template <typename S>
struct QueryDecoder {
  Param<S>* queries = nullptr;  // (T_out x D)
  std::vector<CrossAttentionBlock<S>> blocks;
  Eigen::Index t_out = 0;

  static QueryDecoder create(ParamStore<S>& ps, const std::string& prefix, Eigen::Index t_out,
                             Eigen::Index dim, int depth, int heads, Rng& rng) {
    QueryDecoder d;
    d.t_out = t_out;
    d.queries = &ps.create(prefix + ".query", t_out, dim);
    rng.fill_gaussian(d.queries->value, 0.02);
    for (int i = 0; i < depth; ++i)
      d.blocks.push_back(CrossAttentionBlock<S>::create(
          ps, prefix + ".block" + std::to_string(i), dim, heads, rng));
    return d;
  }

  // kv: (B*Tkv x D) -> (B*t_out x D)
  int forward(Graph<S>& g, int kv, int batch, Eigen::Index t_kv,
              ForwardCapture<S>* capture = nullptr) const {
    int q = g.param(*queries);
    if (batch > 1) q = g.tile_rows(q, batch);
    for (const auto& b : blocks) q = b.forward(g, q, kv, batch, t_out, t_kv, capture);
    return q;
  }
};

enum class DiscVariant { kLinear, kNonlinear2L, kNonlinear3L };

inline const char* to_string(DiscVariant v) {
  switch (v) {
    case DiscVariant::kLinear: return "linear";
    case DiscVariant::kNonlinear2L: return "nonlinear-2L";
    case DiscVariant::kNonlinear3L: return "nonlinear-3L";
  }
  return "?";
}

inline DiscVariant disc_variant_from_string(const std::string& s) {
  if (s == "linear") return DiscVariant::kLinear;
  if (s == "nonlinear-2L") return DiscVariant::kNonlinear2L;
  if (s == "nonlinear-3L") return DiscVariant::kNonlinear3L;
  throw ConfigError("unknown discriminator variant: " + s);
}

// Subject discriminator over global brain representations; emits one logit
// per training subject.
template <typename S>
struct Discriminator {
  DiscVariant variant = DiscVariant::kNonlinear2L;
  std::vector<Linear<S>> hidden;
  std::vector<LayerNorm<S>> norms;
  Linear<S> out;
  S drop = static_cast<S>(0.5);

  static Discriminator create(ParamStore<S>& ps, const std::string& prefix, Eigen::Index dim,
                              int n_subjects, DiscVariant variant, Rng& rng) {
    Discriminator d;
    d.variant = variant;
    int n_hidden = variant == DiscVariant::kLinear ? 0
                   : variant == DiscVariant::kNonlinear2L ? 1
                                                          : 2;
    for (int i = 0; i < n_hidden; ++i) {
      std::string hp = prefix + ".hidden" + std::to_string(i);
      d.hidden.push_back(Linear<S>::create(ps, hp, dim, dim, rng));
      d.norms.push_back(LayerNorm<S>::create(ps, hp + ".ln", dim));
    }
    d.out = Linear<S>::create(ps, prefix + ".out", dim, n_subjects, rng);
    return d;
  }

  // x: (B x D) -> logits (B x N)
  int forward(Graph<S>& g, int x, Rng* rng, bool training) const {
    int h = x;
    for (size_t i = 0; i < hidden.size(); ++i) {
      h = g.gelu(norms[i].forward(g, hidden[i].forward(g, h)));
      if (training && rng) h = g.dropout(h, drop, *rng, true);
    }
    return out.forward(g, h);
  }
};

}  // namespace unibrain
