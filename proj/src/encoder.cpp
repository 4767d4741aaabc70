#include "jtcse/encoder.hpp"

#include <cmath>

#include "jtcse/rng.hpp"

namespace jtcse {

namespace {

Tensor trunc_normal_param(Shape shape, double std_dev, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
  for (double& x : v) x = rng.next_trunc_normal(std_dev);
  return Tensor::param(std::move(shape), std::move(v));
}

Tensor fill_param(Shape shape, double value) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), value);
  return Tensor::param(std::move(shape), std::move(v));
}

}  // namespace

std::vector<std::pair<std::string, Tensor>> EncoderWeights::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  out.emplace_back("tok_emb", tok_emb);
  out.emplace_back("pos_emb", pos_emb);
  for (size_t i = 0; i < layers.size(); ++i) {
    const LayerWeights& l = layers[i];
    std::string p = "layer" + std::to_string(i) + ".";
    out.emplace_back(p + "wq", l.wq);
    out.emplace_back(p + "bq", l.bq);
    out.emplace_back(p + "wk", l.wk);
    out.emplace_back(p + "bk", l.bk);
    out.emplace_back(p + "wv", l.wv);
    out.emplace_back(p + "bv", l.bv);
    out.emplace_back(p + "wo", l.wo);
    out.emplace_back(p + "bo", l.bo);
    out.emplace_back(p + "ffn_in", l.ffn_in);
    out.emplace_back(p + "ffn_in_b", l.ffn_in_b);
    out.emplace_back(p + "ffn_out", l.ffn_out);
    out.emplace_back(p + "ffn_out_b", l.ffn_out_b);
    out.emplace_back(p + "ln1_g", l.ln1_g);
    out.emplace_back(p + "ln1_b", l.ln1_b);
    out.emplace_back(p + "ln2_g", l.ln2_g);
    out.emplace_back(p + "ln2_b", l.ln2_b);
  }
  out.emplace_back("pooler_w", pooler_w);
  out.emplace_back("pooler_b", pooler_b);
  return out;
}

EncoderWeights init_weights(const EncoderConfig& cfg, uint64_t seed,
                            double std_dev) {
  cfg.validate();
  const double kStd = std_dev;
  EncoderWeights w;
  w.cfg = cfg;
  Rng r = Rng::split(seed, "encoder-init");
  w.tok_emb = trunc_normal_param({cfg.vocab_size, cfg.d}, kStd, r);
  w.pos_emb = trunc_normal_param({cfg.max_seq_len, cfg.d}, kStd, r);
  for (int i = 0; i < cfg.n_layers; ++i) {
    LayerWeights l;
    l.wq = trunc_normal_param({cfg.d, cfg.d}, kStd, r);
    l.wk = trunc_normal_param({cfg.d, cfg.d}, kStd, r);
    l.wv = trunc_normal_param({cfg.d, cfg.d}, kStd, r);
    l.wo = trunc_normal_param({cfg.d, cfg.d}, kStd, r);
    l.bq = fill_param({cfg.d}, 0.0);
    l.bk = fill_param({cfg.d}, 0.0);
    l.bv = fill_param({cfg.d}, 0.0);
    l.bo = fill_param({cfg.d}, 0.0);
    l.ffn_in = trunc_normal_param({cfg.d, cfg.d_ffn}, kStd, r);
    l.ffn_in_b = fill_param({cfg.d_ffn}, 0.0);
    l.ffn_out = trunc_normal_param({cfg.d_ffn, cfg.d}, kStd, r);
    l.ffn_out_b = fill_param({cfg.d}, 0.0);
    l.ln1_g = fill_param({cfg.d}, 1.0);
    l.ln1_b = fill_param({cfg.d}, 0.0);
    l.ln2_g = fill_param({cfg.d}, 1.0);
    l.ln2_b = fill_param({cfg.d}, 0.0);
    w.layers.push_back(std::move(l));
  }
  w.pooler_w = trunc_normal_param({cfg.d, cfg.d}, kStd, r);
  w.pooler_b = fill_param({cfg.d}, 0.0);
  return w;
}

EncoderWeights zero_weights(const EncoderConfig& cfg) {
  auto zp = [](Shape s) {
    std::vector<double> v(static_cast<size_t>(shape_numel(s)), 0.0);
    return Tensor::param(std::move(s), std::move(v));
  };
  EncoderWeights w;
  w.cfg = cfg;
  w.tok_emb = zp({cfg.vocab_size, cfg.d});
  w.pos_emb = zp({cfg.max_seq_len, cfg.d});
  for (int i = 0; i < cfg.n_layers; ++i) {
    LayerWeights l;
    l.wq = zp({cfg.d, cfg.d});
    l.wk = zp({cfg.d, cfg.d});
    l.wv = zp({cfg.d, cfg.d});
    l.wo = zp({cfg.d, cfg.d});
    l.bq = zp({cfg.d});
    l.bk = zp({cfg.d});
    l.bv = zp({cfg.d});
    l.bo = zp({cfg.d});
    l.ffn_in = zp({cfg.d, cfg.d_ffn});
    l.ffn_in_b = zp({cfg.d_ffn});
    l.ffn_out = zp({cfg.d_ffn, cfg.d});
    l.ffn_out_b = zp({cfg.d});
    l.ln1_g = zp({cfg.d});
    l.ln1_b = zp({cfg.d});
    l.ln2_g = zp({cfg.d});
    l.ln2_b = zp({cfg.d});
    w.layers.push_back(std::move(l));
  }
  w.pooler_w = zp({cfg.d, cfg.d});
  w.pooler_b = zp({cfg.d});
  return w;
}

EncoderWeights clone_weights(const EncoderWeights& w) {
  EncoderWeights out = zero_weights(w.cfg);
  auto src = w.named_params();
  auto dst = out.named_params();
  for (size_t i = 0; i < src.size(); ++i) dst[i].second.values() = src[i].second.values();
  return out;
}

Tensor dropout_mask(const Shape& shape, double p, uint64_t seed,
                    const std::string& label) {
  std::vector<double> m(static_cast<size_t>(shape_numel(shape)));
  Rng r = Rng::split(seed, "dropout:" + label);
  double keep = 1.0 / (1.0 - p);
  for (double& x : m) x = r.next_double() < p ? 0.0 : keep;
  Shape s = shape;
  return Tensor::constant(std::move(s), std::move(m));
}

Tensor attention_mask_bias(const Batch& batch) {
  int B = batch.rows(), n = batch.cols();
  std::vector<double> bias(static_cast<size_t>(B) * n * n, 0.0);
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < n; ++j)
      if (batch.attention_mask[b][j] == 0)
        for (int i = 0; i < n; ++i)
          bias[(static_cast<size_t>(b) * n + i) * n + j] = -1e9;
  return Tensor::constant({B, n, n}, std::move(bias));
}

AttentionPieces self_attention(Graph& g, const LayerWeights& w, int n_heads,
                               const Tensor& hd_prev, const Tensor& mask_bias,
                               double dropout_p, uint64_t seed,
                               const std::string& label) {
  int d = hd_prev.shape()[2];
  int dh = d / n_heads;
  Tensor q = g.add_bias(g.matmul(hd_prev, w.wq), w.bq);
  Tensor k = g.add_bias(g.matmul(hd_prev, w.wk), w.bk);
  Tensor v = g.add_bias(g.matmul(hd_prev, w.wv), w.bv);

  AttentionPieces out;
  out.v_proj = v;
  std::vector<Tensor> head_ctx;
  for (int h = 0; h < n_heads; ++h) {
    Tensor qh = g.slice(q, 2, h * dh, dh);
    Tensor kh = g.slice(k, 2, h * dh, dh);
    Tensor vh = g.slice(v, 2, h * dh, dh);
    Tensor scores = g.scale(g.matmul(qh, g.transpose_last2(kh)), 1.0 / std::sqrt(dh));
    Tensor sa = g.softmax_rows(g.add(scores, mask_bias));
    out.sa_heads.push_back(sa);
    if (dropout_p > 0.0)
      sa = g.mul(sa, dropout_mask(sa.shape(), dropout_p, seed,
                                  label + ".attn_probs.h" + std::to_string(h)));
    head_ctx.push_back(g.matmul(sa, vh));
  }
  Tensor concat = g.concat(head_ctx, 2);
  out.context = g.add_bias(g.matmul(concat, w.wo), w.bo);
  return out;
}

Tensor encoder_layer_tail(Graph& g, const LayerWeights& w,
                          const Tensor& hd_prev, const Tensor& context,
                          double dropout_p, uint64_t seed,
                          const std::string& label) {
  constexpr double kLnEps = 1e-12;
  Tensor ctx = context;
  if (dropout_p > 0.0)
    ctx = g.mul(ctx, dropout_mask(ctx.shape(), dropout_p, seed, label + ".attn_out"));
  Tensor x1 = g.layer_norm(g.add(hd_prev, ctx), w.ln1_g, w.ln1_b, kLnEps);
  Tensor ffn = g.add_bias(
      g.matmul(g.gelu(g.add_bias(g.matmul(x1, w.ffn_in), w.ffn_in_b)), w.ffn_out),
      w.ffn_out_b);
  if (dropout_p > 0.0)
    ffn = g.mul(ffn, dropout_mask(ffn.shape(), dropout_p, seed, label + ".ffn_out"));
  return g.layer_norm(g.add(x1, ffn), w.ln2_g, w.ln2_b, kLnEps);
}

Tensor encoder_layer(Graph& g, const LayerWeights& w, int n_heads,
                     const Tensor& hd_prev, const Tensor& mask_bias,
                     double dropout_p, uint64_t seed, const std::string& label) {
  AttentionPieces attn =
      self_attention(g, w, n_heads, hd_prev, mask_bias, dropout_p, seed, label);
  return encoder_layer_tail(g, w, hd_prev, attn.context, dropout_p, seed, label);
}

Tensor cls_of(Graph& g, const Tensor& hidden) {
  int B = hidden.shape()[0], d = hidden.shape()[2];
  return g.reshape(g.slice(hidden, 1, 0, 1), {B, d});
}

EmbeddingOutputs forward(Graph& g, const EncoderWeights& w, const Batch& batch,
                         uint64_t seed, bool dropout_on, bool keep_diagnostics) {
  const EncoderConfig& cfg = w.cfg;
  int n = batch.cols();
  if (n > cfg.max_seq_len)
    throw DataError("sequence length " + std::to_string(n) + " exceeds max " +
                    std::to_string(cfg.max_seq_len));
  double p = dropout_on ? cfg.dropout_p : 0.0;

  Tensor emb = g.add_broadcast0(g.gather_rows(w.tok_emb, batch.token_ids),
                                g.slice(w.pos_emb, 0, 0, n));
  Tensor mask_bias = attention_mask_bias(batch);

  EmbeddingOutputs out;
  out.layer_states.push_back(emb);
  Tensor hd = emb;
  for (int i = 0; i < cfg.n_layers; ++i) {
    std::string label = "layer" + std::to_string(i);
    AttentionPieces attn =
        self_attention(g, w.layers[i], cfg.n_heads, hd, mask_bias, p, seed, label);
    hd = encoder_layer_tail(g, w.layers[i], hd, attn.context, p, seed, label);
    out.layer_states.push_back(hd);
    if (keep_diagnostics) {
      out.sa_heads_per_layer.push_back(attn.sa_heads);
      out.context_per_layer.push_back(attn.context);
    }
  }
  out.last_hidden = hd;
  out.cls_pool = cls_of(g, hd);
  out.pooler_out = g.tanh(g.add_bias(g.matmul(out.cls_pool, w.pooler_w), w.pooler_b));
  return out;
}

PoolingVariants pooling_variants(const EmbeddingOutputs& out, const Batch& batch) {
  int B = batch.rows(), n = batch.cols();
  int d = out.last_hidden.shape()[2];
  auto masked_mean = [&](const Tensor& state) {
    std::vector<std::vector<double>> res(B, std::vector<double>(d, 0.0));
    for (int b = 0; b < B; ++b) {
      int count = 0;
      for (int t = 0; t < n; ++t) {
        if (batch.attention_mask[b][t] == 0) continue;
        ++count;
        for (int j = 0; j < d; ++j)
          res[b][j] += state.values()[(static_cast<size_t>(b) * n + t) * d + j];
      }
      for (int j = 0; j < d; ++j) res[b][j] /= count;
    }
    return res;
  };

  PoolingVariants pv;
  pv.avg = masked_mean(out.last_hidden);
  auto first = masked_mean(out.layer_states.front());
  pv.avg_first_last = pv.avg;
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < d; ++j)
      pv.avg_first_last[b][j] = 0.5 * (pv.avg_first_last[b][j] + first[b][j]);
  for (int b = 0; b < B; ++b) {
    pv.cls.emplace_back(out.cls_pool.values().begin() + static_cast<size_t>(b) * d,
                        out.cls_pool.values().begin() + static_cast<size_t>(b + 1) * d);
    pv.pooler.emplace_back(
        out.pooler_out.values().begin() + static_cast<size_t>(b) * d,
        out.pooler_out.values().begin() + static_cast<size_t>(b + 1) * d);
  }
  return pv;
}

}  // namespace jtcse
