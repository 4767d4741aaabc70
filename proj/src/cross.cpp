#include "jtcse/cross.hpp"

#include <cmath>

#include "jtcse/rng.hpp"

namespace jtcse {

CaelPlacement cael_positions(int n_layers, int k) {
  if (k < 1 || k > n_layers)
    throw ConfigError("CAEL interval " + std::to_string(k) +
                      " out of range [1," + std::to_string(n_layers) + "]");
  CaelPlacement p;
  p.interval = k;
  for (int i = 1; i <= n_layers; ++i)
    if (i % k == 0) p.positions.insert(i);
  return p;
}

std::vector<std::pair<std::string, Tensor>> TwinModel::named_params() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (auto& [name, t] : encoder_I.named_params()) out.emplace_back("I." + name, t);
  for (auto& [name, t] : encoder_II.named_params()) out.emplace_back("II." + name, t);
  return out;
}

TwinModel make_twin(const EncoderConfig& cfg, int cael_interval,
                    uint64_t seed_I, uint64_t seed_II) {
  TwinModel m;
  m.cfg = cfg;
  // The towers start at different weight scales, standing in for the
  // heterogeneous pretrained encoders whose output moduli the TMC is meant
  // to reconcile; with equal scales the constraint has nothing to do.
  m.encoder_I = init_weights(cfg, seed_I, 0.02);
  m.encoder_II = init_weights(cfg, seed_II, 0.035);
  m.placement = cael_positions(cfg.n_layers, cael_interval);
  return m;
}

Tensor cross_context(Graph& g, const LayerWeights& w, int n_heads,
                     const std::vector<Tensor>& sa_heads_self,
                     const Tensor& v_proj_other) {
  int d = v_proj_other.shape()[2];
  int dh = d / n_heads;
  std::vector<Tensor> head_ctx;
  for (int h = 0; h < n_heads; ++h) {
    Tensor vh = g.slice(v_proj_other, 2, h * dh, dh);
    head_ctx.push_back(g.matmul(sa_heads_self[h], vh));
  }
  return g.add_bias(g.matmul(g.concat(head_ctx, 2), w.wo), w.bo);
}

TwinOutputs twin_forward(Graph& g, const TwinModel& model, const Batch& batch,
                         uint64_t seed, bool dropout_on, bool cross_on,
                         bool keep_diagnostics) {
  const EncoderConfig& cfg = model.cfg;
  int n = batch.cols();
  if (n > cfg.max_seq_len)
    throw DataError("sequence length " + std::to_string(n) + " exceeds max " +
                    std::to_string(cfg.max_seq_len));
  double p = dropout_on ? cfg.dropout_p : 0.0;
  uint64_t seed_I = Rng::split(seed, "tower-I").next_u64();
  uint64_t seed_II = Rng::split(seed, "tower-II").next_u64();

  Tensor mask_bias = attention_mask_bias(batch);
  TwinOutputs out;
  out.cross_computed = cross_on;

  const EncoderWeights* enc[2] = {&model.encoder_I, &model.encoder_II};
  uint64_t seeds[2] = {seed_I, seed_II};
  EmbeddingOutputs* eo[2] = {&out.I, &out.II};
  Tensor hd[2];
  for (int t = 0; t < 2; ++t) {
    hd[t] = g.add_broadcast0(g.gather_rows(enc[t]->tok_emb, batch.token_ids),
                             g.slice(enc[t]->pos_emb, 0, 0, n));
    eo[t]->layer_states.push_back(hd[t]);
  }

  for (int i = 0; i < cfg.n_layers; ++i) {
    std::string label = "layer" + std::to_string(i);
    AttentionPieces attn[2];
    Tensor hd_prev[2] = {hd[0], hd[1]};
    for (int t = 0; t < 2; ++t) {
      attn[t] = self_attention(g, enc[t]->layers[i], cfg.n_heads, hd_prev[t],
                               mask_bias, p, seeds[t], label);
      hd[t] = encoder_layer_tail(g, enc[t]->layers[i], hd_prev[t],
                                 attn[t].context, p, seeds[t], label);
      eo[t]->layer_states.push_back(hd[t]);
      if (keep_diagnostics) {
        eo[t]->sa_heads_per_layer.push_back(attn[t].sa_heads);
        eo[t]->context_per_layer.push_back(attn[t].context);
      }
    }
    if (cross_on && model.placement.positions.count(i + 1)) {
      std::string clabel = "cross." + label;
      for (int t = 0; t < 2; ++t) {
        int o = 1 - t;
        Tensor cact = cross_context(g, enc[t]->layers[i], cfg.n_heads,
                                    attn[t].sa_heads, attn[o].v_proj);
        Tensor ch = encoder_layer_tail(g, enc[t]->layers[i], hd_prev[t], cact,
                                       p, seeds[t], clabel);
        (t == 0 ? out.cross.cross_hidden_I : out.cross.cross_hidden_II)
            .push_back(ch);
      }
    }
  }

  for (int t = 0; t < 2; ++t) {
    eo[t]->last_hidden = hd[t];
    eo[t]->cls_pool = cls_of(g, hd[t]);
    eo[t]->pooler_out = g.tanh(
        g.add_bias(g.matmul(eo[t]->cls_pool, enc[t]->pooler_w), enc[t]->pooler_b));
  }
  if (cross_on && !out.cross.cross_hidden_I.empty()) {
    out.cross.c_I_O = cls_of(g, out.cross.cross_hidden_I.back());
    out.cross.c_II_O = cls_of(g, out.cross.cross_hidden_II.back());
  }
  return out;
}

std::vector<double> cls_energy_weight(const std::vector<double>& context,
                                      int B, int n, int d, const Batch& batch) {
  if (static_cast<size_t>(B) * n * d != context.size())
    throw NumericError("cls_energy_weight: context size mismatch");
  std::vector<double> out(B);
  for (int b = 0; b < B; ++b) {
    double cls_sq = 0.0;
    for (int j = 0; j < d; ++j) {
      double x = context[(static_cast<size_t>(b) * n) * d + j];
      cls_sq += x * x;
    }
    double rest_sq = 0.0;
    int rest_count = 0;
    for (int t = 1; t < n; ++t) {
      if (batch.attention_mask[b][t] == 0) continue;
      ++rest_count;
      for (int j = 0; j < d; ++j) {
        double x = context[(static_cast<size_t>(b) * n + t) * d + j];
        rest_sq += x * x;
      }
    }
    if (rest_count == 0)
      throw NumericError("cls_energy_weight: no non-CLS tokens in example " +
                         std::to_string(b));
    out[b] = std::sqrt(cls_sq) / std::sqrt(rest_sq);
  }
  return out;
}

}  // namespace jtcse
