#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "jtcse/data.hpp"
#include "jtcse/tensor.hpp"

namespace jtcse {

struct EncoderConfig {
  int n_layers = 4;
  int d = 64;
  int n_heads = 4;
  int d_ffn = 256;
  int vocab_size = 2048;
  int max_seq_len = 32;
  double dropout_p = 0.1;

  void validate() const {
    if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
    if (n_heads < 1 || d % n_heads != 0)
      throw ConfigError("hidden width " + std::to_string(d) +
                        " not divisible by " + std::to_string(n_heads) + " heads");
    if (dropout_p < 0.0 || dropout_p >= 1.0)
      throw ConfigError("dropout_p must be in [0,1)");
  }
};

struct LayerWeights {
  Tensor wq, wk, wv, wo;         // [d x d]
  Tensor bq, bk, bv, bo;         // [d]
  Tensor ffn_in, ffn_out;        // [d x d_ffn], [d_ffn x d]
  Tensor ffn_in_b, ffn_out_b;
  Tensor ln1_g, ln1_b, ln2_g, ln2_b;
};

struct EncoderWeights {
  EncoderConfig cfg;
  Tensor tok_emb;  // [vocab x d]
  Tensor pos_emb;  // [max_seq_len x d]
  std::vector<LayerWeights> layers;
  Tensor pooler_w, pooler_b;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

EncoderWeights init_weights(const EncoderConfig& cfg, uint64_t seed,
                            double std_dev = 0.02);
EncoderWeights zero_weights(const EncoderConfig& cfg);
EncoderWeights clone_weights(const EncoderWeights& w);

// Constant dropout-mask tensor: entries 0 or 1/(1-p), derived from
// (seed, label) so identical seeds give identical masks.
Tensor dropout_mask(const Shape& shape, double p, uint64_t seed,
                    const std::string& label);

// Additive pre-softmax bias: 0 on real keys, -1e9 on pad keys.  [B x n x n]
Tensor attention_mask_bias(const Batch& batch);

struct AttentionPieces {
  std::vector<Tensor> sa_heads;  // per head [B x n x n], post-softmax
  Tensor v_proj;                 // [B x n x d], V-projected hidden state
  Tensor context;                // [B x n x d], output-projected context tensor
};

// SA/CT of one layer (Q,K,V from HD_prev, heads concatenated, O-projected).
AttentionPieces self_attention(Graph& g, const LayerWeights& w, int n_heads,
                               const Tensor& hd_prev, const Tensor& mask_bias,
                               double dropout_p, uint64_t seed,
                               const std::string& label);

// Residual post-norm tail shared by the primitive and cross streams:
// LN1(hd_prev + dropout(context)); LN2(x + dropout(FFN(x))).
Tensor encoder_layer_tail(Graph& g, const LayerWeights& w,
                          const Tensor& hd_prev, const Tensor& context,
                          double dropout_p, uint64_t seed,
                          const std::string& label);

Tensor encoder_layer(Graph& g, const LayerWeights& w, int n_heads,
                     const Tensor& hd_prev, const Tensor& mask_bias,
                     double dropout_p, uint64_t seed, const std::string& label);

struct EmbeddingOutputs {
  Tensor last_hidden;  // [B x n x d]
  Tensor cls_pool;     // [B x d]
  Tensor pooler_out;   // [B x d]
  // index 0 = embedding output, then one entry per layer
  std::vector<Tensor> layer_states;
  std::vector<std::vector<Tensor>> sa_heads_per_layer;
  std::vector<Tensor> context_per_layer;  // post-projection CT per layer
};

EmbeddingOutputs forward(Graph& g, const EncoderWeights& w, const Batch& batch,
                         uint64_t seed, bool dropout_on,
                         bool keep_diagnostics = false);

struct PoolingVariants {
  std::vector<std::vector<double>> cls, avg, avg_first_last, pooler;
};

PoolingVariants pooling_variants(const EmbeddingOutputs& out, const Batch& batch);

Tensor cls_of(Graph& g, const Tensor& hidden);  // [B x n x d] -> [B x d]

}  // namespace jtcse
