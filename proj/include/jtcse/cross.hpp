#pragma once

#include <cstdint>
#include <set>
#include <vector>

#include "jtcse/encoder.hpp"

namespace jtcse {

struct CaelPlacement {
  int interval = 2;
  std::set<int> positions;  // 1-based layer indices, i mod k == 0
};

CaelPlacement cael_positions(int n_layers, int k);

struct TwinModel {
  EncoderConfig cfg;
  EncoderWeights encoder_I, encoder_II;
  CaelPlacement placement;

  std::vector<std::pair<std::string, Tensor>> named_params() const;
};

TwinModel make_twin(const EncoderConfig& cfg, int cael_interval,
                    uint64_t seed_I, uint64_t seed_II);

struct CrossOutputs {
  // per-CAEL cross hidden states, one entry per position in placement order
  std::vector<Tensor> cross_hidden_I, cross_hidden_II;
  Tensor c_I_O, c_II_O;  // CLS of the last CAEL's cross branch  [B x d]
};

struct TwinOutputs {
  EmbeddingOutputs I, II;
  CrossOutputs cross;
  bool cross_computed = false;
};

// CACT = SA_self (per head) applied to the other tower's V-projected hidden
// state, heads concatenated, projected with the current tower's O weights.
Tensor cross_context(Graph& g, const LayerWeights& w, int n_heads,
                     const std::vector<Tensor>& sa_heads_self,
                     const Tensor& v_proj_other);

// Primitive streams are computed exactly as standalone forwards; the cross
// branch is evaluated per CAEL from them and never propagated layer-to-layer.
TwinOutputs twin_forward(Graph& g, const TwinModel& model, const Batch& batch,
                         uint64_t seed, bool dropout_on, bool cross_on,
                         bool keep_diagnostics = false);

// E_CLS per example: ||h_cls||_2 / ||H_-||_F over non-CLS, non-pad rows.
std::vector<double> cls_energy_weight(const std::vector<double>& context,
                                      int B, int n, int d, const Batch& batch);

}  // namespace jtcse
