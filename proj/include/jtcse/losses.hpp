#pragma once

#include <vector>

#include "jtcse/cross.hpp"
#include "jtcse/tensor.hpp"

namespace jtcse {

struct LossConfig {
  double tau = 0.05;
  double sim_clamp_eps = 1e-4;
  double uniformity_t = 2.0;

  void validate() const {
    if (tau <= 0.0) throw ConfigError("temperature must be positive");
    if (sim_clamp_eps <= 0.0 || sim_clamp_eps >= 1.0)
      throw ConfigError("sim_clamp_eps must be in (0,1)");
  }
};

struct LossReport {
  double l_nce_I = 0.0, l_nce_II = 0.0, l_icnce = 0.0, l_ictm = 0.0;
  double total_value = 0.0;
  Tensor total;  // graph scalar, backward-ready
  bool grads_available = false;
};

// Mean over i of -log( exp(sim(h_i,h+_i)/tau) / sum_j exp(sim(h_i,h+_j)/tau) ).
Tensor info_nce(Graph& g, const Tensor& h, const Tensor& h_pos, double tau);

// ||h - h+|| / (||h|| + ||h+||) for a single pair of vectors.
Tensor tmc_geometric(Graph& g, const Tensor& h, const Tensor& h_pos);
double tmc_geometric_value(const std::vector<double>& h,
                           const std::vector<double>& h_pos);

// Closed binary form sqrt(1 + k^2 - 2kt) / (1 + k), k = norm ratio, t = cos.
double tmc_binary(double k, double t);

// -log(clamp(sim(h_I^L, h_II^L), eps, 1)) * modulus mismatch of the pooler
// outputs, batch-meaned.
Tensor tmc_amended(Graph& g, const Tensor& h_i_P, const Tensor& h_j_P_pos,
                   const Tensor& h_I_L, const Tensor& h_II_L, double eps);

Tensor ictm(Graph& g, const Tensor& pooler_I, const Tensor& pooler_I_pos,
            const Tensor& pooler_II, const Tensor& pooler_II_pos,
            const Tensor& h_I_L, const Tensor& h_II_L, double eps);

Tensor icnce(Graph& g, const Tensor& h_I_L, const Tensor& h_II_L,
             const Tensor& c_I_O, const Tensor& c_II_O, double tau, int R);

struct LossMask {
  bool nce = true, icnce = true, ictm = true;
  void validate() const {
    if (!nce && !icnce && !ictm) throw ConfigError("loss mask must be nonempty");
  }
};

LossReport total_loss(Graph& g, const TwinOutputs& pass1,
                      const TwinOutputs& pass2, const LossConfig& cfg, int R,
                      const LossMask& mask = LossMask{});

// Embedding-quality metrics on the unit hypersphere (value-level, no grads).
double alignment(const std::vector<std::vector<double>>& h,
                 const std::vector<std::vector<double>>& h_pos);
double uniformity(const std::vector<std::vector<double>>& h, double t);

}  // namespace jtcse
