#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jtcse/checkpoint.hpp"
#include "jtcse/losses.hpp"

namespace jtcse {

struct TrainConfig {
  int steps = 200;
  int batch_size = 16;
  double learning_rate = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  double weight_decay = 0.0;
  int eval_every = 25;
  uint64_t seed = 1;
  LossMask loss_mask;
  LossConfig loss;
  int max_seq_len = 32;

  void validate() const {
    if (batch_size < 2) throw ConfigError("batch_size must be >= 2");
    if (eval_every < 1) throw ConfigError("eval_every must be >= 1");
    if (steps < 1) throw ConfigError("steps must be >= 1");
    loss_mask.validate();
    loss.validate();
  }
};

class Adam {
public:
  Adam(double lr, double beta1, double beta2, double eps, double weight_decay)
      : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps), wd_(weight_decay) {}

  void step(const std::vector<std::pair<std::string, Tensor>>& params);
  void zero_grads(const std::vector<std::pair<std::string, Tensor>>& params);

private:
  double lr_, b1_, b2_, eps_, wd_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TraceRow {
  long step = 0;
  double loss_total = 0.0;
  double l_nce_I = 0.0, l_nce_II = 0.0, l_icnce = 0.0, l_ictm = 0.0;
  std::optional<double> dev_spearman;
};

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace);

struct TrainResult {
  CheckpointBundle best;
  std::vector<TraceRow> trace;
  double initial_dev_spearman = 0.0;
  double initial_modulus_mismatch = 0.0;
  double final_modulus_mismatch = 0.0;
};

// mean |  ||h_I^P|| - ||h_II^P+||  | / mean norm over a probe batch
double modulus_mismatch(const TwinModel& model, const Batch& batch,
                        uint64_t seed);

TrainResult train(TwinModel& model, const Vocab& vocab,
                  const std::vector<std::string>& corpus,
                  const std::vector<STSExample>& sts_dev,
                  const TrainConfig& cfg);

struct AblationRow {
  std::string mask_label;
  double dev_spearman = 0.0;
  double modulus_mismatch = 0.0;
};

// All subsets trained from the same initialization and seed.
std::vector<AblationRow> ablate(const EncoderConfig& enc_cfg, int cael_interval,
                                const Vocab& vocab,
                                const std::vector<std::string>& corpus,
                                const std::vector<STSExample>& sts_dev,
                                const TrainConfig& base_cfg,
                                const std::vector<LossMask>& subsets);

struct DistillResult {
  CheckpointBundle best;
  std::vector<double> mse_trace;
  double pre_mean_cosine = 0.0;   // student vs teacher on held-out, at init
  double post_mean_cosine = 0.0;  // same, for the selected checkpoint
};

DistillResult distill(const TwinModel& teacher, EncoderWeights student,
                      const Vocab& vocab,
                      const std::vector<std::string>& corpus,
                      const std::vector<STSExample>& sts_dev,
                      const TrainConfig& cfg);

// Analytic inference cost; eta = score / GMAC.
struct MacReport {
  double gmac = 0.0;
  double eta = 0.0;
};

MacReport macs_and_eta(const EncoderConfig& cfg, int n_towers, int seq_len,
                       double score);

}  // namespace jtcse
