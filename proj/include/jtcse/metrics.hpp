#pragma once

#include <string>
#include <vector>

#include "jtcse/checkpoint.hpp"
#include "jtcse/infer.hpp"

namespace jtcse {

// Rank correlation with average-rank tie handling.
double spearman(const std::vector<double>& pred, const std::vector<double>& gold);

struct CosineDensity {
  // per bucket: predicted cosines of the pairs whose gold falls in it
  std::vector<std::vector<double>> buckets;
  std::vector<double> medians;  // NaN for empty buckets
  double monotonicity = 0.0;    // spearman(bucket index, median) over nonempty
};

CosineDensity cosine_density(const std::vector<double>& pred_cos,
                             const std::vector<double>& gold, int n_buckets = 5);

void write_cosine_density_csv(const std::string& path, const CosineDensity& cd);

struct EvalReport {
  double spearman = 0.0;
  double alignment = 0.0;
  double uniformity = 0.0;
};

EvalReport evaluate(const TwinModel& model, const Vocab& vocab,
                    const std::vector<STSExample>& sts, int max_len);

// Head-averaged attention matrices per (tower, layer) with per-token column
// sums; per-head matrices included when per_head is set.
void attention_dump(const TwinModel& model, const Vocab& vocab,
                    const std::string& sentence, const std::string& out_path,
                    bool per_head = false);

struct EclsTrendRow {
  std::string checkpoint_id;
  double mean_ecls = 0.0;
  double spearman = 0.0;
};

struct EclsTrend {
  std::vector<EclsTrendRow> rows;
  double correlation = 0.0;  // rank correlation between the two columns
};

EclsTrend ecls_trend(const std::vector<std::pair<std::string, CheckpointBundle>>& checkpoints,
                     const std::vector<STSExample>& sts_dev, int max_len);

void write_ecls_trend_csv(const std::string& path, const EclsTrend& trend);

}  // namespace jtcse
