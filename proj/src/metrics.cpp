#include "jtcse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "jtcse/losses.hpp"

namespace jtcse {

namespace {

std::vector<double> average_ranks(const std::vector<double>& x) {
  size_t n = x.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](size_t a, size_t b) { return x[a] < x[b]; });
  std::vector<double> ranks(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
    double r = 0.5 * (i + j) + 1.0;  // average of 1-based positions
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  size_t n = a.size();
  double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double cov = 0.0, va = 0.0, vb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  if (va == 0.0 || vb == 0.0)
    throw NumericError("spearman: constant input, correlation undefined");
  return cov / std::sqrt(va * vb);
}

}  // namespace

double spearman(const std::vector<double>& pred, const std::vector<double>& gold) {
  if (pred.size() != gold.size())
    throw NumericError("spearman: length mismatch " +
                       std::to_string(pred.size()) + " vs " +
                       std::to_string(gold.size()));
  if (pred.size() < 2) throw NumericError("spearman: needs at least 2 points");
  return pearson(average_ranks(pred), average_ranks(gold));
}

CosineDensity cosine_density(const std::vector<double>& pred_cos,
                             const std::vector<double>& gold, int n_buckets) {
  if (pred_cos.size() != gold.size())
    throw NumericError("cosine_density: length mismatch");
  CosineDensity cd;
  cd.buckets.resize(n_buckets);
  double width = 5.0 / n_buckets;
  for (size_t i = 0; i < gold.size(); ++i) {
    int b = std::min(n_buckets - 1, static_cast<int>(gold[i] / width));
    cd.buckets[b].push_back(pred_cos[i]);
  }
  std::vector<double> idx, med;
  for (int b = 0; b < n_buckets; ++b) {
    if (cd.buckets[b].empty()) {
      cd.medians.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    std::vector<double> v = cd.buckets[b];
    std::sort(v.begin(), v.end());
    double m = v.size() % 2 ? v[v.size() / 2]
                            : 0.5 * (v[v.size() / 2 - 1] + v[v.size() / 2]);
    cd.medians.push_back(m);
    idx.push_back(b);
    med.push_back(m);
  }
  bool med_const =
      std::all_of(med.begin(), med.end(), [&](double m) { return m == med[0]; });
  cd.monotonicity = (idx.size() >= 2 && !med_const) ? spearman(idx, med) : 0.0;
  return cd;
}

void write_cosine_density_csv(const std::string& path, const CosineDensity& cd) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << "bucket,cosine\n";
  out.precision(17);
  for (size_t b = 0; b < cd.buckets.size(); ++b)
    for (double c : cd.buckets[b]) out << b << "," << c << "\n";
}

EvalReport evaluate(const TwinModel& model, const Vocab& vocab,
                    const std::vector<STSExample>& sts, int max_len) {
  std::vector<double> pred = predict_sts(model, vocab, sts, max_len);
  std::vector<double> gold;
  for (const auto& ex : sts) gold.push_back(ex.gold);
  EvalReport rep;
  rep.spearman = spearman(pred, gold);

  // alignment over high-similarity pairs (gold >= 4), uniformity over all
  // left-hand embeddings
  std::vector<std::string> a, b, pos_a, pos_b;
  for (const auto& ex : sts) {
    a.push_back(ex.sentence_a);
    if (ex.gold >= 4.0) {
      pos_a.push_back(ex.sentence_a);
      pos_b.push_back(ex.sentence_b);
    }
  }
  auto ea = embed_sentences(model, vocab, a, max_len);
  rep.uniformity = uniformity(ea, 2.0);
  if (!pos_a.empty()) {
    auto pa = embed_sentences(model, vocab, pos_a, max_len);
    auto pb = embed_sentences(model, vocab, pos_b, max_len);
    rep.alignment = alignment(pa, pb);
  }
  return rep;
}

void attention_dump(const TwinModel& model, const Vocab& vocab,
                    const std::string& sentence, const std::string& out_path,
                    bool per_head) {
  Batch batch = pad_batch({tokenize(vocab, sentence, model.cfg.max_seq_len)});
  Graph g;
  TwinOutputs out = twin_forward(g, model, batch, 0, false, false, true);
  int n = batch.cols();

  nlohmann::ordered_json doc;
  std::vector<std::string> toks;
  for (int id : batch.token_ids[0]) toks.push_back(vocab.token(id));
  doc["tokens"] = toks;
  const char* tower_names[2] = {"I", "II"};
  const EmbeddingOutputs* eo[2] = {&out.I, &out.II};
  for (int t = 0; t < 2; ++t) {
    nlohmann::ordered_json layers = nlohmann::ordered_json::array();
    for (size_t li = 0; li < eo[t]->sa_heads_per_layer.size(); ++li) {
      const auto& heads = eo[t]->sa_heads_per_layer[li];
      std::vector<std::vector<double>> avg(n, std::vector<double>(n, 0.0));
      for (const Tensor& h : heads)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            avg[i][j] += h.values()[static_cast<size_t>(i) * n + j] / heads.size();
      std::vector<double> col_sums(n, 0.0);
      for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) col_sums[j] += avg[i][j];
      nlohmann::ordered_json layer;
      layer["layer"] = li + 1;
      layer["attention"] = avg;
      layer["column_sums"] = col_sums;
      auto ecls = cls_energy_weight(eo[t]->context_per_layer[li].values(), 1, n,
                                    model.cfg.d, batch);
      layer["e_cls"] = ecls[0];
      if (per_head) {
        nlohmann::ordered_json hj = nlohmann::ordered_json::array();
        for (const Tensor& h : heads) {
          std::vector<std::vector<double>> m(n, std::vector<double>(n));
          for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
              m[i][j] = h.values()[static_cast<size_t>(i) * n + j];
          hj.push_back(m);
        }
        layer["heads"] = hj;
      }
      layers.push_back(layer);
    }
    doc[std::string("tower_") + tower_names[t]] = layers;
  }
  std::ofstream f(out_path);
  if (!f) throw IoError("cannot write attention dump to " + out_path);
  f << doc.dump(2) << "\n";
  if (!f) throw IoError("write failed for " + out_path);
}

EclsTrend ecls_trend(
    const std::vector<std::pair<std::string, CheckpointBundle>>& checkpoints,
    const std::vector<STSExample>& sts_dev, int max_len) {
  if (checkpoints.size() < 2)
    throw NumericError("ecls_trend: needs at least 2 checkpoints");
  EclsTrend trend;
  std::vector<std::string> dev_sentences;
  for (const auto& ex : sts_dev) dev_sentences.push_back(ex.sentence_a);
  std::vector<double> gold;
  for (const auto& ex : sts_dev) gold.push_back(ex.gold);
  std::vector<double> es, sp;
  for (const auto& [id, ckpt] : checkpoints) {
    EclsTrendRow row;
    row.checkpoint_id = id;
    row.mean_ecls = mean_ecls(ckpt.twin, ckpt.vocab, dev_sentences, max_len);
    row.spearman =
        spearman(predict_sts(ckpt.twin, ckpt.vocab, sts_dev, max_len), gold);
    es.push_back(row.mean_ecls);
    sp.push_back(row.spearman);
    trend.rows.push_back(std::move(row));
  }
  bool es_const = std::all_of(es.begin(), es.end(), [&](double x) { return x == es[0]; });
  bool sp_const = std::all_of(sp.begin(), sp.end(), [&](double x) { return x == sp[0]; });
  trend.correlation = (es_const || sp_const) ? 0.0 : spearman(es, sp);
  return trend;
}

void write_ecls_trend_csv(const std::string& path, const EclsTrend& trend) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "checkpoint,e_cls,spearman\n";
  for (const auto& r : trend.rows)
    out << r.checkpoint_id << "," << r.mean_ecls << "," << r.spearman << "\n";
}

}  // namespace jtcse
