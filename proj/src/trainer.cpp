#include "jtcse/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "jtcse/metrics.hpp"
#include "jtcse/rng.hpp"

namespace jtcse {

void Adam::step(const std::vector<std::pair<std::string, Tensor>>& params) {
  if (m_.empty()) {
    for (auto& [name, t] : params) {
      (void)name;
      m_.emplace_back(t.numel(), 0.0);
      v_.emplace_back(t.numel(), 0.0);
    }
  }
  ++t_;
  double bc1 = 1.0 - std::pow(b1_, t_);
  double bc2 = 1.0 - std::pow(b2_, t_);
  for (size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    t.raw()->ensure_grad();
    auto& val = t.values();
    const auto& grad = t.raw()->g;
    auto& m = m_[p];
    auto& v = v_[p];
    for (size_t i = 0; i < val.size(); ++i) {
      double gi = grad[i] + wd_ * val[i];
      m[i] = b1_ * m[i] + (1.0 - b1_) * gi;
      v[i] = b2_ * v[i] + (1.0 - b2_) * gi * gi;
      val[i] -= lr_ * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps_);
    }
  }
}

void Adam::zero_grads(const std::vector<std::pair<std::string, Tensor>>& params) {
  for (auto& [name, t] : params) {
    (void)name;
    t.raw()->ensure_grad();
    t.raw()->zero_grad();
  }
}

void write_trace_csv(const std::string& path, const std::vector<TraceRow>& trace) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out.precision(17);
  out << "step,loss_total,l_nce_I,l_nce_II,l_icnce,l_ictm,dev_spearman\n";
  for (const auto& r : trace) {
    out << r.step << "," << r.loss_total << "," << r.l_nce_I << ","
        << r.l_nce_II << "," << r.l_icnce << "," << r.l_ictm << ",";
    if (r.dev_spearman) out << *r.dev_spearman;
    out << "\n";
  }
}

namespace {

TwinModel clone_twin(const TwinModel& m) {
  TwinModel out;
  out.cfg = m.cfg;
  out.encoder_I = clone_weights(m.encoder_I);
  out.encoder_II = clone_weights(m.encoder_II);
  out.placement = m.placement;
  return out;
}

double dev_spearman_of(const TwinModel& model, const Vocab& vocab,
                       const std::vector<STSExample>& sts_dev, int max_len) {
  std::vector<double> gold;
  for (const auto& ex : sts_dev) gold.push_back(ex.gold);
  return spearman(predict_sts(model, vocab, sts_dev, max_len), gold);
}

void check_finite_loss(const LossReport& rep, long step) {
  struct Item { const char* name; double v; };
  for (const Item& it : {Item{"l_nce_I", rep.l_nce_I}, Item{"l_nce_II", rep.l_nce_II},
                         Item{"l_icnce", rep.l_icnce}, Item{"l_ictm", rep.l_ictm},
                         Item{"total", rep.total_value}})
    if (!std::isfinite(it.v))
      throw NumericError("training diverged at step " + std::to_string(step) +
                         ": " + it.name + " is not finite");
}

double row_norm(const Tensor& m, int b) {
  int d = m.shape()[1];
  double s = 0.0;
  for (int j = 0; j < d; ++j) {
    double x = m.values()[static_cast<size_t>(b) * d + j];
    s += x * x;
  }
  return std::sqrt(s);
}

}  // namespace

double modulus_mismatch(const TwinModel& model, const Batch& batch,
                        uint64_t seed) {
  Graph g;
  uint64_t s1 = Rng::split(seed, "probe-pass1").next_u64();
  uint64_t s2 = Rng::split(seed, "probe-pass2").next_u64();
  TwinOutputs p1 = twin_forward(g, model, batch, s1, true, false);
  TwinOutputs p2 = twin_forward(g, model, batch, s2, true, false);
  int B = batch.rows();
  double num = 0.0, den = 0.0;
  for (int b = 0; b < B; ++b) {
    double nI = row_norm(p1.I.pooler_out, b);
    double nII = row_norm(p2.II.pooler_out, b);
    num += std::fabs(nI - nII);
    den += 0.5 * (nI + nII);
  }
  return (num / B) / (den / B);
}

TrainResult train(TwinModel& model, const Vocab& vocab,
                  const std::vector<std::string>& corpus,
                  const std::vector<STSExample>& sts_dev,
                  const TrainConfig& cfg) {
  cfg.validate();
  if (sts_dev.empty()) throw ConfigError("train: dev set is empty");
  auto params = model.named_params();
  Adam opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps,
           cfg.weight_decay);
  opt.zero_grads(params);

  TrainResult result;
  result.initial_dev_spearman =
      dev_spearman_of(model, vocab, sts_dev, cfg.max_seq_len);

  uint64_t probe_seed = Rng::split(cfg.seed, "probe").next_u64();
  std::vector<Batch> probe = make_batches(corpus, vocab, cfg.batch_size,
                                          cfg.max_seq_len, probe_seed);
  if (probe.empty()) throw DataError("train: corpus smaller than one batch");
  size_t n_probe = std::min<size_t>(probe.size(), 8);
  auto probe_mismatch = [&](const TwinModel& m) {
    double s = 0.0;
    for (size_t i = 0; i < n_probe; ++i)
      s += modulus_mismatch(m, probe[i], probe_seed + i);
    return s / n_probe;
  };
  result.initial_modulus_mismatch = probe_mismatch(model);

  double best = -std::numeric_limits<double>::infinity();
  long best_step = 0;
  long step = 0;
  uint64_t epoch = 0;
  bool need_cross = cfg.loss_mask.icnce;
  while (step < cfg.steps) {
    uint64_t bseed = Rng::split(cfg.seed, "batches", epoch).next_u64();
    std::vector<Batch> batches =
        make_batches(corpus, vocab, cfg.batch_size, cfg.max_seq_len, bseed);
    if (batches.empty()) throw DataError("train: corpus smaller than one batch");
    for (const Batch& batch : batches) {
      if (step >= cfg.steps) break;
      ++step;
      Graph g;
      uint64_t s1 = Rng::split(cfg.seed, "pass1", step).next_u64();
      uint64_t s2 = Rng::split(cfg.seed, "pass2", step).next_u64();
      int R = Rng::split(cfg.seed, "Rgate", step).next_bit();
      TwinOutputs p1 = twin_forward(g, model, batch, s1, true, need_cross);
      TwinOutputs p2 = twin_forward(g, model, batch, s2, true, false);
      LossReport rep = total_loss(g, p1, p2, cfg.loss, R, cfg.loss_mask);
      check_finite_loss(rep, step);
      g.backward(rep.total);
      opt.step(params);
      opt.zero_grads(params);

      TraceRow row;
      row.step = step;
      row.loss_total = rep.total_value;
      row.l_nce_I = rep.l_nce_I;
      row.l_nce_II = rep.l_nce_II;
      row.l_icnce = rep.l_icnce;
      row.l_ictm = rep.l_ictm;
      if (step % cfg.eval_every == 0 || step == cfg.steps) {
        double sp = dev_spearman_of(model, vocab, sts_dev, cfg.max_seq_len);
        row.dev_spearman = sp;
        if (sp > best) {
          best = sp;
          best_step = step;
          result.best.kind = "twin";
          result.best.twin = clone_twin(model);
          result.best.vocab = vocab;
          result.best.best_spearman = sp;
          result.best.step = step;
        }
      }
      result.trace.push_back(row);
    }
    ++epoch;
  }
  (void)best_step;
  // Report the statistic for the selected checkpoint: that is the model the
  // run delivers, and the one the dev Spearman describes.
  result.final_modulus_mismatch = probe_mismatch(result.best.twin);
  return result;
}

std::vector<AblationRow> ablate(const EncoderConfig& enc_cfg, int cael_interval,
                                const Vocab& vocab,
                                const std::vector<std::string>& corpus,
                                const std::vector<STSExample>& sts_dev,
                                const TrainConfig& base_cfg,
                                const std::vector<LossMask>& subsets) {
  std::vector<AblationRow> rows;
  uint64_t seed_I = Rng::split(base_cfg.seed, "tower-I-init").next_u64();
  uint64_t seed_II = Rng::split(base_cfg.seed, "tower-II-init").next_u64();
  for (const LossMask& mask : subsets) {
    mask.validate();
    TwinModel model = make_twin(enc_cfg, cael_interval, seed_I, seed_II);
    TrainConfig cfg = base_cfg;
    cfg.loss_mask = mask;
    TrainResult res = train(model, vocab, corpus, sts_dev, cfg);
    AblationRow row;
    std::ostringstream label;
    if (mask.nce) label << "nce";
    if (mask.icnce) label << (label.str().empty() ? "" : "+") << "icnce";
    if (mask.ictm) label << (label.str().empty() ? "" : "+") << "ictm";
    row.mask_label = label.str();
    row.dev_spearman = res.best.best_spearman;
    row.modulus_mismatch = res.final_modulus_mismatch;
    rows.push_back(std::move(row));
  }
  return rows;
}

DistillResult distill(const TwinModel& teacher, EncoderWeights student,
                      const Vocab& vocab,
                      const std::vector<std::string>& corpus,
                      const std::vector<STSExample>& sts_dev,
                      const TrainConfig& cfg) {
  cfg.validate();
  if (student.cfg.d != teacher.cfg.d)
    throw ConfigError("distill: student width " + std::to_string(student.cfg.d) +
                      " != teacher width " + std::to_string(teacher.cfg.d));
  if (sts_dev.empty()) throw ConfigError("distill: dev set is empty");

  auto params = student.named_params();
  Adam opt(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps,
           cfg.weight_decay);
  opt.zero_grads(params);

  DistillResult result;
  std::vector<std::string> held_out;
  for (const auto& ex : sts_dev) held_out.push_back(ex.sentence_a);
  auto teacher_held = embed_sentences(teacher, vocab, held_out, cfg.max_seq_len);
  auto mean_cos = [&](const EncoderWeights& s) {
    auto se = embed_sentences_single(s, vocab, held_out, cfg.max_seq_len);
    double sum = 0.0;
    for (size_t i = 0; i < se.size(); ++i)
      sum += cosine_value(se[i], teacher_held[i]);
    return sum / se.size();
  };
  result.pre_mean_cosine = mean_cos(student);

  std::vector<double> gold;
  for (const auto& ex : sts_dev) gold.push_back(ex.gold);
  auto dev_sp = [&](const EncoderWeights& s) {
    return spearman(predict_sts_single(s, vocab, sts_dev, cfg.max_seq_len), gold);
  };

  double best = -std::numeric_limits<double>::infinity();
  long step = 0;
  uint64_t epoch = 0;
  while (step < cfg.steps) {
    uint64_t bseed = Rng::split(cfg.seed, "distill-batches", epoch).next_u64();
    std::vector<Batch> batches =
        make_batches(corpus, vocab, cfg.batch_size, cfg.max_seq_len, bseed);
    if (batches.empty()) throw DataError("distill: corpus smaller than one batch");
    for (const Batch& batch : batches) {
      if (step >= cfg.steps) break;
      ++step;
      auto target = infer_embed(teacher, batch);
      std::vector<double> flat;
      for (const auto& row : target) flat.insert(flat.end(), row.begin(), row.end());
      Tensor target_t = Tensor::constant({batch.rows(), teacher.cfg.d}, flat);

      Graph g;
      EmbeddingOutputs out = forward(g, student, batch, 0, false);
      Tensor diff = g.sub(out.cls_pool, target_t);
      Tensor mse = g.mean_all(g.mul(diff, diff));
      double mse_v = mse.item();
      if (!std::isfinite(mse_v))
        throw NumericError("distillation diverged at step " + std::to_string(step));
      result.mse_trace.push_back(mse_v);
      g.backward(mse);
      opt.step(params);
      opt.zero_grads(params);

      if (step % cfg.eval_every == 0 || step == cfg.steps) {
        double sp = dev_sp(student);
        if (sp > best) {
          best = sp;
          result.best.kind = "single";
          result.best.single = clone_weights(student);
          result.best.vocab = vocab;
          result.best.best_spearman = sp;
          result.best.step = step;
        }
      }
    }
    ++epoch;
  }
  result.post_mean_cosine = mean_cos(result.best.single);
  return result;
}

MacReport macs_and_eta(const EncoderConfig& cfg, int n_towers, int seq_len,
                       double score) {
  if (score < 0.0 || score > 100.0)
    throw ConfigError("score must be in [0,100]");
  double n = seq_len, d = cfg.d, f = cfg.d_ffn;
  // per-layer multiply-add pairs: QKV+O projections, the two attention
  // products, and the two FFN matmuls
  double flops_per_layer = 4.0 * n * d * d + 2.0 * n * n * d + 2.0 * n * d * f;
  double macs = cfg.n_layers * flops_per_layer / 2.0;
  MacReport rep;
  rep.gmac = n_towers * macs * 1e-9;
  rep.eta = score / rep.gmac;
  return rep;
}

}  // namespace jtcse
