#include "jtcse/infer.hpp"

#include <cmath>

namespace jtcse {

std::vector<std::vector<double>> infer_embed(const TwinModel& model,
                                             const Batch& batch) {
  Graph g;
  TwinOutputs out = twin_forward(g, model, batch, 0, false, false);
  int B = batch.rows(), d = model.cfg.d;
  std::vector<std::vector<double>> emb(B, std::vector<double>(d));
  for (int b = 0; b < B; ++b)
    for (int j = 0; j < d; ++j)
      emb[b][j] = out.I.cls_pool.values()[static_cast<size_t>(b) * d + j] +
                  out.II.cls_pool.values()[static_cast<size_t>(b) * d + j];
  return emb;
}

namespace {

template <typename EmbedBatch>
std::vector<std::vector<double>> embed_chunks(
    const Vocab& vocab, const std::vector<std::string>& sentences, int max_len,
    int batch_size, EmbedBatch&& embed_batch) {
  std::vector<std::vector<double>> out;
  for (size_t at = 0; at < sentences.size(); at += batch_size) {
    std::vector<std::vector<int>> rows;
    for (size_t j = at; j < std::min(at + batch_size, sentences.size()); ++j)
      rows.push_back(tokenize(vocab, sentences[j], max_len));
    for (auto& e : embed_batch(pad_batch(rows))) out.push_back(std::move(e));
  }
  return out;
}

}  // namespace

std::vector<std::vector<double>> embed_sentences(
    const TwinModel& model, const Vocab& vocab,
    const std::vector<std::string>& sentences, int max_len, int batch_size) {
  return embed_chunks(vocab, sentences, max_len, batch_size,
                      [&](const Batch& b) { return infer_embed(model, b); });
}

std::vector<std::vector<double>> embed_sentences_single(
    const EncoderWeights& enc, const Vocab& vocab,
    const std::vector<std::string>& sentences, int max_len, int batch_size) {
  return embed_chunks(vocab, sentences, max_len, batch_size,
                      [&](const Batch& batch) {
                        Graph g;
                        EmbeddingOutputs out = forward(g, enc, batch, 0, false);
                        int B = batch.rows(), d = enc.cfg.d;
                        std::vector<std::vector<double>> emb(B);
                        for (int b = 0; b < B; ++b)
                          emb[b].assign(
                              out.cls_pool.values().begin() + static_cast<size_t>(b) * d,
                              out.cls_pool.values().begin() + static_cast<size_t>(b + 1) * d);
                        return emb;
                      });
}

double cosine_value(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt((aa + kNormFloor) * (bb + kNormFloor));
}

namespace {

template <typename Embed>
std::vector<double> predict_pairs(const std::vector<STSExample>& sts,
                                  Embed&& embed) {
  std::vector<std::string> a, b;
  for (const auto& ex : sts) {
    a.push_back(ex.sentence_a);
    b.push_back(ex.sentence_b);
  }
  auto ea = embed(a);
  auto eb = embed(b);
  std::vector<double> cos(sts.size());
  for (size_t i = 0; i < sts.size(); ++i) cos[i] = cosine_value(ea[i], eb[i]);
  return cos;
}

}  // namespace

std::vector<double> predict_sts(const TwinModel& model, const Vocab& vocab,
                                const std::vector<STSExample>& sts, int max_len) {
  return predict_pairs(sts, [&](const std::vector<std::string>& s) {
    return embed_sentences(model, vocab, s, max_len);
  });
}

std::vector<double> predict_sts_single(const EncoderWeights& enc,
                                       const Vocab& vocab,
                                       const std::vector<STSExample>& sts,
                                       int max_len) {
  return predict_pairs(sts, [&](const std::vector<std::string>& s) {
    return embed_sentences_single(enc, vocab, s, max_len);
  });
}

double mean_ecls(const TwinModel& model, const Vocab& vocab,
                 const std::vector<std::string>& sentences, int max_len,
                 int batch_size) {
  double sum = 0.0;
  long count = 0;
  for (size_t at = 0; at < sentences.size(); at += batch_size) {
    std::vector<std::vector<int>> rows;
    for (size_t j = at; j < std::min(at + batch_size, sentences.size()); ++j)
      rows.push_back(tokenize(vocab, sentences[j], max_len));
    Batch batch = pad_batch(rows);
    Graph g;
    TwinOutputs out = twin_forward(g, model, batch, 0, false, false, true);
    for (const EmbeddingOutputs* eo : {&out.I, &out.II})
      for (const Tensor& ctx : eo->context_per_layer) {
        auto e = cls_energy_weight(ctx.values(), batch.rows(), batch.cols(),
                                   model.cfg.d, batch);
        for (double x : e) sum += x, ++count;
      }
  }
  if (count == 0) throw NumericError("mean_ecls: no sentences");
  return sum / count;
}

}  // namespace jtcse
