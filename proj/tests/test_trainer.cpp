#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "jtcse/infer.hpp"
#include "jtcse/metrics.hpp"
#include "jtcse/trainer.hpp"

using namespace jtcse;

namespace {

namespace fs = std::filesystem;

struct Rig {
  SynthCorpus corpus;
  Vocab vocab;
  EncoderConfig cfg;
};

Rig make_rig() {
  Rig r;
  r.corpus = synth_corpus(5, 8, 120, 60);
  r.vocab = build_vocab(r.corpus.train_lines, 2048);
  r.cfg.n_layers = 2;
  r.cfg.d = 16;
  r.cfg.n_heads = 2;
  r.cfg.d_ffn = 32;
  r.cfg.vocab_size = r.vocab.size();
  r.cfg.max_seq_len = 32;
  return r;
}

TrainConfig quick_cfg(int steps) {
  TrainConfig tc;
  tc.steps = steps;
  tc.batch_size = 8;
  tc.eval_every = 5;
  tc.seed = 2;
  tc.max_seq_len = 32;
  return tc;
}

bool weights_equal(const EncoderWeights& a, const EncoderWeights& b) {
  auto pa = a.named_params(), pb = b.named_params();
  for (size_t i = 0; i < pa.size(); ++i)
    if (pa[i].second.values() != pb[i].second.values()) return false;
  return true;
}

TwinModel copy_twin(const TwinModel& m) {
  TwinModel out;
  out.cfg = m.cfg;
  out.encoder_I = clone_weights(m.encoder_I);
  out.encoder_II = clone_weights(m.encoder_II);
  out.placement = m.placement;
  return out;
}

}  // namespace

TEST_CASE("TrainConfig validation") {
  TrainConfig tc = quick_cfg(10);
  tc.batch_size = 1;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = quick_cfg(10);
  tc.eval_every = 0;
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = quick_cfg(0);
  CHECK_THROWS_AS(tc.validate(), ConfigError);
  tc = quick_cfg(10);
  tc.loss_mask = LossMask{false, false, false};
  CHECK_THROWS_AS(tc.validate(), ConfigError);
}

TEST_CASE("infer_embed decomposition, symmetry, and batch invariance") {
  Rig r = make_rig();
  TwinModel m = make_twin(r.cfg, 2, 5, 6);
  std::vector<std::string> sents(r.corpus.train_lines.begin(),
                                 r.corpus.train_lines.begin() + 4);
  Batch batch = pad_batch({tokenize(r.vocab, sents[0], 32),
                           tokenize(r.vocab, sents[1], 32),
                           tokenize(r.vocab, sents[2], 32),
                           tokenize(r.vocab, sents[3], 32)});
  auto emb = infer_embed(m, batch);
  REQUIRE(emb.size() == 4);

  // Decomposition: sum of two independent single-tower CLS poolings.
  Graph g1, g2;
  EmbeddingOutputs fI = forward(g1, m.encoder_I, batch, 0, false);
  EmbeddingOutputs fII = forward(g2, m.encoder_II, batch, 0, false);
  for (int b = 0; b < 4; ++b)
    for (int j = 0; j < r.cfg.d; ++j)
      CHECK(std::abs(emb[b][j] -
                     (fI.cls_pool.values()[static_cast<size_t>(b) * r.cfg.d + j] +
                      fII.cls_pool.values()[static_cast<size_t>(b) * r.cfg.d + j])) <=
            1e-12);

  CHECK(cosine_value(emb[0], emb[0]) == doctest::Approx(1.0).epsilon(1e-12));

  // Identical towers double the single-tower pooling.
  TwinModel twin_same = copy_twin(m);
  twin_same.encoder_II = clone_weights(m.encoder_I);
  auto same = infer_embed(twin_same, batch);
  for (int j = 0; j < r.cfg.d; ++j)
    CHECK(same[0][j] ==
          doctest::Approx(2.0 * fI.cls_pool.values()[j]).epsilon(1e-12));

  // Batch-composition invariance: alone vs inside a batch.
  Batch solo = pad_batch({tokenize(r.vocab, sents[2], 32)});
  auto alone = infer_embed(m, solo);
  for (int j = 0; j < r.cfg.d; ++j)
    CHECK(std::abs(alone[0][j] - emb[2][j]) <= 1e-12);
}

TEST_CASE("train with zero learning rate leaves weights unchanged") {
  Rig r = make_rig();
  TwinModel m = make_twin(r.cfg, 2, 5, 6);
  TwinModel before = copy_twin(m);
  TrainConfig tc = quick_cfg(6);
  tc.learning_rate = 0.0;
  train(m, r.vocab, r.corpus.train_lines, r.corpus.sts, tc);
  CHECK(weights_equal(m.encoder_I, before.encoder_I));
  CHECK(weights_equal(m.encoder_II, before.encoder_II));
}

TEST_CASE("train is deterministic per seed") {
  Rig r = make_rig();
  TwinModel m1 = make_twin(r.cfg, 2, 5, 6);
  TwinModel m2 = copy_twin(m1);
  TrainConfig tc = quick_cfg(12);
  TrainResult r1 = train(m1, r.vocab, r.corpus.train_lines, r.corpus.sts, tc);
  TrainResult r2 = train(m2, r.vocab, r.corpus.train_lines, r.corpus.sts, tc);

  REQUIRE(r1.trace.size() == r2.trace.size());
  for (size_t i = 0; i < r1.trace.size(); ++i) {
    CHECK(r1.trace[i].loss_total == r2.trace[i].loss_total);
    CHECK(r1.trace[i].l_ictm == r2.trace[i].l_ictm);
    CHECK(r1.trace[i].dev_spearman.has_value() ==
          r2.trace[i].dev_spearman.has_value());
  }
  CHECK(weights_equal(m1.encoder_I, m2.encoder_I));
  CHECK(weights_equal(m1.encoder_II, m2.encoder_II));
  CHECK(weights_equal(r1.best.twin.encoder_I, r2.best.twin.encoder_I));
}

TEST_CASE("train trace shape, eval cadence, and checkpoint rule") {
  Rig r = make_rig();
  TwinModel m = make_twin(r.cfg, 2, 5, 6);
  TrainConfig tc = quick_cfg(17);  // not a multiple of eval_every
  TrainResult res = train(m, r.vocab, r.corpus.train_lines, r.corpus.sts, tc);

  REQUIRE(res.trace.size() == 17);
  double best_seen = -2.0;
  for (const auto& row : res.trace) {
    bool should_eval = (row.step % tc.eval_every == 0) || row.step == tc.steps;
    CHECK(row.dev_spearman.has_value() == should_eval);
    if (row.dev_spearman) best_seen = std::max(best_seen, *row.dev_spearman);
  }
  // The retained bundle's dev Spearman is the max over evaluation points.
  CHECK(res.best.best_spearman == best_seen);
  CHECK(res.best.kind == "twin");
  CHECK(res.best.step >= 1);
  CHECK(res.initial_modulus_mismatch >= 0.0);
  CHECK(res.final_modulus_mismatch >= 0.0);

  CHECK_THROWS_AS(train(m, r.vocab, r.corpus.train_lines, {}, tc), ConfigError);
  CHECK_THROWS_AS(train(m, r.vocab, {}, r.corpus.sts, tc), DataError);
}

TEST_CASE("write_trace_csv format") {
  std::vector<TraceRow> trace(2);
  trace[0].step = 1;
  trace[0].loss_total = 3.5;
  trace[1].step = 2;
  trace[1].loss_total = 3.25;
  trace[1].dev_spearman = 0.5;
  fs::path tmp = fs::temp_directory_path() / "jtcse_trace.csv";
  write_trace_csv(tmp.string(), trace);
  std::ifstream f(tmp);
  std::string header, row1, row2;
  std::getline(f, header);
  std::getline(f, row1);
  std::getline(f, row2);
  CHECK(header == "step,loss_total,l_nce_I,l_nce_II,l_icnce,l_ictm,dev_spearman");
  CHECK(row1.back() == ',');  // no dev value at step 1
  CHECK(row2.substr(row2.rfind(',') + 1) == "0.5");
  fs::remove(tmp);
}

TEST_CASE("modulus_mismatch is deterministic and nonnegative") {
  Rig r = make_rig();
  TwinModel m = make_twin(r.cfg, 2, 5, 6);
  Batch batch = pad_batch({tokenize(r.vocab, r.corpus.train_lines[0], 32),
                           tokenize(r.vocab, r.corpus.train_lines[1], 32)});
  double a = modulus_mismatch(m, batch, 3);
  CHECK(a >= 0.0);
  CHECK(modulus_mismatch(m, batch, 3) == a);
}

TEST_CASE("ablate trains every subset from one initialization") {
  Rig r = make_rig();
  TrainConfig tc = quick_cfg(4);
  std::vector<LossMask> subsets = {LossMask{true, false, false},
                                   LossMask{true, true, true}};
  auto rows = ablate(r.cfg, 2, r.vocab, r.corpus.train_lines, r.corpus.sts, tc,
                     subsets);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].mask_label == "nce");
  CHECK(rows[1].mask_label == "nce+icnce+ictm");
  for (const auto& row : rows) {
    CHECK(row.dev_spearman >= -1.0);
    CHECK(row.dev_spearman <= 1.0);
    CHECK(row.modulus_mismatch >= 0.0);
  }
  CHECK_THROWS_AS(ablate(r.cfg, 2, r.vocab, r.corpus.train_lines, r.corpus.sts,
                         tc, {LossMask{false, false, false}}),
                  ConfigError);
}

TEST_CASE("distill fixed point: exact student means zero MSE and no updates") {
  Rig r = make_rig();
  EncoderWeights w = init_weights(r.cfg, 5);
  TwinModel teacher;
  teacher.cfg = r.cfg;
  teacher.encoder_I = clone_weights(w);
  teacher.encoder_II = clone_weights(w);
  teacher.placement = cael_positions(r.cfg.n_layers, 2);

  // Doubling the last layer-norm's gain and bias doubles cls_pool exactly,
  // matching the identical-tower teacher's summed output.
  EncoderWeights student = clone_weights(w);
  for (double& v : student.layers.back().ln2_g.values()) v *= 2.0;
  for (double& v : student.layers.back().ln2_b.values()) v *= 2.0;
  EncoderWeights frozen = clone_weights(student);

  TrainConfig tc = quick_cfg(6);
  DistillResult res = distill(teacher, student, r.vocab, r.corpus.train_lines,
                              r.corpus.sts, tc);
  for (double mse : res.mse_trace) CHECK(mse <= 1e-20);
  CHECK(weights_equal(student, frozen));
  CHECK(weights_equal(res.best.single, frozen));
  CHECK(res.pre_mean_cosine == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(res.post_mean_cosine == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("distill reduces MSE and raises teacher-student cosine") {
  Rig r = make_rig();
  TwinModel teacher = make_twin(r.cfg, 2, 3, 4);
  TwinModel teacher_before = copy_twin(teacher);
  EncoderWeights student = init_weights(r.cfg, 9);
  TrainConfig tc = quick_cfg(60);
  tc.eval_every = 10;
  DistillResult res = distill(teacher, student, r.vocab, r.corpus.train_lines,
                              r.corpus.sts, tc);

  auto window_mean = [&](size_t a, size_t b) {
    double s = 0.0;
    for (size_t i = a; i < b; ++i) s += res.mse_trace[i];
    return s / (b - a);
  };
  REQUIRE(res.mse_trace.size() == 60);
  CHECK(window_mean(40, 50) < window_mean(0, 10));  // smoothed decrease
  CHECK(res.post_mean_cosine > res.pre_mean_cosine);
  CHECK(res.best.kind == "single");

  // Teacher is read-only.
  CHECK(weights_equal(teacher.encoder_I, teacher_before.encoder_I));
  CHECK(weights_equal(teacher.encoder_II, teacher_before.encoder_II));

  // Width mismatch is a configuration error.
  EncoderConfig wide = r.cfg;
  wide.d = 32;
  wide.d_ffn = 64;
  CHECK_THROWS_AS(distill(teacher, init_weights(wide, 1), r.vocab,
                          r.corpus.train_lines, r.corpus.sts, tc),
                  ConfigError);
}

TEST_CASE("macs_and_eta linearity and paper reference geometry") {
  EncoderConfig base;
  base.n_layers = 12;
  base.d = 768;
  base.n_heads = 12;
  base.d_ffn = 3072;
  base.vocab_size = 30522;
  base.max_seq_len = 512;

  MacReport single = macs_and_eta(base, 1, 128, 80.0);
  MacReport twin = macs_and_eta(base, 2, 128, 80.0);
  MacReport six = macs_and_eta(base, 6, 128, 80.0);

  CHECK(twin.gmac == doctest::Approx(2.0 * single.gmac).epsilon(1e-12));
  CHECK(twin.eta == doctest::Approx(0.5 * single.eta).epsilon(1e-12));
  CHECK(six.gmac == doctest::Approx(6.0 * single.gmac).epsilon(1e-12));

  // Published twin-tower cost ~10.90 GMAC at BERT-base, n=128.
  CHECK(std::abs(twin.gmac - 10.90) / 10.90 <= 0.15);

  // Direct formula check on a small geometry.
  EncoderConfig t;
  t.n_layers = 2;
  t.d = 4;
  t.d_ffn = 8;
  double per_layer = 4.0 * 3 * 4 * 4 + 2.0 * 3 * 3 * 4 + 2.0 * 3 * 4 * 8;
  MacReport small = macs_and_eta(t, 1, 3, 50.0);
  CHECK(small.gmac == doctest::Approx(2 * per_layer / 2.0 * 1e-9).epsilon(1e-12));
  CHECK(small.eta == doctest::Approx(50.0 / small.gmac).epsilon(1e-12));

  CHECK_THROWS_AS(macs_and_eta(base, 1, 128, -1.0), ConfigError);
  CHECK_THROWS_AS(macs_and_eta(base, 1, 128, 101.0), ConfigError);
}
