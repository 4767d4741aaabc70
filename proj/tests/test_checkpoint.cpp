#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "jtcse/checkpoint.hpp"

using namespace jtcse;

namespace {

namespace fs = std::filesystem;

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

CheckpointBundle twin_bundle() {
  EncoderConfig cfg;
  cfg.n_layers = 2;
  cfg.d = 16;
  cfg.n_heads = 2;
  cfg.d_ffn = 32;
  cfg.max_seq_len = 16;
  SynthCorpus sc = synth_corpus(3, 8, 30, 10);
  CheckpointBundle b;
  b.kind = "twin";
  b.vocab = build_vocab(sc.train_lines, 2048);
  cfg.vocab_size = b.vocab.size();
  b.twin = make_twin(cfg, 2, 5, 6);
  b.best_spearman = 0.625;
  b.step = 150;
  return b;
}

void check_weights_equal(const EncoderWeights& a, const EncoderWeights& b) {
  auto pa = a.named_params(), pb = b.named_params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i].first == pb[i].first);
    CHECK(pa[i].second.values() == pb[i].second.values());
  }
}

}  // namespace

TEST_CASE("twin checkpoint round-trips every field bit-exactly") {
  CheckpointBundle b = twin_bundle();
  fs::path tmp = fs::temp_directory_path() / "jtcse_ckpt_twin.bin";
  save_checkpoint(tmp.string(), b);
  CheckpointBundle r = load_checkpoint(tmp.string());

  CHECK(r.kind == "twin");
  CHECK(r.best_spearman == b.best_spearman);
  CHECK(r.step == b.step);
  CHECK(r.twin.cfg.n_layers == b.twin.cfg.n_layers);
  CHECK(r.twin.cfg.d == b.twin.cfg.d);
  CHECK(r.twin.cfg.n_heads == b.twin.cfg.n_heads);
  CHECK(r.twin.cfg.d_ffn == b.twin.cfg.d_ffn);
  CHECK(r.twin.cfg.vocab_size == b.twin.cfg.vocab_size);
  CHECK(r.twin.cfg.max_seq_len == b.twin.cfg.max_seq_len);
  CHECK(r.twin.cfg.dropout_p == b.twin.cfg.dropout_p);
  CHECK(r.twin.placement.interval == b.twin.placement.interval);
  CHECK(r.twin.placement.positions == b.twin.placement.positions);
  CHECK(r.vocab.tokens() == b.vocab.tokens());
  check_weights_equal(r.twin.encoder_I, b.twin.encoder_I);
  check_weights_equal(r.twin.encoder_II, b.twin.encoder_II);
  fs::remove(tmp);
}

TEST_CASE("save -> load -> save is byte-identical") {
  CheckpointBundle b = twin_bundle();
  fs::path t1 = fs::temp_directory_path() / "jtcse_ckpt_a.bin";
  fs::path t2 = fs::temp_directory_path() / "jtcse_ckpt_b.bin";
  save_checkpoint(t1.string(), b);
  CheckpointBundle r = load_checkpoint(t1.string());
  save_checkpoint(t2.string(), r);
  CHECK(slurp(t1) == slurp(t2));
  fs::remove(t1);
  fs::remove(t2);
}

TEST_CASE("single-tower checkpoint round-trips") {
  CheckpointBundle b = twin_bundle();
  b.kind = "single";
  b.single = init_weights(b.twin.cfg, 77);
  fs::path tmp = fs::temp_directory_path() / "jtcse_ckpt_single.bin";
  save_checkpoint(tmp.string(), b);
  CheckpointBundle r = load_checkpoint(tmp.string());
  CHECK(r.kind == "single");
  check_weights_equal(r.single, b.single);
  fs::remove(tmp);
}

TEST_CASE("checkpoint error handling") {
  CheckpointBundle b = twin_bundle();
  b.kind = "nonsense";
  fs::path tmp = fs::temp_directory_path() / "jtcse_ckpt_bad.bin";
  CHECK_THROWS_AS(save_checkpoint(tmp.string(), b), IoError);

  CHECK_THROWS_AS(load_checkpoint("/nonexistent/nowhere.bin"), IoError);

  {
    std::ofstream f(tmp, std::ios::binary);
    f << "this is not a checkpoint";
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.string()), IoError);

  // Truncation after the magic breaks the load cleanly.
  b.kind = "twin";
  save_checkpoint(tmp.string(), b);
  std::string full = slurp(tmp);
  {
    std::ofstream f(tmp, std::ios::binary);
    f << full.substr(0, full.size() / 2);
  }
  CHECK_THROWS_AS(load_checkpoint(tmp.string()), IoError);
  fs::remove(tmp);
}
