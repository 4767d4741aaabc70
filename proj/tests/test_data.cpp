#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <map>
#include <set>

#include "jtcse/data.hpp"

using namespace jtcse;

TEST_CASE("build_vocab frequency and tie rules") {
  Vocab v = build_vocab({"a b", "a"}, 10);
  CHECK(v.size() == 6);
  CHECK(v.id("a") == 4);
  CHECK(v.id("b") == 5);

  Vocab tie = build_vocab({"x y", "y x"}, 10);
  CHECK(tie.id("x") == 4);
  CHECK(tie.id("y") == 5);
}

TEST_CASE("build_vocab reserved ids and cap") {
  Vocab v = build_vocab({"q w e r t y u"}, 6);
  CHECK(v.size() == 6);
  CHECK(v.token(kPadId) == "[PAD]");
  CHECK(v.token(kClsId) == "[CLS]");
  CHECK(v.token(kSepId) == "[SEP]");
  CHECK(v.token(kUnkId) == "[UNK]");
  CHECK_THROWS_AS(build_vocab({}, 10), DataError);
  CHECK_THROWS_AS(build_vocab({"a"}, 4), ConfigError);
}

TEST_CASE("build_vocab is deterministic") {
  SynthCorpus sc = synth_corpus(3, 8, 1000);
  Vocab a = build_vocab(sc.train_lines, 2048);
  Vocab b = build_vocab(sc.train_lines, 2048);
  CHECK(a.tokens() == b.tokens());
}

TEST_CASE("tokenize framing, UNK, truncation") {
  Vocab v = build_vocab({"a b", "a"}, 10);
  CHECK(tokenize(v, "", 16) == std::vector<int>{kClsId, kSepId});
  CHECK(tokenize(v, "a zzz", 16) == std::vector<int>{kClsId, 4, kUnkId, kSepId});

  std::string longtext;
  for (int i = 0; i < 100; ++i) longtext += "a ";
  CHECK(tokenize(v, longtext, 16).size() == 16);
  CHECK(tokenize(v, longtext, 16).back() == kSepId);

  CHECK_THROWS_AS(tokenize(v, "a", 2), ConfigError);
}

TEST_CASE("tokenize round-trips in-vocab tokens") {
  Vocab v = build_vocab({"alpha beta gamma"}, 10);
  auto ids = tokenize(v, "Beta ALPHA gamma", 16);
  std::vector<std::string> back;
  for (size_t i = 1; i + 1 < ids.size(); ++i) back.push_back(v.token(ids[i]));
  CHECK(back == std::vector<std::string>{"beta", "alpha", "gamma"});
}

TEST_CASE("make_batches shapes, determinism, mask") {
  std::vector<std::string> sents;
  for (int i = 0; i < 10; ++i) sents.push_back("w" + std::to_string(i) + " common");
  Vocab v = build_vocab(sents, 64);

  auto batches = make_batches(sents, v, 4, 16, 5);
  CHECK(batches.size() == 2);  // final short batch dropped

  auto again = make_batches(sents, v, 4, 16, 5);
  for (size_t b = 0; b < batches.size(); ++b)
    CHECK(batches[b].token_ids == again[b].token_ids);

  for (const Batch& batch : batches)
    for (int r = 0; r < batch.rows(); ++r) {
      CHECK(batch.token_ids[r][0] == kClsId);
      int len = 0;
      for (int c = 0; c < batch.cols(); ++c) {
        CHECK(batch.attention_mask[r][c] ==
              (batch.token_ids[r][c] != kPadId ? 1 : 0));
        if (batch.attention_mask[r][c]) ++len;
      }
      CHECK(batch.token_ids[r][len - 1] == kSepId);
      int masksum = 0;
      for (int c = 0; c < batch.cols(); ++c) masksum += batch.attention_mask[r][c];
      CHECK(masksum == len);
    }

  CHECK_THROWS_AS(make_batches(sents, v, 1, 16, 5), ConfigError);
}

TEST_CASE("synth_corpus grading and determinism") {
  SynthCorpus sc = synth_corpus(7, 8, 500, 500);
  CHECK(sc.train_lines.size() == 500);
  CHECK(sc.sts.size() == 500);

  std::map<double, int> per_level;
  for (const auto& ex : sc.sts) {
    CHECK(ex.gold >= 0.0);
    CHECK(ex.gold <= 5.0);
    per_level[ex.gold]++;
    if (ex.gold == 5.0) CHECK(ex.sentence_a == ex.sentence_b);
    if (ex.gold == 0.0) CHECK(ex.sentence_a != ex.sentence_b);
  }
  for (double lvl : {5.0, 4.0, 3.0, 2.0, 0.0}) CHECK(per_level[lvl] >= 30);

  SynthCorpus again = synth_corpus(7, 8, 500, 500);
  CHECK(again.train_lines == sc.train_lines);
  for (size_t i = 0; i < sc.sts.size(); ++i) {
    CHECK(again.sts[i].sentence_a == sc.sts[i].sentence_a);
    CHECK(again.sts[i].sentence_b == sc.sts[i].sentence_b);
    CHECK(again.sts[i].gold == sc.sts[i].gold);
  }

  SynthCorpus other = synth_corpus(8, 8, 500, 500);
  CHECK(other.train_lines != sc.train_lines);

  CHECK_THROWS_AS(synth_corpus(7, 3, 100), ConfigError);
}

TEST_CASE("synth_corpus grade structure follows slot overlap within topic") {
  SynthCorpus sc = synth_corpus(11, 8, 100, 500);
  auto words = [](const std::string& s) {
    std::multiset<std::string> w;
    for (const auto& t : split_lower_ws(s)) w.insert(t);
    return w;
  };
  for (const auto& ex : sc.sts) {
    auto wa = words(ex.sentence_a), wb = words(ex.sentence_b);
    size_t shared = 0;
    for (const auto& w : wa) shared += wb.count(w) > 0 ? 1 : 0;
    if (ex.gold == 5.0) CHECK(wa == wb);
    // one slot changed: all but one token shared
    if (ex.gold == 4.0) CHECK(shared + 1 >= wa.size() - 1);
  }
}

TEST_CASE("sts tsv round trip and validation") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "jtcse_test_sts.tsv";
  std::vector<STSExample> sts = {{"a b", "c d", 3.5}, {"x", "x", 5.0}};
  write_sts_tsv(tmp.string(), sts);
  auto back = read_sts_tsv(tmp.string());
  REQUIRE(back.size() == 2);
  CHECK(back[0].sentence_a == "a b");
  CHECK(back[0].gold == 3.5);
  CHECK(back[1].gold == 5.0);

  {
    std::FILE* f = std::fopen(tmp.string().c_str(), "w");
    std::fputs("only_two_fields\t3\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_sts_tsv(tmp.string()), DataError);

  {
    std::FILE* f = std::fopen(tmp.string().c_str(), "w");
    std::fputs("a\tb\t7.5\n", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(read_sts_tsv(tmp.string()), DataError);
  fs::remove(tmp);

  CHECK_THROWS_AS(read_lines("/nonexistent/path/nowhere.txt"), IoError);
}

TEST_CASE("write_lines / read_lines round trip") {
  namespace fs = std::filesystem;
  fs::path tmp = fs::temp_directory_path() / "jtcse_test_lines.txt";
  std::vector<std::string> lines = {"first line", "second", "third one here"};
  write_lines(tmp.string(), lines);
  CHECK(read_lines(tmp.string()) == lines);
  fs::remove(tmp);
}
