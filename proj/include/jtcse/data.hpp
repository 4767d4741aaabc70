#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "jtcse/error.hpp"

namespace jtcse {

// Reserved ids are fixed and never reassigned.
constexpr int kPadId = 0;
constexpr int kClsId = 1;
constexpr int kSepId = 2;
constexpr int kUnkId = 3;

class Vocab {
public:
  Vocab();

  int id(const std::string& token) const;  // kUnkId when absent
  const std::string& token(int id) const;
  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  // Internal: append a non-reserved token. Used by builder and checkpoint load.
  void append(const std::string& token);

private:
  std::map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

struct Batch {
  std::vector<std::vector<int>> token_ids;      // [B x n]
  std::vector<std::vector<int>> attention_mask; // 1 on non-pad positions
  int rows() const { return static_cast<int>(token_ids.size()); }
  int cols() const { return token_ids.empty() ? 0 : static_cast<int>(token_ids[0].size()); }
};

struct STSExample {
  std::string sentence_a;
  std::string sentence_b;
  double gold = 0.0;  // in [0, 5]
};

std::vector<std::string> split_lower_ws(const std::string& text);

Vocab build_vocab(const std::vector<std::string>& corpus, int cap);

std::vector<int> tokenize(const Vocab& v, const std::string& text, int max_len);

std::vector<Batch> make_batches(const std::vector<std::string>& sentences,
                                const Vocab& v, int batch_size, int max_len,
                                uint64_t seed);

Batch pad_batch(const std::vector<std::vector<int>>& rows);

struct SynthCorpus {
  std::vector<std::string> train_lines;
  std::vector<STSExample> sts;
};

// Templated sentences over per-topic slot lexicons; STS pairs graded by
// slot overlap (5 identical .. 0 unrelated). Deterministic per seed.
SynthCorpus synth_corpus(uint64_t seed, int n_templates, int n_sentences,
                         int n_pairs = 500);

std::vector<std::string> read_lines(const std::string& path);
void write_lines(const std::string& path, const std::vector<std::string>& lines);
std::vector<STSExample> read_sts_tsv(const std::string& path);
void write_sts_tsv(const std::string& path, const std::vector<STSExample>& sts);

}  // namespace jtcse
