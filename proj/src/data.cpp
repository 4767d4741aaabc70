#include "jtcse/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "jtcse/rng.hpp"

namespace jtcse {

Vocab::Vocab() {
  id_to_token_ = {"[PAD]", "[CLS]", "[SEP]", "[UNK]"};
  for (int i = 0; i < 4; ++i) token_to_id_[id_to_token_[i]] = i;
}

int Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnkId : it->second;
}

const std::string& Vocab::token(int id) const {
  if (id < 0 || id >= size())
    throw DataError("vocab id " + std::to_string(id) + " out of range");
  return id_to_token_[id];
}

void Vocab::append(const std::string& token) {
  if (token_to_id_.count(token))
    throw DataError("vocab: duplicate token '" + token + "'");
  token_to_id_[token] = size();
  id_to_token_.push_back(token);
}

std::vector<std::string> split_lower_ws(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(cur), cur.clear();
    } else {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Vocab build_vocab(const std::vector<std::string>& corpus, int cap) {
  if (cap < 5) throw ConfigError("vocab cap must be >= 5, got " + std::to_string(cap));
  std::map<std::string, long long> freq;
  for (const std::string& line : corpus)
    for (const std::string& tok : split_lower_ws(line)) ++freq[tok];
  if (freq.empty()) throw DataError("build_vocab: empty corpus");

  std::vector<std::pair<std::string, long long>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  Vocab v;
  for (const auto& [tok, n] : ranked) {
    (void)n;
    if (v.size() >= cap) break;
    v.append(tok);
  }
  return v;
}

std::vector<int> tokenize(const Vocab& v, const std::string& text, int max_len) {
  if (max_len < 3) throw ConfigError("max_len must be >= 3");
  std::vector<int> ids = {kClsId};
  for (const std::string& tok : split_lower_ws(text)) {
    if (static_cast<int>(ids.size()) >= max_len - 1) break;
    ids.push_back(v.id(tok));
  }
  ids.push_back(kSepId);
  return ids;
}

Batch pad_batch(const std::vector<std::vector<int>>& rows) {
  size_t n = 0;
  for (const auto& r : rows) n = std::max(n, r.size());
  Batch b;
  for (const auto& r : rows) {
    std::vector<int> ids(r);
    std::vector<int> mask(r.size(), 1);
    ids.resize(n, kPadId);
    mask.resize(n, 0);
    b.token_ids.push_back(std::move(ids));
    b.attention_mask.push_back(std::move(mask));
  }
  return b;
}

std::vector<Batch> make_batches(const std::vector<std::string>& sentences,
                                const Vocab& v, int batch_size, int max_len,
                                uint64_t seed) {
  if (batch_size < 2)
    throw ConfigError("batch size must be >= 2 for in-batch negatives");
  std::vector<int> order(sentences.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  Rng rng = Rng::split(seed, "shuffle");
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);

  std::vector<Batch> batches;
  for (size_t at = 0; at + batch_size <= order.size(); at += batch_size) {
    std::vector<std::vector<int>> rows;
    for (int j = 0; j < batch_size; ++j)
      rows.push_back(tokenize(v, sentences[order[at + j]], max_len));
    batches.push_back(pad_batch(rows));
  }
  return batches;
}

namespace {

const char* kSyllables[] = {"ba", "ro", "mi", "ta", "lu", "ke", "sa", "ni",
                            "vo", "de", "pi", "ga", "zu", "fe", "ma", "li"};

std::string make_word(Rng& rng, std::set<std::string>& used) {
  for (;;) {
    int parts = 2 + static_cast<int>(rng.next_below(2));
    std::string w;
    for (int i = 0; i < parts; ++i) w += kSyllables[rng.next_below(16)];
    if (used.insert(w).second) return w;
  }
}

struct TopicLexicon {
  std::vector<std::string> nouns, verbs, adjs;
};

struct Slots {
  int adj, noun, verb, noun2;
};

std::string render(int pattern, const TopicLexicon& lex, const Slots& s) {
  const std::string& a = lex.adjs[s.adj];
  const std::string& n = lex.nouns[s.noun];
  const std::string& v = lex.verbs[s.verb];
  const std::string& m = lex.nouns[s.noun2];
  switch (pattern % 4) {
    case 0: return "the " + a + " " + n + " " + v + " the " + m;
    case 1: return "a " + n + " " + v + " a " + a + " " + m;
    case 2: return "that " + a + " " + n + " often " + v + " the " + m;
    default: return "some " + n + " " + v + " that " + a + " " + m;
  }
}

Slots draw_slots(Rng& rng, const TopicLexicon& lex) {
  Slots s;
  s.adj = static_cast<int>(rng.next_below(lex.adjs.size()));
  s.noun = static_cast<int>(rng.next_below(lex.nouns.size()));
  s.verb = static_cast<int>(rng.next_below(lex.verbs.size()));
  s.noun2 = static_cast<int>(rng.next_below(lex.nouns.size()));
  return s;
}

void change_slot(Rng& rng, const TopicLexicon& lex, Slots& s, int which) {
  auto redraw = [&rng](int cur, size_t n) {
    int nv = cur;
    while (nv == cur) nv = static_cast<int>(rng.next_below(n));
    return nv;
  };
  switch (which % 4) {
    case 0: s.adj = redraw(s.adj, lex.adjs.size()); break;
    case 1: s.noun = redraw(s.noun, lex.nouns.size()); break;
    case 2: s.verb = redraw(s.verb, lex.verbs.size()); break;
    default: s.noun2 = redraw(s.noun2, lex.nouns.size()); break;
  }
}

}  // namespace

SynthCorpus synth_corpus(uint64_t seed, int n_templates, int n_sentences,
                         int n_pairs) {
  if (n_templates < 4)
    throw ConfigError("synth_corpus needs n_templates >= 4");
  int n_topics = (n_templates + 1) / 2;

  Rng lex_rng = Rng::split(seed, "lexicon");
  std::set<std::string> used;
  std::vector<TopicLexicon> topics(n_topics);
  for (auto& t : topics) {
    for (int i = 0; i < 6; ++i) t.nouns.push_back(make_word(lex_rng, used));
    for (int i = 0; i < 5; ++i) t.verbs.push_back(make_word(lex_rng, used));
    for (int i = 0; i < 5; ++i) t.adjs.push_back(make_word(lex_rng, used));
  }
  // Ambiguous nouns: each appears in two neighboring topics, so surface
  // overlap alone cannot tell related pairs from unrelated ones.
  if (n_topics >= 2) {
    std::vector<std::string> pool(n_topics);
    for (auto& w : pool) w = make_word(lex_rng, used);
    for (int t = 0; t < n_topics; ++t) {
      topics[t].nouns[5] = pool[t];
      topics[t].nouns[4] = pool[(t + 1) % n_topics];
    }
  }
  auto topic_of = [](int tmpl) { return tmpl / 2; };

  SynthCorpus out;
  Rng sent_rng = Rng::split(seed, "sentences");
  for (int i = 0; i < n_sentences; ++i) {
    int tmpl = static_cast<int>(sent_rng.next_below(n_templates));
    const TopicLexicon& lex = topics[topic_of(tmpl)];
    out.train_lines.push_back(render(tmpl, lex, draw_slots(sent_rng, lex)));
  }

  Rng pair_rng = Rng::split(seed, "pairs");
  // Grades 2 and 0 carry most of the mass: they are the pairs that separate
  // topical similarity from surface overlap, which is what the dev Spearman
  // is supposed to measure.
  for (int i = 0; i < n_pairs; ++i) {
    int phase = i % 16;
    double gold = phase == 0 ? 5.0
                : phase == 5 ? 4.0
                : phase == 11 ? 3.0
                : (phase % 2 == 1 ? 2.0 : 0.0);
    int tmpl = static_cast<int>(pair_rng.next_below(n_templates));
    const TopicLexicon& lex = topics[topic_of(tmpl)];
    Slots sa = draw_slots(pair_rng, lex);
    std::string a = render(tmpl, lex, sa);
    std::string b;
    if (gold == 5.0) {
      b = a;
    } else if (gold == 4.0) {
      Slots sb = sa;
      change_slot(pair_rng, lex, sb, static_cast<int>(pair_rng.next_below(4)));
      b = render(tmpl, lex, sb);
    } else if (gold == 3.0) {
      Slots sb = sa;
      int first = static_cast<int>(pair_rng.next_below(4));
      int second = (first + 1 + static_cast<int>(pair_rng.next_below(3))) % 4;
      change_slot(pair_rng, lex, sb, first);
      change_slot(pair_rng, lex, sb, second);
      b = render(tmpl, lex, sb);
    } else if (gold == 2.0) {
      int sibling = (tmpl % 2 == 0) ? tmpl + 1 : tmpl - 1;
      if (sibling >= n_templates) sibling = tmpl - 1;
      b = render(sibling, lex, draw_slots(pair_rng, lex));
    } else {
      // Unrelated topic; most of these pairs are built around an ambiguous
      // noun (and matching function words when available) so that only
      // topic knowledge separates them from the graded pairs.
      int ta = topic_of(tmpl);
      int other_topic = static_cast<int>((ta + 1) % n_topics);
      const TopicLexicon& olex = topics[other_topic];
      Slots sb = draw_slots(pair_rng, olex);
      if (n_topics >= 2 && pair_rng.next_below(4) < 3) {
        sa.noun2 = 4;  // pool word shared by topics ta and ta+1
        sb.noun2 = 5;
        a = render(tmpl, lex, sa);
      }
      int otmpl = 2 * other_topic;
      if (otmpl + 1 < n_templates && (otmpl + 1) % 4 == tmpl % 4) otmpl += 1;
      b = render(otmpl, olex, sb);
    }
    out.sts.push_back({a, b, gold});
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_lines(const std::string& path, const std::vector<std::string>& lines) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& l : lines) out << l << "\n";
}

std::vector<STSExample> read_sts_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<STSExample> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::istringstream row(line);
    STSExample ex;
    std::string gold_str;
    if (!std::getline(row, ex.sentence_a, '\t') ||
        !std::getline(row, ex.sentence_b, '\t') ||
        !std::getline(row, gold_str, '\t'))
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": expected sentence_a<TAB>sentence_b<TAB>gold");
    try {
      ex.gold = std::stod(gold_str);
    } catch (const std::exception&) {
      throw DataError(path + ":" + std::to_string(lineno) + ": bad gold '" +
                      gold_str + "'");
    }
    if (ex.gold < 0.0 || ex.gold > 5.0)
      throw DataError(path + ":" + std::to_string(lineno) +
                      ": gold out of [0,5]");
    out.push_back(std::move(ex));
  }
  return out;
}

void write_sts_tsv(const std::string& path, const std::vector<STSExample>& sts) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& ex : sts)
    out << ex.sentence_a << "\t" << ex.sentence_b << "\t" << ex.gold << "\n";
}

}  // namespace jtcse
