#include "jtcse/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

namespace jtcse {

namespace {

constexpr char kMagic[] = "JTCSECP1";

using json = nlohmann::ordered_json;

json config_to_json(const EncoderConfig& c) {
  return json{{"n_layers", c.n_layers},   {"d", c.d},
              {"n_heads", c.n_heads},     {"d_ffn", c.d_ffn},
              {"vocab_size", c.vocab_size}, {"max_seq_len", c.max_seq_len},
              {"dropout_p", c.dropout_p}};
}

EncoderConfig config_from_json(const json& j) {
  EncoderConfig c;
  c.n_layers = j.at("n_layers");
  c.d = j.at("d");
  c.n_heads = j.at("n_heads");
  c.d_ffn = j.at("d_ffn");
  c.vocab_size = j.at("vocab_size");
  c.max_seq_len = j.at("max_seq_len");
  c.dropout_p = j.at("dropout_p");
  return c;
}

void write_u64(std::ostream& out, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

uint64_t read_u64(std::istream& in) {
  unsigned char b[8];
  in.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
  return v;
}

void write_doubles_le(std::ostream& out, const std::vector<double>& v) {
  for (double x : v) {
    uint64_t bits;
    std::memcpy(&bits, &x, 8);
    write_u64(out, bits);
  }
}

void read_doubles_le(std::istream& in, std::vector<double>& v) {
  for (double& x : v) {
    uint64_t bits = read_u64(in);
    std::memcpy(&x, &bits, 8);
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const CheckpointBundle& bundle) {
  std::vector<std::pair<std::string, Tensor>> params;
  json header;
  header["format"] = 1;
  header["kind"] = bundle.kind;
  if (bundle.kind == "twin") {
    header["config"] = config_to_json(bundle.twin.cfg);
    header["cael_interval"] = bundle.twin.placement.interval;
    params = bundle.twin.named_params();
  } else if (bundle.kind == "single") {
    header["config"] = config_to_json(bundle.single.cfg);
    params = bundle.single.named_params();
  } else {
    throw IoError("save_checkpoint: unknown kind '" + bundle.kind + "'");
  }
  header["vocab"] = bundle.vocab.tokens();
  header["best_spearman"] = bundle.best_spearman;
  header["step"] = bundle.step;
  json manifest = json::array();
  for (auto& [name, t] : params)
    manifest.push_back(json{{"name", name}, {"shape", t.shape()}});
  header["arrays"] = manifest;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  std::string hs = header.dump();
  out.write(kMagic, 8);
  write_u64(out, hs.size());
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (auto& [name, t] : params) {
    (void)name;
    write_doubles_le(out, t.values());
  }
  if (!out) throw IoError("write failed for checkpoint " + path);
}

CheckpointBundle load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw IoError(path + " is not a checkpoint file");
  uint64_t hlen = read_u64(in);
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  json header = json::parse(hs);

  CheckpointBundle b;
  b.kind = header.at("kind");
  EncoderConfig cfg = config_from_json(header.at("config"));
  if (b.kind == "twin") {
    b.twin.cfg = cfg;
    b.twin.encoder_I = zero_weights(cfg);
    b.twin.encoder_II = zero_weights(cfg);
    b.twin.placement = cael_positions(cfg.n_layers, header.at("cael_interval"));
  } else {
    b.single = zero_weights(cfg);
  }
  std::vector<std::string> tokens = header.at("vocab");
  if (tokens.size() < 4 || tokens[0] != "[PAD]" || tokens[1] != "[CLS]" ||
      tokens[2] != "[SEP]" || tokens[3] != "[UNK]")
    throw IoError(path + ": vocab reserved ids corrupted");
  for (size_t i = 4; i < tokens.size(); ++i) b.vocab.append(tokens[i]);
  b.best_spearman = header.at("best_spearman");
  b.step = header.at("step");

  std::vector<std::pair<std::string, Tensor>> params =
      b.kind == "twin" ? b.twin.named_params() : b.single.named_params();
  std::map<std::string, Tensor> by_name(params.begin(), params.end());
  for (const auto& entry : header.at("arrays")) {
    std::string name = entry.at("name");
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw IoError(path + ": unknown array '" + name + "'");
    Shape shape = entry.at("shape").get<Shape>();
    if (shape != it->second.shape())
      throw IoError(path + ": shape mismatch for '" + name + "'");
    read_doubles_le(in, it->second.values());
  }
  if (!in) throw IoError(path + ": truncated checkpoint");
  return b;
}

}  // namespace jtcse
