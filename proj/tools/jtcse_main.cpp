#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "jtcse/checkpoint.hpp"
#include "jtcse/metrics.hpp"
#include "jtcse/rng.hpp"
#include "jtcse/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw jtcse::IoError("cannot open " + path);
  uint64_t h = 1469598103934665603ULL;
  char buf[65536];
  while (in.read(buf, sizeof buf) || in.gcount() > 0) {
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 1099511628211ULL;
    }
  }
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

struct ManifestWriter {
  std::string command;
  ordered_json config = ordered_json::object();
  uint64_t seed = 0;
  ordered_json input_hashes = ordered_json::object();
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();

  void add_input(const std::string& path) { input_hashes[path] = fnv1a_file(path); }

  void write(const std::string& out_dir) {
    ordered_json m;
    m["command"] = command;
    m["config"] = config;
    m["seed"] = seed;
    m["input_hashes"] = input_hashes;
    m["outputs"] = outputs;
    m["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    m["artifact_version"] = "0.1.0";
    std::ofstream f(fs::path(out_dir) / "manifest.json");
    if (!f) throw jtcse::IoError("cannot write manifest in " + out_dir);
    f << m.dump(2) << "\n";
  }
};

// flat key=value config files; '#' starts a comment line
std::map<std::string, std::string> read_kv_config(const std::string& path) {
  std::map<std::string, std::string> kv;
  for (const std::string& line : jtcse::read_lines(path)) {
    if (line.empty() || line[0] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw jtcse::ConfigError(path + ": expected key=value, got '" + line + "'");
    std::string key = line.substr(0, eq), val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
    };
    trim(key);
    trim(val);
    kv[key] = val;
  }
  return kv;
}

struct RunOptions {
  jtcse::EncoderConfig enc;
  jtcse::TrainConfig train;
  int cael_interval = 2;
  int vocab_cap = 2048;
};

void apply_kv(RunOptions& opt, const std::map<std::string, std::string>& kv) {
  for (const auto& [k, v] : kv) {
    try {
      if (k == "n_layers") opt.enc.n_layers = std::stoi(v);
      else if (k == "d") opt.enc.d = std::stoi(v);
      else if (k == "n_heads") opt.enc.n_heads = std::stoi(v);
      else if (k == "d_ffn") opt.enc.d_ffn = std::stoi(v);
      else if (k == "max_seq_len") { opt.enc.max_seq_len = std::stoi(v); opt.train.max_seq_len = std::stoi(v); }
      else if (k == "dropout_p") opt.enc.dropout_p = std::stod(v);
      else if (k == "vocab_cap") opt.vocab_cap = std::stoi(v);
      else if (k == "cael_interval") opt.cael_interval = std::stoi(v);
      else if (k == "steps") opt.train.steps = std::stoi(v);
      else if (k == "batch_size") opt.train.batch_size = std::stoi(v);
      else if (k == "learning_rate") opt.train.learning_rate = std::stod(v);
      else if (k == "eval_every") opt.train.eval_every = std::stoi(v);
      else if (k == "seed") opt.train.seed = std::stoull(v);
      else if (k == "tau") opt.train.loss.tau = std::stod(v);
      else if (k == "weight_decay") opt.train.weight_decay = std::stod(v);
      else throw jtcse::ConfigError("unknown config key '" + k + "'");
    } catch (const jtcse::Error&) {
      throw;
    } catch (const std::exception&) {
      throw jtcse::ConfigError("bad value for config key '" + k + "': " + v);
    }
  }
}

ordered_json options_snapshot(const RunOptions& opt) {
  ordered_json j;
  j["n_layers"] = opt.enc.n_layers;
  j["d"] = opt.enc.d;
  j["n_heads"] = opt.enc.n_heads;
  j["d_ffn"] = opt.enc.d_ffn;
  j["max_seq_len"] = opt.enc.max_seq_len;
  j["dropout_p"] = opt.enc.dropout_p;
  j["vocab_cap"] = opt.vocab_cap;
  j["cael_interval"] = opt.cael_interval;
  j["steps"] = opt.train.steps;
  j["batch_size"] = opt.train.batch_size;
  j["learning_rate"] = opt.train.learning_rate;
  j["eval_every"] = opt.train.eval_every;
  j["seed"] = opt.train.seed;
  j["tau"] = opt.train.loss.tau;
  return j;
}

jtcse::LossMask parse_mask(const std::string& spec) {
  jtcse::LossMask m{false, false, false};
  std::istringstream ss(spec);
  std::string part;
  while (std::getline(ss, part, ',')) {
    if (part == "nce") m.nce = true;
    else if (part == "icnce") m.icnce = true;
    else if (part == "ictm") m.ictm = true;
    else if (!part.empty())
      throw jtcse::ConfigError("unknown loss term '" + part + "'");
  }
  m.validate();
  return m;
}

void require_file(const std::string& path) {
  if (!fs::exists(path)) throw jtcse::DataError("input file not found: " + path);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"JTCSE twin-tower sentence-embedding toolkit"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic corpus");
  uint64_t synth_seed = 7;
  int n_templates = 8, n_sentences = 2000, n_pairs = 500;
  std::string synth_out = "synth-out";
  synth->add_option("--seed", synth_seed, "generator seed")->capture_default_str();
  synth->add_option("--n-templates", n_templates, "sentence templates")->capture_default_str();
  synth->add_option("--n-sentences", n_sentences, "training sentences")->capture_default_str();
  synth->add_option("--n-pairs", n_pairs, "graded STS pairs")->capture_default_str();
  synth->add_option("--out", synth_out, "output directory")->capture_default_str();

  // shared train-ish options
  std::string corpus_path, sts_dev_path, config_path, out_dir = "run-out";
  RunOptions opt;
  auto add_train_opts = [&](CLI::App* cmd) {
    cmd->add_option("--corpus", corpus_path, "corpus file, one sentence per line");
    cmd->add_option("--sts-dev", sts_dev_path, "dev STS TSV file");
    cmd->add_option("--config", config_path, "key=value config file");
    cmd->add_option("--out", out_dir, "output directory")->capture_default_str();
    cmd->add_option("--steps", opt.train.steps, "optimizer steps")->capture_default_str();
    cmd->add_option("--batch-size", opt.train.batch_size, "batch size")->capture_default_str();
    cmd->add_option("--lr", opt.train.learning_rate, "learning rate")->capture_default_str();
    cmd->add_option("--seed", opt.train.seed, "root seed")->capture_default_str();
    cmd->add_option("--eval-every", opt.train.eval_every, "steps between dev evals")->capture_default_str();
  };

  auto* train_cmd = app.add_subcommand("train", "train the twin model");
  add_train_opts(train_cmd);
  std::string mask_spec = "nce,icnce,ictm";
  train_cmd->add_option("--loss-mask", mask_spec, "enabled loss terms")->capture_default_str();

  auto* ablate_cmd = app.add_subcommand("ablate", "loss-component ablation");
  add_train_opts(ablate_cmd);
  std::string subsets_spec = "nce,icnce,ictm;nce";
  ablate_cmd->add_option("--subsets", subsets_spec, "semicolon-separated loss masks")
      ->capture_default_str();

  auto* distill_cmd = app.add_subcommand("distill", "distill into a single tower");
  add_train_opts(distill_cmd);
  std::string teacher_dir;
  distill_cmd->add_option("--teacher", teacher_dir, "teacher run directory")->required();
  uint64_t student_seed = 99;
  distill_cmd->add_option("--student-seed", student_seed, "student init seed")
      ->capture_default_str();

  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on STS");
  std::string model_dir, sts_path, eval_out;
  eval_cmd->add_option("--model", model_dir, "run directory with model.ckpt")->required();
  eval_cmd->add_option("--sts", sts_path, "STS TSV file")->required();
  eval_cmd->add_option("--out", eval_out, "optional output directory");

  auto* diag_cmd = app.add_subcommand("diagnose", "attention and E_CLS diagnostics");
  std::string diag_sentence, diag_out;
  bool per_head = false;
  diag_cmd->add_option("--model", model_dir, "run directory with model.ckpt")->required();
  diag_cmd->add_option("--sentence", diag_sentence, "input sentence")->required();
  diag_cmd->add_option("--out", diag_out, "output directory");
  diag_cmd->add_flag("--per-head", per_head, "include raw per-head matrices");

  auto* surf_cmd = app.add_subcommand("loss-surface", "export the modulus-loss grid");
  double k_min = 0.1, k_max = 5.0, k_step = 0.01;
  int t_steps = 201;
  std::string grid_out = "grid.csv";
  surf_cmd->add_option("--k-min", k_min, "")->capture_default_str();
  surf_cmd->add_option("--k-max", k_max, "")->capture_default_str();
  surf_cmd->add_option("--k-step", k_step, "")->capture_default_str();
  surf_cmd->add_option("--t-steps", t_steps, "grid points over t in [-1,1]")
      ->capture_default_str();
  surf_cmd->add_option("--out", grid_out, "output CSV path")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*synth) {
      ManifestWriter mw;
      mw.command = "synth";
      mw.seed = synth_seed;
      mw.config = {{"n_templates", n_templates},
                   {"n_sentences", n_sentences},
                   {"n_pairs", n_pairs}};
      fs::create_directories(synth_out);
      jtcse::SynthCorpus sc =
          jtcse::synth_corpus(synth_seed, n_templates, n_sentences, n_pairs);
      std::string corpus_file = (fs::path(synth_out) / "corpus.txt").string();
      std::string sts_file = (fs::path(synth_out) / "sts.tsv").string();
      jtcse::write_lines(corpus_file, sc.train_lines);
      jtcse::write_sts_tsv(sts_file, sc.sts);
      mw.outputs = {corpus_file, sts_file};
      mw.write(synth_out);
      std::cout << "wrote " << sc.train_lines.size() << " sentences and "
                << sc.sts.size() << " pairs to " << synth_out << "\n";
    } else if (*train_cmd || *ablate_cmd) {
      if (!config_path.empty()) {
        require_file(config_path);
        apply_kv(opt, read_kv_config(config_path));
      }
      // flags override the file; CLI11 already wrote them into opt
      require_file(corpus_path);
      require_file(sts_dev_path);
      auto corpus = jtcse::read_lines(corpus_path);
      auto sts_dev = jtcse::read_sts_tsv(sts_dev_path);
      jtcse::Vocab vocab = jtcse::build_vocab(corpus, opt.vocab_cap);
      opt.enc.vocab_size = vocab.size();

      ManifestWriter mw;
      mw.seed = opt.train.seed;
      mw.config = options_snapshot(opt);
      mw.add_input(corpus_path);
      mw.add_input(sts_dev_path);
      fs::create_directories(out_dir);

      if (*train_cmd) {
        mw.command = "train";
        opt.train.loss_mask = parse_mask(mask_spec);
        mw.config["loss_mask"] = mask_spec;
        uint64_t si = jtcse::Rng::split(opt.train.seed, "tower-I-init").next_u64();
        uint64_t sii = jtcse::Rng::split(opt.train.seed, "tower-II-init").next_u64();
        jtcse::TwinModel model =
            jtcse::make_twin(opt.enc, opt.cael_interval, si, sii);
        jtcse::TrainResult res =
            jtcse::train(model, vocab, corpus, sts_dev, opt.train);
        std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();
        std::string trace = (fs::path(out_dir) / "trace.csv").string();
        jtcse::save_checkpoint(ckpt, res.best);
        jtcse::write_trace_csv(trace, res.trace);
        mw.outputs = {ckpt, trace};
        mw.write(out_dir);
        std::cout << "best dev spearman " << res.best.best_spearman << " at step "
                  << res.best.step << " (untrained " << res.initial_dev_spearman
                  << ")\n";
      } else {
        mw.command = "ablate";
        mw.config["subsets"] = subsets_spec;
        std::vector<jtcse::LossMask> subsets;
        std::istringstream ss(subsets_spec);
        std::string part;
        while (std::getline(ss, part, ';'))
          if (!part.empty()) subsets.push_back(parse_mask(part));
        if (subsets.empty()) throw jtcse::ConfigError("--subsets is empty");
        auto rows = jtcse::ablate(opt.enc, opt.cael_interval, vocab, corpus,
                                  sts_dev, opt.train, subsets);
        std::string table = (fs::path(out_dir) / "ablation.csv").string();
        std::ofstream f(table);
        f.precision(17);
        f << "loss_mask,dev_spearman,modulus_mismatch\n";
        for (const auto& r : rows) {
          f << r.mask_label << "," << r.dev_spearman << "," << r.modulus_mismatch
            << "\n";
          std::cout << r.mask_label << "\t" << r.dev_spearman << "\t"
                    << r.modulus_mismatch << "\n";
        }
        mw.outputs = {table};
        mw.write(out_dir);
      }
    } else if (*distill_cmd) {
      if (!config_path.empty()) {
        require_file(config_path);
        apply_kv(opt, read_kv_config(config_path));
      }
      require_file(corpus_path);
      require_file(sts_dev_path);
      std::string teacher_ckpt = (fs::path(teacher_dir) / "model.ckpt").string();
      require_file(teacher_ckpt);
      jtcse::CheckpointBundle teacher = jtcse::load_checkpoint(teacher_ckpt);
      if (teacher.kind != "twin")
        throw jtcse::DataError("teacher checkpoint is not a twin model");
      auto corpus = jtcse::read_lines(corpus_path);
      auto sts_dev = jtcse::read_sts_tsv(sts_dev_path);

      ManifestWriter mw;
      mw.command = "distill";
      mw.seed = opt.train.seed;
      mw.config = options_snapshot(opt);
      mw.add_input(corpus_path);
      mw.add_input(sts_dev_path);
      mw.add_input(teacher_ckpt);
      fs::create_directories(out_dir);

      jtcse::EncoderWeights student =
          jtcse::init_weights(teacher.twin.cfg, student_seed);
      opt.train.max_seq_len = teacher.twin.cfg.max_seq_len;
      jtcse::DistillResult res = jtcse::distill(teacher.twin, student,
                                                teacher.vocab, corpus, sts_dev,
                                                opt.train);
      std::string ckpt = (fs::path(out_dir) / "model.ckpt").string();
      jtcse::save_checkpoint(ckpt, res.best);
      std::string mse_csv = (fs::path(out_dir) / "mse_trace.csv").string();
      std::ofstream f(mse_csv);
      f.precision(17);
      f << "step,mse\n";
      for (size_t i = 0; i < res.mse_trace.size(); ++i)
        f << i + 1 << "," << res.mse_trace[i] << "\n";
      mw.outputs = {ckpt, mse_csv};
      mw.write(out_dir);
      std::cout << "student best dev spearman " << res.best.best_spearman
                << "; teacher cosine " << res.pre_mean_cosine << " -> "
                << res.post_mean_cosine << "\n";
    } else if (*eval_cmd) {
      std::string ckpt = (fs::path(model_dir) / "model.ckpt").string();
      require_file(ckpt);
      require_file(sts_path);
      jtcse::CheckpointBundle b = jtcse::load_checkpoint(ckpt);
      auto sts = jtcse::read_sts_tsv(sts_path);
      std::vector<double> gold;
      for (const auto& ex : sts) gold.push_back(ex.gold);
      if (b.kind == "twin") {
        jtcse::EvalReport rep =
            jtcse::evaluate(b.twin, b.vocab, sts, b.twin.cfg.max_seq_len);
        std::cout << "spearman " << rep.spearman << "\nalignment "
                  << rep.alignment << "\nuniformity " << rep.uniformity << "\n";
      } else {
        double sp = jtcse::spearman(
            jtcse::predict_sts_single(b.single, b.vocab, sts,
                                      b.single.cfg.max_seq_len),
            gold);
        std::cout << "spearman " << sp << "\n";
      }
      if (!eval_out.empty()) {
        ManifestWriter mw;
        mw.command = "eval";
        mw.add_input(ckpt);
        mw.add_input(sts_path);
        fs::create_directories(eval_out);
        mw.write(eval_out);
      }
    } else if (*diag_cmd) {
      std::string ckpt = (fs::path(model_dir) / "model.ckpt").string();
      require_file(ckpt);
      jtcse::CheckpointBundle b = jtcse::load_checkpoint(ckpt);
      if (b.kind != "twin")
        throw jtcse::DataError("diagnose expects a twin checkpoint");
      std::string dir = diag_out.empty() ? "." : diag_out;
      fs::create_directories(dir);
      std::string json_path = (fs::path(dir) / "attention.json").string();
      jtcse::attention_dump(b.twin, b.vocab, diag_sentence, json_path, per_head);
      std::cout << "wrote " << json_path << "\n";
      if (!diag_out.empty()) {
        ManifestWriter mw;
        mw.command = "diagnose";
        mw.add_input(ckpt);
        mw.outputs = {json_path};
        mw.write(dir);
      }
    } else if (*surf_cmd) {
      std::ofstream f(grid_out);
      if (!f) throw jtcse::IoError("cannot write " + grid_out);
      f.precision(17);
      int k_count = static_cast<int>(std::floor((k_max - k_min) / k_step + 0.5)) + 1;
      for (int ti = 0; ti < t_steps; ++ti) {
        double t = -1.0 + 2.0 * ti / (t_steps - 1);
        for (int ki = 0; ki < k_count; ++ki) {
          double k = k_min + ki * k_step;
          f << k << "," << t << "," << jtcse::tmc_binary(k, t) << "\n";
        }
      }
      std::cout << "wrote " << t_steps * k_count << " rows to " << grid_out << "\n";
    }
  } catch (const jtcse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
