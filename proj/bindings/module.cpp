#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "jtcse/checkpoint.hpp"
#include "jtcse/metrics.hpp"
#include "jtcse/trainer.hpp"

namespace py = pybind11;

namespace {

double py_info_nce(const std::vector<std::vector<double>>& h,
                   const std::vector<std::vector<double>>& h_pos, double tau) {
  if (h.empty() || h.size() != h_pos.size())
    throw jtcse::DataError("info_nce: need equal nonempty batches");
  int B = static_cast<int>(h.size()), d = static_cast<int>(h[0].size());
  std::vector<double> hv, pv;
  for (const auto& row : h) hv.insert(hv.end(), row.begin(), row.end());
  for (const auto& row : h_pos) pv.insert(pv.end(), row.begin(), row.end());
  jtcse::Graph g;
  return jtcse::info_nce(g, jtcse::Tensor::constant({B, d}, hv),
                         jtcse::Tensor::constant({B, d}, pv), tau)
      .item();
}

class Embedder {
public:
  explicit Embedder(const std::string& checkpoint_path)
      : bundle_(jtcse::load_checkpoint(checkpoint_path)) {}

  std::vector<std::vector<double>> embed(const std::vector<std::string>& sentences) {
    if (bundle_.kind == "twin")
      return jtcse::embed_sentences(bundle_.twin, bundle_.vocab, sentences,
                                    bundle_.twin.cfg.max_seq_len);
    return jtcse::embed_sentences_single(bundle_.single, bundle_.vocab, sentences,
                                         bundle_.single.cfg.max_seq_len);
  }

  std::string kind() const { return bundle_.kind; }
  int dim() const {
    return bundle_.kind == "twin" ? bundle_.twin.cfg.d : bundle_.single.cfg.d;
  }

private:
  jtcse::CheckpointBundle bundle_;
};

}  // namespace

PYBIND11_MODULE(_jtcse, m) {
  m.doc() = "twin-tower contrastive sentence embeddings, native core";

  py::register_exception<jtcse::Error>(m, "JtcseError");

  m.def("tmc_binary", &jtcse::tmc_binary, py::arg("k"), py::arg("t"),
        "closed-form modulus constraint sqrt(1 + k^2 - 2kt) / (1 + k)");
  m.def(
      "tmc_geometric",
      [](const std::vector<double>& h, const std::vector<double>& h_pos) {
        return jtcse::tmc_geometric_value(h, h_pos);
      },
      py::arg("h"), py::arg("h_pos"));
  m.def("info_nce", &py_info_nce, py::arg("h"), py::arg("h_pos"),
        py::arg("tau") = 0.05);
  m.def("alignment", &jtcse::alignment, py::arg("h"), py::arg("h_pos"));
  m.def("uniformity", &jtcse::uniformity, py::arg("h"), py::arg("t") = 2.0);
  m.def("spearman", &jtcse::spearman, py::arg("pred"), py::arg("gold"));
  m.def(
      "cael_positions",
      [](int n_layers, int k) {
        auto p = jtcse::cael_positions(n_layers, k);
        return std::vector<int>(p.positions.begin(), p.positions.end());
      },
      py::arg("n_layers"), py::arg("k"));
  m.def(
      "macs_and_eta",
      [](int n_layers, int d, int d_ffn, int n_towers, int seq_len, double score) {
        jtcse::EncoderConfig cfg;
        cfg.n_layers = n_layers;
        cfg.d = d;
        cfg.n_heads = 1;
        cfg.d_ffn = d_ffn;
        auto r = jtcse::macs_and_eta(cfg, n_towers, seq_len, score);
        return py::make_tuple(r.gmac, r.eta);
      },
      py::arg("n_layers"), py::arg("d"), py::arg("d_ffn"), py::arg("n_towers"),
      py::arg("seq_len"), py::arg("score"));
  m.def(
      "synth_corpus",
      [](uint64_t seed, int n_templates, int n_sentences, int n_pairs) {
        jtcse::SynthCorpus sc =
            jtcse::synth_corpus(seed, n_templates, n_sentences, n_pairs);
        py::list pairs;
        for (const auto& ex : sc.sts)
          pairs.append(py::make_tuple(ex.sentence_a, ex.sentence_b, ex.gold));
        return py::make_tuple(sc.train_lines, pairs);
      },
      py::arg("seed"), py::arg("n_templates") = 8, py::arg("n_sentences") = 2000,
      py::arg("n_pairs") = 500);

  py::class_<Embedder>(m, "Embedder")
      .def(py::init<const std::string&>(), py::arg("checkpoint_path"))
      .def("embed", &Embedder::embed, py::arg("sentences"))
      .def_property_readonly("kind", &Embedder::kind)
      .def_property_readonly("dim", &Embedder::dim);
}
