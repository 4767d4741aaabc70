#include "jtcse/losses.hpp"

#include <cmath>

namespace jtcse {

namespace {

Tensor row(Graph& g, const Tensor& m, int i) {
  return g.reshape(g.slice(m, 0, i, 1), {m.shape()[1]});
}

}  // namespace

Tensor info_nce(Graph& g, const Tensor& h, const Tensor& h_pos, double tau) {
  if (h.shape().size() != 2 || h.shape() != h_pos.shape())
    throw NumericError("info_nce: expected matching [B x d] inputs");
  int B = h.shape()[0];
  if (B < 1) throw NumericError("info_nce: empty batch");
  std::vector<Tensor> rows_h, rows_p;
  for (int i = 0; i < B; ++i) {
    rows_h.push_back(row(g, h, i));
    rows_p.push_back(row(g, h_pos, i));
  }
  std::vector<Tensor> per_example;
  for (int i = 0; i < B; ++i) {
    std::vector<Tensor> sims;
    for (int j = 0; j < B; ++j)
      sims.push_back(g.scale(g.cosine_sim(rows_h[i], rows_p[j]), 1.0 / tau));
    Tensor lse = g.logsumexp(g.stack_scalars(sims));
    per_example.push_back(g.sub(lse, sims[i]));
  }
  return g.mean_all(g.stack_scalars(per_example));
}

Tensor tmc_geometric(Graph& g, const Tensor& h, const Tensor& h_pos) {
  if (h.shape() != h_pos.shape())
    throw NumericError("tmc_geometric: shape mismatch");
  auto sq = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
  };
  if (sq(h.values()) == 0.0 || sq(h_pos.values()) == 0.0)
    throw NumericError("tmc_geometric: zero-norm input");
  Tensor num = g.l2_norm(g.sub(h, h_pos));
  Tensor den = g.add(g.l2_norm(h), g.l2_norm(h_pos));
  return g.div(num, den);
}

double tmc_geometric_value(const std::vector<double>& h,
                           const std::vector<double>& h_pos) {
  Graph g;
  return tmc_geometric(g, Tensor::constant({static_cast<int>(h.size())}, h),
                       Tensor::constant({static_cast<int>(h_pos.size())}, h_pos))
      .item();
}

double tmc_binary(double k, double t) {
  if (!(k > 0.0)) throw NumericError("tmc_binary: k must be positive");
  if (t < -1.0 || t > 1.0) throw NumericError("tmc_binary: t outside [-1,1]");
  double radicand = 1.0 + k * k - 2.0 * k * t;
  return std::sqrt(std::max(radicand, 0.0)) / (1.0 + k);
}

Tensor tmc_amended(Graph& g, const Tensor& h_i_P, const Tensor& h_j_P_pos,
                   const Tensor& h_I_L, const Tensor& h_II_L, double eps) {
  int B = h_i_P.shape()[0];
  std::vector<Tensor> terms;
  for (int b = 0; b < B; ++b) {
    Tensor sim = g.clamp(g.cosine_sim(row(g, h_I_L, b), row(g, h_II_L, b)),
                         eps, 1.0);
    Tensor coeff = g.scale(g.log(sim), -1.0);
    Tensor modulus = tmc_geometric(g, row(g, h_i_P, b), row(g, h_j_P_pos, b));
    terms.push_back(g.mul(coeff, modulus));
  }
  return g.mean_all(g.stack_scalars(terms));
}

Tensor ictm(Graph& g, const Tensor& pooler_I, const Tensor& pooler_I_pos,
            const Tensor& pooler_II, const Tensor& pooler_II_pos,
            const Tensor& h_I_L, const Tensor& h_II_L, double eps) {
  return g.add(tmc_amended(g, pooler_I, pooler_II_pos, h_I_L, h_II_L, eps),
               tmc_amended(g, pooler_II, pooler_I_pos, h_I_L, h_II_L, eps));
}

Tensor icnce(Graph& g, const Tensor& h_I_L, const Tensor& h_II_L,
             const Tensor& c_I_O, const Tensor& c_II_O, double tau, int R) {
  if (R != 0 && R != 1) throw NumericError("icnce: R must be 0 or 1");
  if (R == 1)
    return g.add(info_nce(g, h_I_L, h_II_L, tau), info_nce(g, c_I_O, c_II_O, tau));
  return g.add(info_nce(g, h_II_L, h_I_L, tau), info_nce(g, c_II_O, c_I_O, tau));
}

LossReport total_loss(Graph& g, const TwinOutputs& pass1,
                      const TwinOutputs& pass2, const LossConfig& cfg, int R,
                      const LossMask& mask) {
  cfg.validate();
  mask.validate();
  LossReport rep;
  std::vector<Tensor> terms;
  if (mask.nce) {
    Tensor nI = info_nce(g, pass1.I.cls_pool, pass2.I.cls_pool, cfg.tau);
    Tensor nII = info_nce(g, pass1.II.cls_pool, pass2.II.cls_pool, cfg.tau);
    rep.l_nce_I = nI.item();
    rep.l_nce_II = nII.item();
    terms.push_back(nI);
    terms.push_back(nII);
  }
  if (mask.icnce) {
    if (!pass1.cross_computed)
      throw NumericError("total_loss: ICNCE requires cross-branch outputs");
    Tensor ic = icnce(g, pass1.I.cls_pool, pass1.II.cls_pool,
                      pass1.cross.c_I_O, pass1.cross.c_II_O, cfg.tau, R);
    rep.l_icnce = ic.item();
    terms.push_back(ic);
  }
  if (mask.ictm) {
    Tensor tm = ictm(g, pass1.I.pooler_out, pass2.I.pooler_out,
                     pass1.II.pooler_out, pass2.II.pooler_out,
                     pass1.I.cls_pool, pass1.II.cls_pool, cfg.sim_clamp_eps);
    rep.l_ictm = tm.item();
    terms.push_back(tm);
  }
  Tensor total = terms[0];
  for (size_t i = 1; i < terms.size(); ++i) total = g.add(total, terms[i]);
  rep.total = total;
  rep.total_value = total.item();
  rep.grads_available = true;
  return rep;
}

namespace {

std::vector<double> unit(const std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n == 0.0) throw NumericError("unit: zero-norm embedding");
  std::vector<double> out(v);
  for (double& x : out) x /= n;
  return out;
}

double sqdist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

}  // namespace

double alignment(const std::vector<std::vector<double>>& h,
                 const std::vector<std::vector<double>>& h_pos) {
  if (h.empty() || h.size() != h_pos.size())
    throw NumericError("alignment: mismatched pair lists");
  double s = 0.0;
  for (size_t i = 0; i < h.size(); ++i) s += sqdist(unit(h[i]), unit(h_pos[i]));
  return s / h.size();
}

double uniformity(const std::vector<std::vector<double>>& h, double t) {
  if (h.size() < 2) throw NumericError("uniformity: needs at least 2 embeddings");
  std::vector<std::vector<double>> u;
  for (const auto& v : h) u.push_back(unit(v));
  double s = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < u.size(); ++i)
    for (size_t j = 0; j < u.size(); ++j) {
      if (i == j) continue;
      s += std::exp(-t * sqdist(u[i], u[j]));
      ++count;
    }
  return std::log(s / count);
}

}  // namespace jtcse
