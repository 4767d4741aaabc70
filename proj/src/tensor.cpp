#include "jtcse/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace jtcse {

int shape_numel(const Shape& s) {
  int n = 1;
  for (int e : s) n *= e;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape())
    throw NumericError(std::string(op) + ": shape mismatch " +
                       shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// C[m,n] += A[m,k] * B[k,n]
void mm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C[m,n] += A[m,k] * B[n,k]^T
void mm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* ai = a + static_cast<size_t>(i) * k;
    double* ci = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* bj = b + static_cast<size_t>(j) * k;
      double s = 0.0;
      for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
      ci[j] += s;
    }
  }
}

// C[k,n] += A[m,k]^T * B[m,n]
void mm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int p = 0; p < m; ++p) {
    const double* ap = a + static_cast<size_t>(p) * k;
    const double* bp = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < k; ++i) {
      double av = ap[i];
      if (av == 0.0) continue;
      double* ci = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

std::vector<int> row_strides(const Shape& s) {
  std::vector<int> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i)
    st[i] = st[i + 1] * s[i + 1];
  return st;
}

}  // namespace

Tensor Tensor::constant(Shape shape, std::vector<double> values) {
  auto d = std::make_shared<TensorData>();
  if (shape_numel(shape) != static_cast<int>(values.size()))
    throw NumericError("tensor: " + shape_str(shape) + " does not hold " +
                       std::to_string(values.size()) + " values");
  d->shape = std::move(shape);
  d->v = std::move(values);
  return Tensor(d);
}

Tensor Tensor::scalar(double value) { return constant({1}, {value}); }

Tensor Tensor::zeros(Shape shape) {
  std::vector<double> v(static_cast<size_t>(shape_numel(shape)), 0.0);
  return constant(std::move(shape), std::move(v));
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
  Tensor t = constant(std::move(shape), std::move(values));
  t.raw()->requires_grad = true;
  t.raw()->is_param = true;
  return t;
}

double Tensor::item() const {
  if (numel() != 1) throw NumericError("item: tensor is not scalar");
  return d_->v[0];
}

Tensor Graph::make(Shape shape, bool rg) {
  auto d = std::make_shared<TensorData>();
  d->shape = std::move(shape);
  d->v.assign(static_cast<size_t>(shape_numel(d->shape)), 0.0);
  d->requires_grad = rg;
  return Tensor(d);
}

void Graph::record(const Tensor& out, std::function<void()> fn) {
  nodes_.push_back({out.data(), std::move(fn)});
}

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int i = 0; i < out.numel(); ++i)
    out.raw()->v[i] = a.values()[i] + b.values()[i];
  auto ad = a.data(), bd = b.data(), od = out.data();
  record(out, [ad, bd, od] {
    if (ad->requires_grad) {
      ad->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i];
    }
    if (bd->requires_grad) {
      bd->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) bd->g[i] += od->g[i];
    }
  });
  return out;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int i = 0; i < out.numel(); ++i)
    out.raw()->v[i] = a.values()[i] - b.values()[i];
  auto ad = a.data(), bd = b.data(), od = out.data();
  record(out, [ad, bd, od] {
    if (ad->requires_grad) {
      ad->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i];
    }
    if (bd->requires_grad) {
      bd->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) bd->g[i] -= od->g[i];
    }
  });
  return out;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  Tensor out = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int i = 0; i < out.numel(); ++i)
    out.raw()->v[i] = a.values()[i] * b.values()[i];
  auto ad = a.data(), bd = b.data(), od = out.data();
  record(out, [ad, bd, od] {
    if (ad->requires_grad) {
      ad->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i] * bd->v[i];
    }
    if (bd->requires_grad) {
      bd->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) bd->g[i] += od->g[i] * ad->v[i];
    }
  });
  return out;
}

Tensor Graph::div(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "div");
  Tensor out = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int i = 0; i < out.numel(); ++i)
    out.raw()->v[i] = a.values()[i] / b.values()[i];
  auto ad = a.data(), bd = b.data(), od = out.data();
  record(out, [ad, bd, od] {
    if (ad->requires_grad) {
      ad->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i] / bd->v[i];
    }
    if (bd->requires_grad) {
      bd->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i)
        bd->g[i] -= od->g[i] * ad->v[i] / (bd->v[i] * bd->v[i]);
    }
  });
  return out;
}

Tensor Graph::scale(const Tensor& a, double c) {
  Tensor out = make(a.shape(), a.requires_grad());
  for (int i = 0; i < out.numel(); ++i) out.raw()->v[i] = a.values()[i] * c;
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, c] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (size_t i = 0; i < od->g.size(); ++i) ad->g[i] += od->g[i] * c;
  });
  return out;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  const Shape& as = a.shape();
  const Shape& bs = b.shape();
  int batch = 1, m, k, n, kb;
  bool a3 = as.size() == 3, b3 = bs.size() == 3;
  if (as.size() == 2 && bs.size() == 2) {
    m = as[0]; k = as[1]; kb = bs[0]; n = bs[1];
  } else if (a3 && bs.size() == 2) {
    batch = as[0]; m = as[1]; k = as[2]; kb = bs[0]; n = bs[1];
  } else if (a3 && b3) {
    if (as[0] != bs[0])
      throw NumericError("matmul: batch mismatch " + shape_str(as) + " vs " +
                         shape_str(bs));
    batch = as[0]; m = as[1]; k = as[2]; kb = bs[1]; n = bs[2];
  } else {
    throw NumericError("matmul: unsupported ranks " + shape_str(as) + " vs " +
                       shape_str(bs));
  }
  if (k != kb)
    throw NumericError("matmul: inner extents differ, " + shape_str(as) +
                       " vs " + shape_str(bs));
  Shape os = a3 ? Shape{batch, m, n} : Shape{m, n};
  Tensor out = make(os, a.requires_grad() || b.requires_grad());

  const size_t astep = static_cast<size_t>(m) * k;
  const size_t bstep = b3 ? static_cast<size_t>(k) * n : 0;
  const size_t ostep = static_cast<size_t>(m) * n;
  for (int bi = 0; bi < batch; ++bi)
    mm_nn(a.values().data() + bi * astep, b.values().data() + bi * bstep,
          out.raw()->v.data() + bi * ostep, m, k, n);

  auto ad = a.data(), bd = b.data(), od = out.data();
  record(out, [ad, bd, od, batch, m, k, n, astep, bstep, ostep] {
    for (int bi = 0; bi < batch; ++bi) {
      const double* av = ad->v.data() + bi * astep;
      const double* bv = bd->v.data() + bi * bstep;
      const double* og = od->g.data() + bi * ostep;
      if (ad->requires_grad) {
        ad->ensure_grad();
        mm_nt(og, bv, ad->g.data() + bi * astep, m, n, k);  // dA = dC * B^T
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        mm_tn(av, og, bd->g.data() + bi * bstep, m, k, n);  // dB = A^T * dC
      }
    }
  });
  return out;
}

Tensor Graph::transpose_last2(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw NumericError("transpose_last2: rank < 2");
  Shape os = s;
  std::swap(os[s.size() - 1], os[s.size() - 2]);
  int m = s[s.size() - 2], n = s[s.size() - 1];
  int batch = a.numel() / (m * n);
  Tensor out = make(os, a.requires_grad());
  for (int bi = 0; bi < batch; ++bi) {
    const double* src = a.values().data() + static_cast<size_t>(bi) * m * n;
    double* dst = out.raw()->v.data() + static_cast<size_t>(bi) * m * n;
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < n; ++j) dst[j * m + i] = src[i * n + j];
  }
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, batch, m, n] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (int bi = 0; bi < batch; ++bi) {
      const double* og = od->g.data() + static_cast<size_t>(bi) * m * n;
      double* ag = ad->g.data() + static_cast<size_t>(bi) * m * n;
      for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) ag[i * n + j] += og[j * m + i];
    }
  });
  return out;
}

Tensor Graph::softmax_rows(const Tensor& a) {
  const Shape& s = a.shape();
  int n = s.back();
  int rows = a.numel() / n;
  Tensor out = make(s, a.requires_grad());
  for (int r = 0; r < rows; ++r) {
    const double* x = a.values().data() + static_cast<size_t>(r) * n;
    double* y = out.raw()->v.data() + static_cast<size_t>(r) * n;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0.0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= z;
  }
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, rows, n] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (int r = 0; r < rows; ++r) {
      const double* y = od->v.data() + static_cast<size_t>(r) * n;
      const double* gy = od->g.data() + static_cast<size_t>(r) * n;
      double* gx = ad->g.data() + static_cast<size_t>(r) * n;
      double dotv = 0.0;
      for (int j = 0; j < n; ++j) dotv += gy[j] * y[j];
      for (int j = 0; j < n; ++j) gx[j] += y[j] * (gy[j] - dotv);
    }
  });
  return out;
}

Tensor Graph::layer_norm(const Tensor& x, const Tensor& gain,
                         const Tensor& bias, double eps) {
  if (eps <= 0.0) throw NumericError("layer_norm: eps must be positive");
  int d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw NumericError("layer_norm: gain/bias extent != " + std::to_string(d));
  int rows = x.numel() / d;
  Tensor out = make(x.shape(),
                    x.requires_grad() || gain.requires_grad() || bias.requires_grad());
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto inv_sigma = std::make_shared<std::vector<double>>(rows);
  for (int r = 0; r < rows; ++r) {
    const double* xr = x.values().data() + static_cast<size_t>(r) * d;
    double* hr = xhat->data() + static_cast<size_t>(r) * d;
    double* yr = out.raw()->v.data() + static_cast<size_t>(r) * d;
    double mu = 0.0;
    for (int j = 0; j < d; ++j) mu += xr[j];
    mu /= d;
    double var = 0.0;
    for (int j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= d;
    double is = 1.0 / std::sqrt(var + eps);
    (*inv_sigma)[r] = is;
    for (int j = 0; j < d; ++j) {
      hr[j] = (xr[j] - mu) * is;
      yr[j] = gain.values()[j] * hr[j] + bias.values()[j];
    }
  }
  auto xd = x.data(), gd = gain.data(), bd = bias.data(), od = out.data();
  record(out, [xd, gd, bd, od, xhat, inv_sigma, rows, d] {
    for (int r = 0; r < rows; ++r) {
      const double* gy = od->g.data() + static_cast<size_t>(r) * d;
      const double* hr = xhat->data() + static_cast<size_t>(r) * d;
      if (gd->requires_grad) {
        gd->ensure_grad();
        for (int j = 0; j < d; ++j) gd->g[j] += gy[j] * hr[j];
      }
      if (bd->requires_grad) {
        bd->ensure_grad();
        for (int j = 0; j < d; ++j) bd->g[j] += gy[j];
      }
      if (xd->requires_grad) {
        xd->ensure_grad();
        double m1 = 0.0, m2 = 0.0;
        for (int j = 0; j < d; ++j) {
          double dh = gy[j] * gd->v[j];
          m1 += dh;
          m2 += dh * hr[j];
        }
        m1 /= d;
        m2 /= d;
        double is = (*inv_sigma)[r];
        double* gx = xd->g.data() + static_cast<size_t>(r) * d;
        for (int j = 0; j < d; ++j)
          gx[j] += is * (gy[j] * gd->v[j] - m1 - hr[j] * m2);
      }
    }
  });
  return out;
}

Tensor Graph::unary(const Tensor& a, const char* tag,
                    const std::function<double(double)>& f,
                    const std::function<double(double, double)>& df) {
  (void)tag;
  Tensor out = make(a.shape(), a.requires_grad());
  for (int i = 0; i < a.numel(); ++i) out.raw()->v[i] = f(a.values()[i]);
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, df] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (size_t i = 0; i < od->g.size(); ++i)
      ad->g[i] += od->g[i] * df(ad->v[i], od->v[i]);
  });
  return out;
}

Tensor Graph::tanh(const Tensor& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Tensor Graph::gelu(const Tensor& a) {
  constexpr double inv_sqrt2 = 0.7071067811865476;
  constexpr double inv_sqrt2pi = 0.3989422804014327;
  return unary(
      a, "gelu",
      [=](double x) { return 0.5 * x * (1.0 + std::erf(x * inv_sqrt2)); },
      [=](double x, double) {
        return 0.5 * (1.0 + std::erf(x * inv_sqrt2)) +
               x * inv_sqrt2pi * std::exp(-0.5 * x * x);
      });
}

Tensor Graph::relu(const Tensor& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor Graph::exp(const Tensor& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); },
               [](double, double y) { return y; });
}

Tensor Graph::log(const Tensor& a) {
  for (double x : a.values())
    if (!(x > 0.0))
      throw NumericError("log: nonpositive input " + std::to_string(x));
  return unary(a, "log", [](double x) { return std::log(x); },
               [](double x, double) { return 1.0 / x; });
}

Tensor Graph::sqrt(const Tensor& a) {
  for (double x : a.values())
    if (x < 0.0)
      throw NumericError("sqrt: negative input " + std::to_string(x));
  return unary(a, "sqrt", [](double x) { return std::sqrt(x); },
               [](double, double y) { return 0.5 / y; });
}

Tensor Graph::clamp(const Tensor& a, double lo, double hi) {
  return unary(a, "clamp",
               [=](double x) { return std::min(std::max(x, lo), hi); },
               [=](double x, double) { return (x > lo && x < hi) ? 1.0 : 0.0; });
}

Tensor Graph::sum_all(const Tensor& a) {
  Tensor out = make({1}, a.requires_grad());
  out.raw()->v[0] = std::accumulate(a.values().begin(), a.values().end(), 0.0);
  auto ad = a.data(), od = out.data();
  record(out, [ad, od] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (size_t i = 0; i < ad->g.size(); ++i) ad->g[i] += od->g[0];
  });
  return out;
}

Tensor Graph::mean_all(const Tensor& a) {
  return scale(sum_all(a), 1.0 / a.numel());
}

Tensor Graph::sum_axis1(const Tensor& a) {
  const Shape& s = a.shape();
  if (s.size() != 3) throw NumericError("sum_axis1 expects rank 3, got " + shape_str(s));
  int B = s[0], n = s[1], d = s[2];
  Tensor out = make({B, d}, a.requires_grad());
  for (int b = 0; b < B; ++b)
    for (int t = 0; t < n; ++t) {
      const double* src = a.values().data() + (static_cast<size_t>(b) * n + t) * d;
      double* dst = out.raw()->v.data() + static_cast<size_t>(b) * d;
      for (int j = 0; j < d; ++j) dst[j] += src[j];
    }
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, B, n, d] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < n; ++t) {
        double* dst = ad->g.data() + (static_cast<size_t>(b) * n + t) * d;
        const double* src = od->g.data() + static_cast<size_t>(b) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
  });
  return out;
}

Tensor Graph::dot(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "dot");
  Tensor out = make({1}, a.requires_grad() || b.requires_grad());
  double s = 0.0;
  for (int i = 0; i < a.numel(); ++i) s += a.values()[i] * b.values()[i];
  out.raw()->v[0] = s;
  auto ad = a.data(), bd = b.data(), od = out.data();
  record(out, [ad, bd, od] {
    double g = od->g[0];
    if (ad->requires_grad) {
      ad->ensure_grad();
      for (size_t i = 0; i < ad->g.size(); ++i) ad->g[i] += g * bd->v[i];
    }
    if (bd->requires_grad) {
      bd->ensure_grad();
      for (size_t i = 0; i < bd->g.size(); ++i) bd->g[i] += g * ad->v[i];
    }
  });
  return out;
}

Tensor Graph::l2_norm(const Tensor& a) {
  Tensor out = make({1}, a.requires_grad());
  double s = kNormFloor;
  for (double x : a.values()) s += x * x;
  out.raw()->v[0] = std::sqrt(s);
  auto ad = a.data(), od = out.data();
  record(out, [ad, od] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    double g = od->g[0] / od->v[0];
    for (size_t i = 0; i < ad->g.size(); ++i) ad->g[i] += g * ad->v[i];
  });
  return out;
}

Tensor Graph::frobenius_norm(const Tensor& a) { return l2_norm(a); }

Tensor Graph::cosine_sim(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "cosine_sim");
  double na = 0.0, nb = 0.0;
  for (double x : a.values()) na += x * x;
  for (double x : b.values()) nb += x * x;
  if (na == 0.0 || nb == 0.0)
    throw NumericError("cosine_sim: zero-norm input");
  return div(dot(a, b), mul(l2_norm(a), l2_norm(b)));
}

Tensor Graph::slice(const Tensor& a, int axis, int start, int len) {
  const Shape& s = a.shape();
  if (axis < 0 || axis >= static_cast<int>(s.size()) || start < 0 ||
      start + len > s[axis] || len <= 0)
    throw NumericError("slice: bad range on " + shape_str(s));
  Shape os = s;
  os[axis] = len;
  Tensor out = make(os, a.requires_grad());
  auto st = row_strides(s);
  int outer = 1;
  for (int i = 0; i < axis; ++i) outer *= s[i];
  int inner = st[axis];
  int in_axis_stride = s[axis] * inner;
  int out_axis_stride = len * inner;
  for (int o = 0; o < outer; ++o) {
    const double* src =
        a.values().data() + static_cast<size_t>(o) * in_axis_stride +
        static_cast<size_t>(start) * inner;
    double* dst = out.raw()->v.data() + static_cast<size_t>(o) * out_axis_stride;
    std::copy(src, src + static_cast<size_t>(len) * inner, dst);
  }
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, outer, inner, in_axis_stride, out_axis_stride, start, len] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (int o = 0; o < outer; ++o) {
      double* dst = ad->g.data() + static_cast<size_t>(o) * in_axis_stride +
                    static_cast<size_t>(start) * inner;
      const double* src = od->g.data() + static_cast<size_t>(o) * out_axis_stride;
      for (size_t i = 0; i < static_cast<size_t>(len) * inner; ++i) dst[i] += src[i];
    }
  });
  return out;
}

Tensor Graph::concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw NumericError("concat: no parts");
  Shape os = parts[0].shape();
  bool rg = false;
  int total = 0;
  for (const Tensor& p : parts) {
    Shape ps = p.shape();
    if (ps.size() != os.size()) throw NumericError("concat: rank mismatch");
    for (size_t i = 0; i < ps.size(); ++i)
      if (static_cast<int>(i) != axis && ps[i] != os[i])
        throw NumericError("concat: extent mismatch off-axis");
    total += ps[axis];
    rg = rg || p.requires_grad();
  }
  os[axis] = total;
  Tensor out = make(os, rg);
  auto st = row_strides(os);
  int outer = 1;
  for (int i = 0; i < axis; ++i) outer *= os[i];
  int inner = st[axis];
  int out_axis_stride = total * inner;
  int offset = 0;
  struct Piece { std::shared_ptr<TensorData> d; int offset; int len; };
  auto pieces = std::make_shared<std::vector<Piece>>();
  for (const Tensor& p : parts) {
    int len = p.shape()[axis];
    for (int o = 0; o < outer; ++o) {
      const double* src =
          p.values().data() + static_cast<size_t>(o) * len * inner;
      double* dst = out.raw()->v.data() +
                    static_cast<size_t>(o) * out_axis_stride +
                    static_cast<size_t>(offset) * inner;
      std::copy(src, src + static_cast<size_t>(len) * inner, dst);
    }
    pieces->push_back({p.data(), offset, len});
    offset += len;
  }
  auto od = out.data();
  record(out, [od, pieces, outer, inner, out_axis_stride] {
    for (auto& pc : *pieces) {
      if (!pc.d->requires_grad) continue;
      pc.d->ensure_grad();
      for (int o = 0; o < outer; ++o) {
        const double* src = od->g.data() +
                            static_cast<size_t>(o) * out_axis_stride +
                            static_cast<size_t>(pc.offset) * inner;
        double* dst = pc.d->g.data() + static_cast<size_t>(o) * pc.len * inner;
        for (size_t i = 0; i < static_cast<size_t>(pc.len) * inner; ++i)
          dst[i] += src[i];
      }
    }
  });
  return out;
}

Tensor Graph::reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw NumericError("reshape: " + shape_str(a.shape()) + " -> " +
                       shape_str(shape) + " changes element count");
  Tensor out = make(std::move(shape), a.requires_grad());
  out.raw()->v = a.values();
  auto ad = a.data(), od = out.data();
  record(out, [ad, od] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    for (size_t i = 0; i < ad->g.size(); ++i) ad->g[i] += od->g[i];
  });
  return out;
}

Tensor Graph::stack_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw NumericError("stack_scalars: empty");
  bool rg = false;
  for (const Tensor& x : xs) {
    if (x.numel() != 1) throw NumericError("stack_scalars: non-scalar input");
    rg = rg || x.requires_grad();
  }
  Tensor out = make({static_cast<int>(xs.size())}, rg);
  auto parts = std::make_shared<std::vector<std::shared_ptr<TensorData>>>();
  for (size_t i = 0; i < xs.size(); ++i) {
    out.raw()->v[i] = xs[i].values()[0];
    parts->push_back(xs[i].data());
  }
  auto od = out.data();
  record(out, [od, parts] {
    for (size_t i = 0; i < parts->size(); ++i) {
      auto& p = (*parts)[i];
      if (!p->requires_grad) continue;
      p->ensure_grad();
      p->g[0] += od->g[i];
    }
  });
  return out;
}

Tensor Graph::logsumexp(const Tensor& a) {
  if (a.shape().size() != 1) throw NumericError("logsumexp expects rank 1");
  int n = a.numel();
  double mx = a.values()[0];
  for (double x : a.values()) mx = std::max(mx, x);
  double z = 0.0;
  for (double x : a.values()) z += std::exp(x - mx);
  Tensor out = make({1}, a.requires_grad());
  out.raw()->v[0] = mx + std::log(z);
  auto ad = a.data(), od = out.data();
  record(out, [ad, od, n] {
    if (!ad->requires_grad) return;
    ad->ensure_grad();
    double g = od->g[0];
    for (int i = 0; i < n; ++i)
      ad->g[i] += g * std::exp(ad->v[i] - od->v[0]);
  });
  return out;
}

Tensor Graph::add_bias(const Tensor& x, const Tensor& b) {
  int d = x.shape().back();
  if (b.numel() != d)
    throw NumericError("add_bias: bias extent " + std::to_string(b.numel()) +
                       " != " + std::to_string(d));
  int rows = x.numel() / d;
  Tensor out = make(x.shape(), x.requires_grad() || b.requires_grad());
  for (int r = 0; r < rows; ++r)
    for (int j = 0; j < d; ++j)
      out.raw()->v[static_cast<size_t>(r) * d + j] =
          x.values()[static_cast<size_t>(r) * d + j] + b.values()[j];
  auto xd = x.data(), bd = b.data(), od = out.data();
  record(out, [xd, bd, od, rows, d] {
    if (xd->requires_grad) {
      xd->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) xd->g[i] += od->g[i];
    }
    if (bd->requires_grad) {
      bd->ensure_grad();
      for (int r = 0; r < rows; ++r)
        for (int j = 0; j < d; ++j)
          bd->g[j] += od->g[static_cast<size_t>(r) * d + j];
    }
  });
  return out;
}

Tensor Graph::add_broadcast0(const Tensor& x, const Tensor& p) {
  const Shape& s = x.shape();
  if (s.size() != 3 || p.shape().size() != 2 || p.shape()[0] != s[1] ||
      p.shape()[1] != s[2])
    throw NumericError("add_broadcast0: " + shape_str(s) + " vs " +
                       shape_str(p.shape()));
  int B = s[0], nd = s[1] * s[2];
  Tensor out = make(s, x.requires_grad() || p.requires_grad());
  for (int b = 0; b < B; ++b)
    for (int i = 0; i < nd; ++i)
      out.raw()->v[static_cast<size_t>(b) * nd + i] =
          x.values()[static_cast<size_t>(b) * nd + i] + p.values()[i];
  auto xd = x.data(), pd = p.data(), od = out.data();
  record(out, [xd, pd, od, B, nd] {
    if (xd->requires_grad) {
      xd->ensure_grad();
      for (size_t i = 0; i < od->g.size(); ++i) xd->g[i] += od->g[i];
    }
    if (pd->requires_grad) {
      pd->ensure_grad();
      for (int b = 0; b < B; ++b)
        for (int i = 0; i < nd; ++i)
          pd->g[i] += od->g[static_cast<size_t>(b) * nd + i];
    }
  });
  return out;
}

Tensor Graph::gather_rows(const Tensor& table,
                          const std::vector<std::vector<int>>& ids) {
  if (table.shape().size() != 2) throw NumericError("gather_rows: table rank != 2");
  int V = table.shape()[0], d = table.shape()[1];
  int B = static_cast<int>(ids.size());
  int n = B > 0 ? static_cast<int>(ids[0].size()) : 0;
  Tensor out = make({B, n, d}, table.requires_grad());
  for (int b = 0; b < B; ++b) {
    if (static_cast<int>(ids[b].size()) != n)
      throw DataError("gather_rows: ragged id rows");
    for (int t = 0; t < n; ++t) {
      int id = ids[b][t];
      if (id < 0 || id >= V)
        throw DataError("token id " + std::to_string(id) +
                        " out of range for vocab of " + std::to_string(V));
      std::copy(table.values().begin() + static_cast<size_t>(id) * d,
                table.values().begin() + static_cast<size_t>(id + 1) * d,
                out.raw()->v.begin() + (static_cast<size_t>(b) * n + t) * d);
    }
  }
  auto td = table.data(), od = out.data();
  auto idcopy = std::make_shared<std::vector<std::vector<int>>>(ids);
  record(out, [td, od, idcopy, B, n, d] {
    if (!td->requires_grad) return;
    td->ensure_grad();
    for (int b = 0; b < B; ++b)
      for (int t = 0; t < n; ++t) {
        int id = (*idcopy)[b][t];
        const double* src = od->g.data() + (static_cast<size_t>(b) * n + t) * d;
        double* dst = td->g.data() + static_cast<size_t>(id) * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
  });
  return out;
}

void Graph::backward(const Tensor& root) {
  if (root.numel() != 1)
    throw NumericError("backward: root must be scalar, got " +
                       shape_str(root.shape()));
  for (auto& n : nodes_) {
    n.out->ensure_grad();
    n.out->zero_grad();
  }
  root.raw()->ensure_grad();
  root.raw()->g[0] = 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
    if (it->out->requires_grad) it->backward();
}

double check_gradients(const std::function<Tensor(Graph&, const Tensor&)>& f,
                       const Tensor& x, double step) {
  Tensor p = Tensor::param(x.shape(), x.values());
  Graph g;
  Tensor y = f(g, p);
  if (y.numel() != 1) throw NumericError("check_gradients: f must be scalar-valued");
  g.backward(y);
  std::vector<double> analytic = p.grad();

  Tensor q = Tensor::constant(x.shape(), x.values());
  double max_err = 0.0;
  for (int i = 0; i < q.numel(); ++i) {
    double keep = q.values()[i];
    q.values()[i] = keep + step;
    Graph g1;
    double fp = f(g1, q).item();
    q.values()[i] = keep - step;
    Graph g2;
    double fm = f(g2, q).item();
    q.values()[i] = keep;
    double numeric = (fp - fm) / (2.0 * step);
    double err = std::fabs(analytic[i] - numeric) /
                 (std::fabs(analytic[i]) + std::fabs(numeric) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace jtcse
