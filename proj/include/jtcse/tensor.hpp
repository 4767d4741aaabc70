#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "jtcse/error.hpp"

namespace jtcse {

using Shape = std::vector<int>;

int shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense float64 grid plus an accumulated-gradient slot.
struct TensorData {
  Shape shape;
  std::vector<double> v;
  std::vector<double> g;  // same length as v once touched
  bool requires_grad = false;
  bool is_param = false;

  void ensure_grad() {
    if (g.size() != v.size()) g.assign(v.size(), 0.0);
  }
  void zero_grad() { g.assign(v.size(), 0.0); }
};

class Tensor {
public:
  Tensor() = default;
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}

  static Tensor constant(Shape shape, std::vector<double> values);
  static Tensor scalar(double value);
  static Tensor zeros(Shape shape);
  static Tensor param(Shape shape, std::vector<double> values);

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  int numel() const { return static_cast<int>(d_->v.size()); }
  const std::vector<double>& values() const { return d_->v; }
  std::vector<double>& values() { return d_->v; }
  const std::vector<double>& grad() const { return d_->g; }
  bool requires_grad() const { return d_->requires_grad; }
  double item() const;

  std::shared_ptr<TensorData> data() const { return d_; }
  TensorData* raw() const { return d_.get(); }

private:
  std::shared_ptr<TensorData> d_;
};

// Define-by-run tape. Nodes are appended in construction order, which is a
// topological order by construction; backward walks it in reverse.
class Graph {
public:
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);  // hadamard, same shape
  Tensor div(const Tensor& a, const Tensor& b);  // elementwise, same shape
  Tensor scale(const Tensor& a, double c);

  // [m,k]x[k,n]; [B,m,k]x[B,k,n]; [B,m,k]x[k,n]
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor transpose_last2(const Tensor& a);

  Tensor softmax_rows(const Tensor& a);  // softmax over the last extent
  Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                    double eps);

  Tensor tanh(const Tensor& a);
  Tensor gelu(const Tensor& a);
  Tensor relu(const Tensor& a);
  Tensor exp(const Tensor& a);
  Tensor log(const Tensor& a);
  Tensor sqrt(const Tensor& a);
  Tensor clamp(const Tensor& a, double lo, double hi);

  Tensor sum_all(const Tensor& a);
  Tensor mean_all(const Tensor& a);
  Tensor sum_axis1(const Tensor& a);  // [B,n,d] -> [B,d]
  Tensor dot(const Tensor& a, const Tensor& b);
  Tensor l2_norm(const Tensor& a);         // sqrt(sum x^2 + eps_norm)
  Tensor frobenius_norm(const Tensor& a);  // same quantity, matrix reading
  Tensor cosine_sim(const Tensor& a, const Tensor& b);

  Tensor slice(const Tensor& a, int axis, int start, int len);
  Tensor concat(const std::vector<Tensor>& parts, int axis);
  Tensor reshape(const Tensor& a, Shape shape);
  Tensor stack_scalars(const std::vector<Tensor>& xs);
  Tensor logsumexp(const Tensor& a);  // 1-D -> scalar

  Tensor add_bias(const Tensor& x, const Tensor& b);        // [...,d] + [d]
  Tensor add_broadcast0(const Tensor& x, const Tensor& p);  // [B,n,d] + [n,d]
  Tensor gather_rows(const Tensor& table,
                     const std::vector<std::vector<int>>& ids);  // -> [B,n,d]

  // Seeds root with 1 and accumulates into parameter grads. Intermediate
  // grads are reset first so a second call doubles parameter grads exactly.
  void backward(const Tensor& root);

  size_t size() const { return nodes_.size(); }

private:
  struct Node {
    std::shared_ptr<TensorData> out;
    std::function<void()> backward;
  };
  std::vector<Node> nodes_;

  Tensor make(Shape shape, bool rg);
  void record(const Tensor& out, std::function<void()> fn);
  Tensor unary(const Tensor& a, const char* tag,
               const std::function<double(double)>& f,
               const std::function<double(double, double)>& df);
};

// Norm floor: keeps backward finite when the norm argument is ~0.
inline constexpr double kNormFloor = 1e-12;

// Max over components of |analytic - central| / (|analytic| + |central| + 1e-12),
// with central differences of f at step `step`.
double check_gradients(const std::function<Tensor(Graph&, const Tensor&)>& f,
                       const Tensor& x, double step);

}  // namespace jtcse
