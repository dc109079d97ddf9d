#pragma once

// Dense row-major float64 tensors with eager, tape-based reverse-mode
// differentiation. Each op records its parents and a local gradient rule on
// the result node; `backward` walks the recorded graph in reverse topological
// order. A graph and its tensors belong to one thread; separate graphs can be
// built and differentiated concurrently.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace hypkt::diff {

using Shape = std::vector<std::size_t>;
using Index = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {
struct Node;
}

class Tensor {
 public:
  Tensor() = default;

  static Tensor from(Shape shape, std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);

  bool defined() const noexcept { return node_ != nullptr; }
  explicit operator bool() const noexcept { return defined(); }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t extent(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::vector<double> to_vector() const;
  double item() const;
  double at(std::size_t i) const;
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  bool is_leaf() const;
  bool has_grad() const;
  // Empty span until a backward pass has reached this tensor.
  std::span<const double> grad() const;
  void zero_grad();

  // Leaf tensors only. Used by optimizers and finite-difference checks
  // between graph constructions; never while a graph built on it is live.
  std::span<double> mutable_data();

  // Same values, no history, no gradient tracking.
  Tensor detach() const;
  const char* op_name() const;

  // Identity of the underlying node (for parameter bookkeeping).
  const void* id() const noexcept { return node_.get(); }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;

  friend struct Access;
};

// ---- elementwise ---------------------------------------------------------

enum class Binary { add, sub, mul, div };
enum class Unary { neg, exp, log, sigmoid, tanh, cosh, sinh, arccosh, sqrt, square, softplus };

// Binary ops broadcast by trailing-axis alignment; an extent of 1 stretches.
Tensor elementwise(Binary kind, const Tensor& a, const Tensor& b);
Tensor elementwise(Unary kind, const Tensor& a);
Shape broadcast_shape(const Shape& a, const Shape& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor cosh(const Tensor& a);
Tensor sinh(const Tensor& a);
Tensor arccosh(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor square(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double slope);

// y = x where x >= threshold, otherwise `value`; gradient flows only through
// the unreplaced entries.
Tensor threshold(const Tensor& a, double threshold, double value);
// Gradient flows where lo <= x <= hi.
Tensor clamp(const Tensor& a, double lo, double hi);

// Smooth user-supplied scalar map with its derivative.
Tensor map(const Tensor& a, const std::function<double(double)>& f,
           const std::function<double(double)>& df, const char* name);

Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, const Tensor& b);
Tensor operator/(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a);
Tensor operator+(const Tensor& a, double b);
Tensor operator-(const Tensor& a, double b);
Tensor operator*(const Tensor& a, double b);
Tensor operator/(const Tensor& a, double b);
Tensor operator+(double a, const Tensor& b);
Tensor operator-(double a, const Tensor& b);
Tensor operator*(double a, const Tensor& b);
Tensor operator/(double a, const Tensor& b);

// ---- structural ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length);
Tensor reshape(const Tensor& a, Shape shape);

Tensor sum(const Tensor& a);
// Reduces `axis` to extent 1 (kept for broadcasting).
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a);

// Row gather/scatter over the leading axis of a rank-2 tensor.
Tensor gather_rows(const Tensor& a, const Index& rows);
Tensor scatter_add_rows(const Tensor& a, const Index& rows, std::size_t out_rows);
// Softmax of a column of scores within groups given by `segments`.
Tensor segment_softmax(const Tensor& scores, const Index& segments, std::size_t num_segments);

// ---- differentiation -----------------------------------------------------

// Nodes in topological order (parents before children) reachable from `root`
// through tensors that require gradients.
class ComputationTape {
 public:
  explicit ComputationTape(const Tensor& root);
  std::size_t size() const { return nodes_.size(); }
  // Position of a tensor on the tape, or npos.
  std::size_t position(const Tensor& t) const;
  std::vector<std::size_t> parent_positions(std::size_t pos) const;
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

 private:
  std::vector<detail::Node*> nodes_;
  friend void backward(const Tensor&, bool);
};

// Populates grad on every requires_grad leaf reachable from the scalar `root`
// (accumulating into existing leaf grads). Unless `retain_graph`, the recorded
// history is released afterwards and a second call raises.
void backward(const Tensor& root, bool retain_graph = false);

// Max over components of |analytic - central difference| / (|analytic| + eps).
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps = 1e-5);

// Same measure over tensors captured by `f`, perturbed in place. `fraction`
// below 1 checks a seeded random subset of components (at least one per tensor).
double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params,
                  double eps = 1e-5, double fraction = 1.0, std::uint64_t seed = 0);

}  // namespace hypkt::diff
