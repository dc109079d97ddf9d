#include "hypkt/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>

#include "hypkt/error.hpp"

namespace hypkt::diff {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct Access {
  static const NodePtr& node(const Tensor& t) {
    if (!t.node_) throw Error(Errc::invalid_argument, "use of an undefined tensor");
    return t.node_;
  }
  static Tensor wrap(NodePtr n) { return Tensor(std::move(n)); }
};

namespace {

std::vector<double>& grad_buffer(Node& n) {
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad;
}

Tensor make_leaf(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t e : shape) {
    if (e == 0) throw Error(Errc::shape_mismatch, "tensor extents must be positive, got " + shape_str(shape));
  }
  if (numel_of(shape) != values.size()) {
    throw Error(Errc::shape_mismatch, "shape " + shape_str(shape) + " does not match " +
                                          std::to_string(values.size()) + " values");
  }
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Access::wrap(std::move(n));
}

using BackwardFn = std::function<void(Node&)>;

Tensor make_op(const char* op, Shape shape, std::vector<double> value, std::initializer_list<const Tensor*> inputs,
               BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  n->op = op;
  bool rg = false;
  for (const Tensor* t : inputs) rg = rg || Access::node(*t)->requires_grad;
  if (rg) {
    n->requires_grad = true;
    for (const Tensor* t : inputs) n->parents.push_back(Access::node(*t));
    n->backward_fn = std::move(fn);
  }
  return Access::wrap(std::move(n));
}

Tensor make_op_list(const char* op, Shape shape, std::vector<double> value, const std::vector<Tensor>& inputs,
                    BackwardFn fn) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  n->leaf = false;
  n->op = op;
  bool rg = false;
  for (const Tensor& t : inputs) rg = rg || Access::node(t)->requires_grad;
  if (rg) {
    n->requires_grad = true;
    for (const Tensor& t : inputs) n->parents.push_back(Access::node(t));
    n->backward_fn = std::move(fn);
  }
  return Access::wrap(std::move(n));
}

// Maps each flat output index to the flat indices of both broadcast operands.
struct BroadcastPlan {
  enum class Kind { same, a_scalar, b_scalar, general } kind = Kind::same;
  Shape out;
  std::vector<std::uint32_t> ia, ib;

  std::size_t a_index(std::size_t o) const {
    switch (kind) {
      case Kind::same: return o;
      case Kind::a_scalar: return 0;
      case Kind::b_scalar: return o;
      case Kind::general: return ia[o];
    }
    return 0;
  }
  std::size_t b_index(std::size_t o) const {
    switch (kind) {
      case Kind::same: return o;
      case Kind::a_scalar: return o;
      case Kind::b_scalar: return 0;
      case Kind::general: return ib[o];
    }
    return 0;
  }
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  plan.out = broadcast_shape(a, b);
  const std::size_t na = numel_of(a), nb = numel_of(b), no = numel_of(plan.out);
  if (a == b) {
    plan.kind = BroadcastPlan::Kind::same;
    return plan;
  }
  if (na == 1 && nb == no) {
    plan.kind = BroadcastPlan::Kind::a_scalar;
    return plan;
  }
  if (nb == 1 && na == no) {
    plan.kind = BroadcastPlan::Kind::b_scalar;
    return plan;
  }
  plan.kind = BroadcastPlan::Kind::general;
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> sa(rank, 0), sb(rank, 0);
  auto fill_strides = [rank](const Shape& s, std::vector<std::size_t>& strides) {
    std::size_t stride = 1;
    for (std::size_t k = 0; k < s.size(); ++k) {
      const std::size_t axis = s.size() - 1 - k;
      const std::size_t out_axis = rank - 1 - k;
      strides[out_axis] = s[axis] == 1 ? 0 : stride;
      stride *= s[axis];
    }
  };
  fill_strides(a, sa);
  fill_strides(b, sb);
  plan.ia.resize(no);
  plan.ib.resize(no);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t o = 0; o < no; ++o) {
    std::size_t oa = 0, ob = 0;
    for (std::size_t k = 0; k < rank; ++k) {
      oa += idx[k] * sa[k];
      ob += idx[k] * sb[k];
    }
    plan.ia[o] = static_cast<std::uint32_t>(oa);
    plan.ib[o] = static_cast<std::uint32_t>(ob);
    for (std::size_t k = rank; k-- > 0;) {
      if (++idx[k] < plan.out[k]) break;
      idx[k] = 0;
    }
  }
  return plan;
}

const char* binary_name(Binary kind) {
  switch (kind) {
    case Binary::add: return "add";
    case Binary::sub: return "sub";
    case Binary::mul: return "mul";
    case Binary::div: return "div";
  }
  return "binary";
}

const char* unary_name(Unary kind) {
  switch (kind) {
    case Unary::neg: return "neg";
    case Unary::exp: return "exp";
    case Unary::log: return "log";
    case Unary::sigmoid: return "sigmoid";
    case Unary::tanh: return "tanh";
    case Unary::cosh: return "cosh";
    case Unary::sinh: return "sinh";
    case Unary::arccosh: return "arccosh";
    case Unary::sqrt: return "sqrt";
    case Unary::square: return "square";
    case Unary::softplus: return "softplus";
  }
  return "unary";
}

double stable_sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double stable_softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

std::size_t require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": expected a rank-2 tensor, got " + shape_str(t.shape()));
  }
  return t.extent(0);
}

}  // namespace

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

// ---- Tensor --------------------------------------------------------------

Tensor Tensor::from(Shape shape, std::vector<double> values, bool requires_grad) {
  return make_leaf(std::move(shape), std::move(values), requires_grad);
}
Tensor Tensor::scalar(double value, bool requires_grad) { return make_leaf({1}, {value}, requires_grad); }
Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }
Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = numel_of(shape);
  return make_leaf(std::move(shape), std::vector<double>(n, value), requires_grad);
}
Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return make_leaf({1, n}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const { return Access::node(*this)->shape; }
std::size_t Tensor::extent(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) throw Error(Errc::shape_mismatch, "axis out of range for " + shape_str(s));
  return s[axis];
}
std::size_t Tensor::numel() const { return Access::node(*this)->value.size(); }
std::span<const double> Tensor::data() const { return Access::node(*this)->value; }
std::vector<double> Tensor::to_vector() const { return Access::node(*this)->value; }
double Tensor::item() const {
  if (numel() != 1) throw Error(Errc::shape_mismatch, "item() on non-scalar " + shape_str(shape()));
  return data()[0];
}
double Tensor::at(std::size_t i) const { return data()[i]; }
double Tensor::at(std::size_t i, std::size_t j) const { return data()[i * extent(1) + j]; }
bool Tensor::requires_grad() const { return Access::node(*this)->requires_grad; }
bool Tensor::is_leaf() const { return Access::node(*this)->leaf; }
bool Tensor::has_grad() const { return !Access::node(*this)->grad.empty(); }
std::span<const double> Tensor::grad() const { return Access::node(*this)->grad; }
void Tensor::zero_grad() { Access::node(*this)->grad.clear(); }
std::span<double> Tensor::mutable_data() {
  const auto& n = Access::node(*this);
  if (!n->leaf) throw Error(Errc::invalid_argument, "mutable_data() is only available on leaf tensors");
  return n->value;
}
Tensor Tensor::detach() const { return make_leaf(shape(), to_vector(), false); }
const char* Tensor::op_name() const { return Access::node(*this)->op; }

// ---- elementwise ---------------------------------------------------------

Shape broadcast_shape(const Shape& a, const Shape& b) {
  const std::size_t rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t k = 0; k < rank; ++k) {
    const std::size_t ea = k < a.size() ? a[a.size() - 1 - k] : 1;
    const std::size_t eb = k < b.size() ? b[b.size() - 1 - k] : 1;
    if (ea != eb && ea != 1 && eb != 1) {
      throw Error(Errc::shape_mismatch, "cannot broadcast " + shape_str(a) + " with " + shape_str(b));
    }
    out[rank - 1 - k] = std::max(ea, eb);
  }
  return out;
}

Tensor elementwise(Binary kind, const Tensor& a, const Tensor& b) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  const auto av = a.data();
  const auto bv = b.data();
  const std::size_t n = numel_of(plan->out);
  std::vector<double> out(n);
  for (std::size_t o = 0; o < n; ++o) {
    const double x = av[plan->a_index(o)];
    const double y = bv[plan->b_index(o)];
    switch (kind) {
      case Binary::add: out[o] = x + y; break;
      case Binary::sub: out[o] = x - y; break;
      case Binary::mul: out[o] = x * y; break;
      case Binary::div:
        if (y == 0.0) throw Error(Errc::domain_error, "div: division by zero");
        out[o] = x / y;
        break;
    }
  }
  return make_op(binary_name(kind), plan->out, std::move(out), {&a, &b}, [kind, plan](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    const std::size_t count = g.size();
    if (pa.requires_grad) {
      auto& ga = grad_buffer(pa);
      for (std::size_t o = 0; o < count; ++o) {
        const std::size_t i = plan->a_index(o);
        switch (kind) {
          case Binary::add:
          case Binary::sub: ga[i] += g[o]; break;
          case Binary::mul: ga[i] += g[o] * pb.value[plan->b_index(o)]; break;
          case Binary::div: ga[i] += g[o] / pb.value[plan->b_index(o)]; break;
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = grad_buffer(pb);
      for (std::size_t o = 0; o < count; ++o) {
        const std::size_t j = plan->b_index(o);
        switch (kind) {
          case Binary::add: gb[j] += g[o]; break;
          case Binary::sub: gb[j] -= g[o]; break;
          case Binary::mul: gb[j] += g[o] * pa.value[plan->a_index(o)]; break;
          case Binary::div: {
            const double y = pb.value[j];
            gb[j] -= g[o] * pa.value[plan->a_index(o)] / (y * y);
            break;
          }
        }
      }
    }
  });
}

Tensor elementwise(Unary kind, const Tensor& a) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  const char* name = unary_name(kind);
  for (std::size_t i = 0; i < av.size(); ++i) {
    const double x = av[i];
    double y = 0.0;
    switch (kind) {
      case Unary::neg: y = -x; break;
      case Unary::exp: y = std::exp(x); break;
      case Unary::log:
        if (!(x > 0.0)) throw Error(Errc::domain_error, "log: input must be > 0, got " + std::to_string(x));
        y = std::log(x);
        break;
      case Unary::sigmoid: y = stable_sigmoid(x); break;
      case Unary::tanh: y = std::tanh(x); break;
      case Unary::cosh: y = std::cosh(x); break;
      case Unary::sinh: y = std::sinh(x); break;
      case Unary::arccosh:
        if (!(x >= 1.0)) throw Error(Errc::domain_error, "arccosh: input must be >= 1, got " + std::to_string(x));
        y = std::acosh(x);
        break;
      case Unary::sqrt:
        if (!(x >= 0.0)) throw Error(Errc::domain_error, "sqrt: input must be >= 0, got " + std::to_string(x));
        y = std::sqrt(x);
        break;
      case Unary::square: y = x * x; break;
      case Unary::softplus: y = stable_softplus(x); break;
    }
    if (!std::isfinite(y)) throw Error(Errc::domain_error, std::string(name) + ": non-finite result");
    out[i] = y;
  }
  return make_op(name, a.shape(), std::move(out), {&a}, [kind](Node& self) {
    Node& p = *self.parents[0];
    if (!p.requires_grad) return;
    auto& gp = grad_buffer(p);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      const double x = p.value[i];
      const double y = self.value[i];
      double d = 0.0;
      switch (kind) {
        case Unary::neg: d = -1.0; break;
        case Unary::exp: d = y; break;
        case Unary::log: d = 1.0 / x; break;
        case Unary::sigmoid: d = y * (1.0 - y); break;
        case Unary::tanh: d = 1.0 - y * y; break;
        case Unary::cosh: d = std::sinh(x); break;
        case Unary::sinh: d = std::cosh(x); break;
        // Subgradient 0 at the boundary x == 1.
        case Unary::arccosh: d = x > 1.0 ? 1.0 / std::sqrt((x - 1.0) * (x + 1.0)) : 0.0; break;
        case Unary::sqrt: d = 0.5 / y; break;
        case Unary::square: d = 2.0 * x; break;
        case Unary::softplus: d = stable_sigmoid(x); break;
      }
      gp[i] += self.grad[i] * d;
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(Binary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(Binary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(Binary::mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return elementwise(Binary::div, a, b); }
Tensor neg(const Tensor& a) { return elementwise(Unary::neg, a); }
Tensor exp(const Tensor& a) { return elementwise(Unary::exp, a); }
Tensor log(const Tensor& a) { return elementwise(Unary::log, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(Unary::sigmoid, a); }
Tensor tanh(const Tensor& a) { return elementwise(Unary::tanh, a); }
Tensor cosh(const Tensor& a) { return elementwise(Unary::cosh, a); }
Tensor sinh(const Tensor& a) { return elementwise(Unary::sinh, a); }
Tensor arccosh(const Tensor& a) { return elementwise(Unary::arccosh, a); }
Tensor sqrt(const Tensor& a) { return elementwise(Unary::sqrt, a); }
Tensor square(const Tensor& a) { return elementwise(Unary::square, a); }
Tensor softplus(const Tensor& a) { return elementwise(Unary::softplus, a); }

Tensor leaky_relu(const Tensor& a, double slope) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0 ? av[i] : slope * av[i];
  return make_op("leaky_relu", a.shape(), std::move(out), {&a}, [slope](Node& self) {
    Node& p = *self.parents[0];
    auto& gp = grad_buffer(p);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * (p.value[i] > 0 ? 1.0 : slope);
  });
}

Tensor threshold(const Tensor& a, double th, double value) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = av[i] >= th ? av[i] : value;
  return make_op("threshold", a.shape(), std::move(out), {&a}, [th](Node& self) {
    Node& p = *self.parents[0];
    auto& gp = grad_buffer(p);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      if (p.value[i] >= th) gp[i] += self.grad[i];
    }
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = std::clamp(av[i], lo, hi);
  return make_op("clamp", a.shape(), std::move(out), {&a}, [lo, hi](Node& self) {
    Node& p = *self.parents[0];
    auto& gp = grad_buffer(p);
    for (std::size_t i = 0; i < gp.size(); ++i) {
      if (p.value[i] >= lo && p.value[i] <= hi) gp[i] += self.grad[i];
    }
  });
}

Tensor map(const Tensor& a, const std::function<double(double)>& f, const std::function<double(double)>& df,
           const char* name) {
  const auto av = a.data();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    out[i] = f(av[i]);
    if (!std::isfinite(out[i])) throw Error(Errc::domain_error, std::string(name) + ": non-finite result");
  }
  return make_op(name, a.shape(), std::move(out), {&a}, [df](Node& self) {
    Node& p = *self.parents[0];
    auto& gp = grad_buffer(p);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i] * df(p.value[i]);
  });
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
Tensor operator-(const Tensor& a) { return neg(a); }
Tensor operator+(const Tensor& a, double b) { return add(a, Tensor::scalar(b)); }
Tensor operator-(const Tensor& a, double b) { return sub(a, Tensor::scalar(b)); }
Tensor operator*(const Tensor& a, double b) { return mul(a, Tensor::scalar(b)); }
Tensor operator/(const Tensor& a, double b) { return div(a, Tensor::scalar(b)); }
Tensor operator+(double a, const Tensor& b) { return add(Tensor::scalar(a), b); }
Tensor operator-(double a, const Tensor& b) { return sub(Tensor::scalar(a), b); }
Tensor operator*(double a, const Tensor& b) { return mul(Tensor::scalar(a), b); }
Tensor operator/(double a, const Tensor& b) { return div(Tensor::scalar(a), b); }

// ---- structural ----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t k = a.extent(1);
  const std::size_t n = b.extent(1);
  if (b.extent(0) != k) {
    throw Error(Errc::shape_mismatch,
                "matmul: inner extents differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = av[i * k + p];
      if (x == 0.0) continue;
      const double* brow = bv.data() + p * n;
      double* orow = out.data() + i * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += x * brow[j];
    }
  }
  return make_op("matmul", {m, n}, std::move(out), {&a, &b}, [m, k, n](Node& self) {
    Node& pa = *self.parents[0];
    Node& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = grad_buffer(pa);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * pb.value[p * n + j];
          ga[i * k + p] += acc;
        }
      }
    }
    if (pb.requires_grad) {
      auto& gb = grad_buffer(pb);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
          const double x = pa.value[i * k + p];
          if (x == 0.0) continue;
          for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
        }
      }
    }
  });
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = require_rank2(a, "transpose");
  const std::size_t n = a.extent(1);
  const auto av = a.data();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = av[i * n + j];
  return make_op("transpose", {n, m}, std::move(out), {&a}, [m, n](Node& self) {
    auto& gp = grad_buffer(*self.parents[0]);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) gp[i * n + j] += self.grad[j * m + i];
  });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(Errc::invalid_argument, "concat: empty list of tensors");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) throw Error(Errc::shape_mismatch, "concat: axis out of range for " + shape_str(first));
  std::vector<std::size_t> widths;
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size();
    for (std::size_t k = 0; ok && k < s.size(); ++k) ok = (k == axis) || s[k] == first[k];
    if (!ok) {
      throw Error(Errc::shape_mismatch,
                  "concat: extents disagree off the concat axis, " + shape_str(first) + " vs " + shape_str(s));
    }
    widths.push_back(s[axis]);
    total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= first[k];
  for (std::size_t k = axis + 1; k < first.size(); ++k) inner *= first[k];
  Shape out_shape = first;
  out_shape[axis] = total;
  std::vector<double> out(outer * total * inner);
  std::size_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto pv = parts[pi].data();
    const std::size_t block = widths[pi] * inner;
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(pv.data() + o * block, block, out.data() + o * total * inner + offset * inner);
    }
    offset += widths[pi];
  }
  return make_op_list("concat", std::move(out_shape), std::move(out), parts,
                      [widths, outer, inner, total](Node& self) {
                        std::size_t off = 0;
                        for (std::size_t pi = 0; pi < self.parents.size(); ++pi) {
                          Node& p = *self.parents[pi];
                          const std::size_t block = widths[pi] * inner;
                          if (p.requires_grad) {
                            auto& gp = grad_buffer(p);
                            for (std::size_t o = 0; o < outer; ++o) {
                              const double* src = self.grad.data() + o * total * inner + off * inner;
                              for (std::size_t t = 0; t < block; ++t) gp[o * block + t] += src[t];
                            }
                          }
                          off += widths[pi];
                        }
                      });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t start, std::size_t length) {
  const Shape& s = a.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis]) {
    throw Error(Errc::shape_mismatch, "slice: range [" + std::to_string(start) + ", +" + std::to_string(length) +
                                          ") out of bounds for " + shape_str(s));
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) inner *= s[k];
  const std::size_t width = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  const auto av = a.data();
  std::vector<double> out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o) {
    std::copy_n(av.data() + (o * width + start) * inner, length * inner, out.data() + o * length * inner);
  }
  return make_op("slice", std::move(out_shape), std::move(out), {&a},
                 [outer, inner, width, start, length](Node& self) {
                   auto& gp = grad_buffer(*self.parents[0]);
                   for (std::size_t o = 0; o < outer; ++o) {
                     for (std::size_t t = 0; t < length * inner; ++t) {
                       gp[(o * width + start) * inner + t] += self.grad[o * length * inner + t];
                     }
                   }
                 });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) {
    throw Error(Errc::shape_mismatch, "reshape: " + shape_str(a.shape()) + " to " + shape_str(shape));
  }
  return make_op("reshape", std::move(shape), a.to_vector(), {&a}, [](Node& self) {
    auto& gp = grad_buffer(*self.parents[0]);
    for (std::size_t i = 0; i < gp.size(); ++i) gp[i] += self.grad[i];
  });
}

Tensor sum(const Tensor& a) {
  double acc = 0.0;
  for (double x : a.data()) acc += x;
  return make_op("sum", {1}, {acc}, {&a}, [](Node& self) {
    auto& gp = grad_buffer(*self.parents[0]);
    for (double& g : gp) g += self.grad[0];
  });
}

Tensor sum(const Tensor& a, std::size_t axis) {
  const Shape& s = a.shape();
  if (axis >= s.size()) throw Error(Errc::shape_mismatch, "sum: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t k = 0; k < axis; ++k) outer *= s[k];
  for (std::size_t k = axis + 1; k < s.size(); ++k) inner *= s[k];
  const std::size_t width = s[axis];
  Shape out_shape = s;
  out_shape[axis] = 1;
  const auto av = a.data();
  std::vector<double> out(outer * inner, 0.0);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t w = 0; w < width; ++w)
      for (std::size_t t = 0; t < inner; ++t) out[o * inner + t] += av[(o * width + w) * inner + t];
  return make_op("sum_axis", std::move(out_shape), std::move(out), {&a}, [outer, inner, width](Node& self) {
    auto& gp = grad_buffer(*self.parents[0]);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t w = 0; w < width; ++w)
        for (std::size_t t = 0; t < inner; ++t) gp[(o * width + w) * inner + t] += self.grad[o * inner + t];
  });
}

Tensor mean(const Tensor& a) { return sum(a) * (1.0 / static_cast<double>(a.numel())); }

Tensor gather_rows(const Tensor& a, const Index& rows) {
  const std::size_t n = require_rank2(a, "gather_rows");
  const std::size_t d = a.extent(1);
  if (rows.empty()) throw Error(Errc::invalid_argument, "gather_rows: empty index list");
  const auto av = a.data();
  std::vector<double> out(rows.size() * d);
  for (std::size_t e = 0; e < rows.size(); ++e) {
    if (rows[e] >= n) throw Error(Errc::shape_mismatch, "gather_rows: row index out of range");
    std::copy_n(av.data() + rows[e] * d, d, out.data() + e * d);
  }
  return make_op("gather_rows", {rows.size(), d}, std::move(out), {&a}, [rows, d](Node& self) {
    auto& gp = grad_buffer(*self.parents[0]);
    for (std::size_t e = 0; e < rows.size(); ++e)
      for (std::size_t t = 0; t < d; ++t) gp[rows[e] * d + t] += self.grad[e * d + t];
  });
}

Tensor scatter_add_rows(const Tensor& a, const Index& rows, std::size_t out_rows) {
  const std::size_t e_count = require_rank2(a, "scatter_add_rows");
  const std::size_t d = a.extent(1);
  if (rows.size() != e_count) throw Error(Errc::shape_mismatch, "scatter_add_rows: index count != row count");
  const auto av = a.data();
  std::vector<double> out(out_rows * d, 0.0);
  for (std::size_t e = 0; e < e_count; ++e) {
    if (rows[e] >= out_rows) throw Error(Errc::shape_mismatch, "scatter_add_rows: target row out of range");
    for (std::size_t t = 0; t < d; ++t) out[rows[e] * d + t] += av[e * d + t];
  }
  return make_op("scatter_add_rows", {out_rows, d}, std::move(out), {&a}, [rows, d](Node& self) {
    auto& gp = grad_buffer(*self.parents[0]);
    for (std::size_t e = 0; e < rows.size(); ++e)
      for (std::size_t t = 0; t < d; ++t) gp[e * d + t] += self.grad[rows[e] * d + t];
  });
}

Tensor segment_softmax(const Tensor& scores, const Index& segments, std::size_t num_segments) {
  const auto sv = scores.data();
  if (segments.size() != sv.size()) throw Error(Errc::shape_mismatch, "segment_softmax: one segment id per score");
  std::vector<double> top(num_segments, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < sv.size(); ++e) {
    if (segments[e] >= num_segments) throw Error(Errc::shape_mismatch, "segment_softmax: segment id out of range");
    top[segments[e]] = std::max(top[segments[e]], sv[e]);
  }
  std::vector<double> out(sv.size());
  std::vector<double> total(num_segments, 0.0);
  for (std::size_t e = 0; e < sv.size(); ++e) {
    out[e] = std::exp(sv[e] - top[segments[e]]);
    total[segments[e]] += out[e];
  }
  for (std::size_t e = 0; e < sv.size(); ++e) out[e] /= total[segments[e]];
  return make_op("segment_softmax", scores.shape(), std::move(out), {&scores},
                 [segments, num_segments](Node& self) {
                   auto& gp = grad_buffer(*self.parents[0]);
                   std::vector<double> dot(num_segments, 0.0);
                   for (std::size_t e = 0; e < segments.size(); ++e) dot[segments[e]] += self.value[e] * self.grad[e];
                   for (std::size_t e = 0; e < segments.size(); ++e) {
                     gp[e] += self.value[e] * (self.grad[e] - dot[segments[e]]);
                   }
                 });
}

// ---- differentiation -----------------------------------------------------

ComputationTape::ComputationTape(const Tensor& root) {
  Node* start = Access::node(root).get();
  if (!start->requires_grad) return;
  std::unordered_map<Node*, bool> visited;
  // Iterative post-order DFS; parents are emitted before their children.
  std::vector<std::pair<Node*, std::size_t>> stack{{start, 0}};
  visited[start] = true;
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && !visited[parent]) {
        visited[parent] = true;
        stack.emplace_back(parent, 0);
      }
    } else {
      nodes_.push_back(node);
      stack.pop_back();
    }
  }
}

std::size_t ComputationTape::position(const Tensor& t) const {
  const Node* n = Access::node(t).get();
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i] == n) return i;
  return npos;
}

std::vector<std::size_t> ComputationTape::parent_positions(std::size_t pos) const {
  std::vector<std::size_t> out;
  for (const auto& p : nodes_.at(pos)->parents) {
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      if (nodes_[i] == p.get()) out.push_back(i);
  }
  return out;
}

void backward(const Tensor& root, bool retain_graph) {
  const NodePtr& r = Access::node(root);
  if (r->value.size() != 1) throw Error(Errc::shape_mismatch, "backward: root must be scalar, got " + shape_str(r->shape));
  if (r->consumed) throw Error(Errc::invalid_argument, "backward: graph already consumed (use retain_graph)");
  if (!r->requires_grad) return;
  ComputationTape tape(root);
  for (Node* n : tape.nodes_) {
    if (!n->leaf) n->grad.assign(n->value.size(), 0.0);
  }
  grad_buffer(*r)[0] += 1.0;
  for (auto it = tape.nodes_.rbegin(); it != tape.nodes_.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
  if (!retain_graph) {
    for (Node* n : tape.nodes_) {
      if (n->leaf) continue;
      n->backward_fn = nullptr;
      n->parents.clear();
      n->consumed = true;
    }
  }
}

namespace {

double relative_error(double analytic, double numeric, double eps) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + eps);
}

void check_eps(double eps) {
  if (!(eps > 1e-7 && eps < 1e-3)) throw Error(Errc::invalid_argument, "grad_check: eps must lie in (1e-7, 1e-3)");
}

double eval_scalar(const Tensor& y) {
  const double v = y.item();
  if (!std::isfinite(v)) throw Error(Errc::domain_error, "grad_check: non-finite function value");
  return v;
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  check_eps(eps);
  Tensor leaf = x;
  if (!leaf.is_leaf() || !leaf.requires_grad()) {
    throw Error(Errc::invalid_argument, "grad_check: x must be a leaf tensor that requires grad");
  }
  return grad_check([&] { return f(leaf); }, std::vector<Tensor>{leaf}, eps);
}

double grad_check(const std::function<Tensor()>& f, const std::vector<Tensor>& params, double eps, double fraction,
                  std::uint64_t seed) {
  check_eps(eps);
  std::vector<Tensor> ps = params;
  for (auto& p : ps) p.zero_grad();
  Tensor y = f();
  eval_scalar(y);
  backward(y);
  std::mt19937_64 rng(seed);
  double worst = 0.0;
  for (auto& p : ps) {
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    for (double g : analytic) {
      if (!std::isfinite(g)) throw Error(Errc::domain_error, "grad_check: non-finite analytic gradient");
    }
    std::vector<std::size_t> comps(p.numel());
    std::iota(comps.begin(), comps.end(), 0);
    if (fraction < 1.0) {
      std::shuffle(comps.begin(), comps.end(), rng);
      const auto keep = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(fraction * comps.size())));
      comps.resize(std::min(keep, comps.size()));
      std::sort(comps.begin(), comps.end());
    }
    auto values = p.mutable_data();
    for (std::size_t i : comps) {
      const double saved = values[i];
      values[i] = saved + eps;
      const double fp = eval_scalar(f());
      values[i] = saved - eps;
      const double fm = eval_scalar(f());
      values[i] = saved;
      const double numeric = (fp - fm) / (2.0 * eps);
      worst = std::max(worst, relative_error(analytic[i], numeric, eps));
    }
  }
  for (auto& p : ps) p.zero_grad();
  return worst;
}

}  // namespace hypkt::diff
