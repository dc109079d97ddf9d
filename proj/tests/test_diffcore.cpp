#include <cmath>
#include <random>

#include "doctest.h"
#include "hypkt/diffcore.hpp"
#include "hypkt/error.hpp"

using namespace hypkt::diff;
using hypkt::Errc;
using hypkt::Error;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double lo, double hi, bool rg = true) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (double& x : v) x = u(rng);
  return Tensor::from(std::move(shape), std::move(v), rg);
}

Errc code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected hypkt::Error");
  return Errc::invalid_argument;
}

}  // namespace

TEST_CASE("scalar reference values") {
  CHECK(sigmoid(Tensor::scalar(0.0)).item() == 0.5);
  CHECK(arccosh(Tensor::scalar(1.0)).item() == 0.0);
  // mpmath reference: cosh(1) = 1.5430806348152437784779...
  CHECK(cosh(Tensor::scalar(1.0)).item() == doctest::Approx(1.5430806348152437).epsilon(1e-15));
}

TEST_CASE("domain and shape errors name the op") {
  CHECK(code_of([] { arccosh(Tensor::scalar(0.5)); }) == Errc::domain_error);
  CHECK(code_of([] { log(Tensor::scalar(0.0)); }) == Errc::domain_error);
  CHECK(code_of([] { sqrt(Tensor::scalar(-1.0)); }) == Errc::domain_error);
  CHECK(code_of([] { add(Tensor::zeros({2, 3}), Tensor::zeros({3, 2})); }) == Errc::shape_mismatch);
  CHECK(code_of([] { matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})); }) == Errc::shape_mismatch);
  try {
    arccosh(Tensor::scalar(0.2));
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("arccosh") != std::string::npos);
  }
}

TEST_CASE("matmul") {
  auto eye = Tensor::from({2, 2}, {1, 0, 0, 1});
  auto m = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(matmul(eye, m).to_vector() == std::vector<double>{1, 2, 3, 4});
  CHECK(matmul(Tensor::from({1, 2}, {1, 2}), Tensor::from({2, 1}, {3, 4})).item() == 11.0);

  std::mt19937_64 rng(3);
  auto a = random_tensor(rng, {3, 4}, -2, 2);
  auto b = random_tensor(rng, {4, 2}, -2, 2);
  backward(sum(matmul(a, b)));
  REQUIRE(a.has_grad());
  // d/dA sum(AB) = 1 * B^T: row-constant, each entry the row sum of B.
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t p = 0; p < 4; ++p) {
      CHECK(a.grad()[i * 4 + p] == doctest::Approx(b.at(p, 0) + b.at(p, 1)).epsilon(1e-14));
    }
  }
  CHECK(a.grad().size() == a.numel());
  CHECK(b.grad().size() == b.numel());
}

TEST_CASE("concat") {
  auto a = Tensor::from({1}, {1.0}, true);
  auto b = Tensor::from({1}, {2.0}, true);
  auto c = concat({a, b}, 0);
  CHECK(c.to_vector() == std::vector<double>{1, 2});
  CHECK(code_of([] { concat({}, 0); }) == Errc::invalid_argument);
  CHECK(code_of([] { concat({Tensor::zeros({2, 2}), Tensor::zeros({3, 3})}, 1); }) == Errc::shape_mismatch);

  auto x = Tensor::from({2, 1}, {1, 2}, true);
  auto y = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}, true);
  auto weights = Tensor::from({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
  backward(sum(concat({x, y}, 1) * weights));
  CHECK(x.grad().size() == 2);
  CHECK(y.grad().size() == 6);
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{1, 5});
  CHECK(std::vector<double>(y.grad().begin(), y.grad().end()) == std::vector<double>{2, 3, 4, 6, 7, 8});
}

TEST_CASE("backward basics") {
  auto x = Tensor::scalar(3.0, true);
  backward(x * x);
  CHECK(x.grad()[0] == 6.0);

  auto z = Tensor::scalar(0.0, true);
  backward(sigmoid(z));
  CHECK(z.grad()[0] == 0.25);

  CHECK(code_of([] { backward(Tensor::zeros({2}, true) * 2.0); }) == Errc::shape_mismatch);

  auto w = Tensor::scalar(1.5, true);
  auto root = w * w;
  backward(root);
  CHECK(code_of([&] { backward(root); }) == Errc::invalid_argument);
}

TEST_CASE("tape is topologically ordered") {
  std::mt19937_64 rng(5);
  auto a = random_tensor(rng, {2, 3}, -1, 1);
  auto b = random_tensor(rng, {3, 2}, -1, 1);
  auto h = tanh(matmul(a, b));
  auto root = sum(h * h + sigmoid(h));
  ComputationTape tape(root);
  CHECK(tape.size() >= 6);
  CHECK(tape.position(root) == tape.size() - 1);
  for (std::size_t i = 0; i < tape.size(); ++i) {
    for (std::size_t p : tape.parent_positions(i)) CHECK(p < i);
  }
}

TEST_CASE("backward is deterministic") {
  std::mt19937_64 rng(11);
  auto a = random_tensor(rng, {4, 4}, -1, 1);
  auto b = random_tensor(rng, {4, 1}, -1, 1);
  auto root = sum(exp(tanh(matmul(a, b))) / (1.0 + square(a)));
  backward(root, true);
  std::vector<double> first(a.grad().begin(), a.grad().end());
  a.zero_grad();
  b.zero_grad();
  backward(root, true);
  std::vector<double> second(a.grad().begin(), a.grad().end());
  CHECK(first == second);
}

TEST_CASE("grad_check") {
  auto x = Tensor::from({3}, {0.3, -1.2, 2.0}, true);
  CHECK(grad_check([](const Tensor& t) { return sum(t * t); }, x) < 1e-5);

  auto c = Tensor::from({2}, {1.0, 2.0}, true);
  auto constant = [](const Tensor&) { return Tensor::scalar(4.0); };
  CHECK(grad_check(constant, c) == 0.0);
  backward(sum(c * 0.0) + 4.0);
  CHECK(c.grad()[0] == 0.0);
  CHECK(c.grad()[1] == 0.0);

  CHECK(code_of([&] { grad_check([](const Tensor& t) { return sum(t); }, x, 1e-2); }) == Errc::invalid_argument);
}

TEST_CASE("every op passes a central-difference check") {
  std::mt19937_64 rng(2024);
  const double eps = 1e-6;
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 1 + rng() % 8;
    const std::size_t m = 1 + rng() % 8;
    auto x = random_tensor(rng, {n, m}, -2, 2);
    auto y = random_tensor(rng, {n, m}, -2, 2);
    auto pos = random_tensor(rng, {n, m}, 0.5, 2);
    auto big = random_tensor(rng, {n, m}, 1.1, 2);
    auto row = random_tensor(rng, {1, m}, -2, 2);
    auto weights = random_tensor(rng, {n, m}, -1, 1, false);
    auto check = [&](auto f, const Tensor& t) {
      const double err = grad_check([&](const Tensor& v) { return sum(f(v) * weights); }, t, eps);
      CHECK(err < 1e-4);
    };
    check([&](const Tensor& v) { return v + y; }, x);
    check([&](const Tensor& v) { return y - v; }, x);
    check([&](const Tensor& v) { return v * y; }, x);
    check([&](const Tensor& v) { return y / v; }, pos);
    check([&](const Tensor& v) { return v / pos; }, x);
    check([&](const Tensor& v) { return -v; }, x);
    check([&](const Tensor& v) { return exp(v); }, x);
    check([&](const Tensor& v) { return log(v); }, pos);
    check([&](const Tensor& v) { return sigmoid(v); }, x);
    check([&](const Tensor& v) { return tanh(v); }, x);
    check([&](const Tensor& v) { return cosh(v); }, x);
    check([&](const Tensor& v) { return sinh(v); }, x);
    check([&](const Tensor& v) { return arccosh(v); }, big);
    check([&](const Tensor& v) { return sqrt(v); }, pos);
    check([&](const Tensor& v) { return square(v); }, x);
    check([&](const Tensor& v) { return softplus(v); }, x);
    check([&](const Tensor& v) { return leaky_relu(v, 0.2); }, x);
    check([&](const Tensor& v) { return v * row; }, row);
    check([&](const Tensor& v) { return transpose(transpose(v)); }, x);
    check([&](const Tensor& v) { return sum(v, 0) * v; }, x);
    check([&](const Tensor& v) { return sum(v, 1) * v; }, x);
    check([&](const Tensor& v) { return slice(concat({v, y}, 1), 1, 1, m); }, x);
    check([&](const Tensor& v) { return reshape(reshape(v, {n * m}), {n, m}); }, x);

    auto w = random_tensor(rng, {m, 3}, -1, 1);
    CHECK(grad_check([&](const Tensor& v) { return sum(tanh(matmul(x, v))); }, w, eps) < 1e-4);
    CHECK(grad_check([&](const Tensor& v) { return sum(tanh(matmul(v, w))); }, x, eps) < 1e-4);

    Index rows{0, n - 1, 0};
    Index segs{1, 0, 1};
    auto col = random_tensor(rng, {3, 1}, -2, 2);
    CHECK(grad_check([&](const Tensor& v) { return sum(sigmoid(gather_rows(v, rows))); }, x, eps) < 1e-4);
    CHECK(grad_check([&](const Tensor& v) { return sum(tanh(scatter_add_rows(gather_rows(v, rows), segs, 2))); }, x,
                     eps) < 1e-4);
    auto coeff = Tensor::from({3, 1}, {0.3, -1.1, 2.0});
    CHECK(grad_check([&](const Tensor& v) { return sum(segment_softmax(v, segs, 2) * coeff); }, col, eps) < 1e-4);
  }
}

TEST_CASE("broadcasting matches a brute-force loop oracle") {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 50; ++trial) {
    Shape full;
    const std::size_t rank = 1 + rng() % 3;
    for (std::size_t k = 0; k < rank; ++k) full.push_back(1 + rng() % 4);
    Shape sa = full, sb = full;
    for (std::size_t k = 0; k < rank; ++k) {
      if (rng() % 3 == 0) sa[k] = 1;
      if (rng() % 3 == 0) sb[k] = 1;
    }
    if (rng() % 2 == 0 && sb.size() > 1) sb.erase(sb.begin());  // lower-rank operand
    auto a = random_tensor(rng, sa, -2, 2, false);
    auto b = random_tensor(rng, sb, -2, 2, false);
    auto c = a * b + a;
    Shape out = c.shape();
    REQUIRE(out.size() == rank);
    // Independent index walk: offset each operand by its own aligned axes.
    std::vector<std::size_t> idx(rank, 0);
    for (std::size_t o = 0; o < c.numel(); ++o) {
      auto offset = [&](const Shape& s) {
        std::size_t off = 0;
        const std::size_t shift = rank - s.size();
        for (std::size_t k = 0; k < s.size(); ++k) off = off * s[k] + (s[k] == 1 ? 0 : idx[k + shift]);
        return off;
      };
      const double expected = a.data()[offset(sa)] * b.data()[offset(sb)] + a.data()[offset(sa)];
      CHECK(c.data()[o] == expected);
      for (std::size_t k = rank; k-- > 0;) {
        if (++idx[k] < out[k]) break;
        idx[k] = 0;
      }
    }
  }
}

TEST_CASE("broadcast gradients reduce over stretched axes") {
  auto bias = Tensor::from({1, 3}, {0.1, 0.2, 0.3}, true);
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  backward(sum(x * bias));
  CHECK(std::vector<double>(bias.grad().begin(), bias.grad().end()) == std::vector<double>{5, 7, 9});
}

TEST_CASE("threshold and clamp gate gradients") {
  auto x = Tensor::from({3}, {0.5, 1.0, 2.0}, true);
  auto y = threshold(x, 1.0, 1.0);
  CHECK(y.to_vector() == std::vector<double>{1.0, 1.0, 2.0});
  backward(sum(y * 3.0));
  CHECK(std::vector<double>(x.grad().begin(), x.grad().end()) == std::vector<double>{0, 3, 3});

  auto z = Tensor::from({3}, {-1.0, 0.5, 2.0}, true);
  backward(sum(clamp(z, 0.0, 1.0)));
  CHECK(std::vector<double>(z.grad().begin(), z.grad().end()) == std::vector<double>{0, 1, 0});
}
