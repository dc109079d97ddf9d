#include <cmath>

#include "doctest.h"
#include "hypkt/error.hpp"
#include "hypkt/manifold.hpp"
#include "support.hpp"

using namespace hypkt;
using namespace hypkt::manifold;
using diff::Tensor;

namespace {

const Curvature kUnit = Curvature::from_value(-1.0);

HyperbolicPoint point(std::vector<double> coords, Curvature k = kUnit) { return {std::move(coords), k}; }

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_CASE("curvature parameterization") {
  CHECK(kUnit.value() == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(Curvature(-50.0).value() <= -kCurvatureFloor);
  CHECK(Curvature(40.0).value() < -40.0);
  const Curvature k = Curvature::from_value(-0.25);
  CHECK(Curvature::from_bits(k.theta_bits()).theta_bits() == k.theta_bits());
  CHECK_THROWS_AS(Curvature::from_value(-1e-4), Error);
  CHECK_THROWS_AS(Curvature::from_value(0.5), Error);
}

TEST_CASE("lorentz inner product") {
  const auto o = origin(2, kUnit);
  CHECK(lorentz_inner(o.coords, o.coords) == doctest::Approx(-1.0));
  CHECK(lorentz_inner(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
  CHECK(lorentz_inner(std::vector<double>{2, 1, 1}, std::vector<double>{3, 1, 2}) == -3.0);
  CHECK_THROWS_AS(lorentz_inner(std::vector<double>{1, 2}, std::vector<double>{1, 2, 3}), Error);
}

TEST_CASE("distance") {
  const auto o = origin(2, kUnit);
  CHECK(distance(o, o) == 0.0);
  const auto y = exp_map(o, TangentVector{o, {0, 1, 0}});
  CHECK(distance(o, y) == doctest::Approx(1.0).epsilon(1e-12));
  const auto z = point({std::cosh(2.0), std::sinh(2.0), 0.0});
  CHECK(distance(o, z) == doctest::Approx(2.0).epsilon(1e-12));
  // Literal arccosh(kappa<x,y>)/sqrt|kappa| on a well-separated pair.
  CHECK(distance(o, z) == doctest::Approx(std::acosh(-lorentz_inner(o.coords, z.coords))).epsilon(1e-12));
  const auto other = origin(2, Curvature::from_value(-2.0));
  CHECK_THROWS_AS(distance(o, other), Error);
}

TEST_CASE("exp map") {
  const auto o = origin(2, kUnit);
  CHECK(exp_map(o, TangentVector{o, {0, 0, 0}}).coords == o.coords);
  const auto y = exp_map(o, TangentVector{o, {0, 1, 0}});
  CHECK(y.coords[0] == doctest::Approx(1.5430806348152437).epsilon(1e-12));
  CHECK(y.coords[1] == doctest::Approx(1.1752011936438014).epsilon(1e-12));
  CHECK(y.coords[2] == 0.0);
  CHECK(std::abs(lorentz_inner(y.coords, y.coords) + 1.0) < 1e-9);
  CHECK_THROWS_AS(exp_map(o, TangentVector{o, {1, 0, 0}}), Error);
  const auto p = point({std::cosh(1.0), std::sinh(1.0), 0.0});
  CHECK_THROWS_AS(exp_map(o, TangentVector{p, {0, 1, 0}}), Error);
}

TEST_CASE("log map") {
  const auto o = origin(2, kUnit);
  for (double c : log_map(o, o).coords) CHECK(c == 0.0);
  const std::vector<double> v{0, 0.3, -0.7};
  const auto back = log_map(o, exp_map(o, TangentVector{o, v}));
  CHECK(linf(back.coords, v) < 1e-7);

  std::mt19937_64 rng(17);
  for (int i = 0; i < 200; ++i) {
    const auto x = testing::random_point(rng, 3, kUnit);
    const auto y = testing::random_point(rng, 3, kUnit);
    const auto l = log_map(x, y);
    CHECK(std::abs(lorentz_inner(x.coords, l.coords)) < 1e-9 * (1 + std::abs(x.coords[0] * l.coords[0])));
    CHECK(lorentz_norm(l.coords) == doctest::Approx(distance(x, y)).epsilon(1e-9));
  }
}

TEST_CASE("projections") {
  const auto o = project_to_manifold(std::vector<double>{0, 0, 0}, kUnit);
  CHECK(o.coords == std::vector<double>{1, 0, 0});
  const auto p = project_to_manifold(std::vector<double>{-7, 3, 4}, kUnit);
  CHECK(p.coords[0] == doctest::Approx(std::sqrt(26.0)).epsilon(1e-15));
  CHECK(p.coords[1] == 3.0);
  CHECK(project_to_manifold(p.coords, kUnit).coords == p.coords);

  std::mt19937_64 rng(5);
  const auto x = testing::random_point(rng, 3, kUnit);
  const auto t = testing::random_tangent(rng, x, 0.8);
  CHECK(linf(project_to_tangent(x, t).coords, t) < 1e-12);
  for (double c : project_to_tangent(x, x.coords).coords) CHECK(std::abs(c) < 1e-12);
  for (int i = 0; i < 50; ++i) {
    const auto raw = testing::uniform_vec(rng, 4, -3, 3);
    const auto v = project_to_tangent(x, raw);
    CHECK(std::abs(lorentz_inner(x.coords, v.coords)) < 1e-9);
  }
}

TEST_CASE("geometry properties across curvatures") {
  std::mt19937_64 rng(1234);
  for (double kv : {-0.25, -1.0, -4.0}) {
    const Curvature k = Curvature::from_value(kv);
    double worst_round_trip = 0.0, worst_residual = 0.0, worst_iso = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const auto x = testing::random_point(rng, 4, k, 1.0);
      std::uniform_real_distribution<double> len(0.0, 3.0);
      const auto v = testing::random_tangent(rng, x, len(rng));
      const auto y = exp_map(x, TangentVector{x, v});
      worst_round_trip = std::max(worst_round_trip, linf(log_map(x, y).coords, v));
      worst_residual = std::max({worst_residual, manifold_residual(x), manifold_residual(y)});
      worst_iso = std::max(worst_iso, std::abs(distance(x, y) - lorentz_norm(v)));
      CHECK(y.coords[0] > 0.0);
    }
    CHECK(worst_round_trip < 1e-6);
    CHECK(worst_residual < 1e-9);
    CHECK(worst_iso < 1e-6);

    for (int i = 0; i < 1000; ++i) {
      const auto a = testing::random_point(rng, 3, k);
      const auto b = testing::random_point(rng, 3, k);
      const auto c = testing::random_point(rng, 3, k);
      CHECK(distance(a, b) == distance(b, a));
      CHECK(distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9);
    }
  }
}

TEST_CASE("differentiable origin maps agree with the value-level maps") {
  std::mt19937_64 rng(8);
  for (double kv : {-0.25, -1.0, -4.0}) {
    const Curvature k = Curvature::from_value(kv);
    const auto kt = curvature_value(Tensor::scalar(k.theta()));
    const auto o = origin(3, k);
    for (int i = 0; i < 20; ++i) {
      auto u = testing::uniform_vec(rng, 3, -1.2, 1.2);
      if (i == 0) u.assign(3, 0.0);
      const auto lifted = expmap0(Tensor::from({1, 3}, u), kt);
      const auto reference = exp_map(o, TangentVector{o, {0, u[0], u[1], u[2]}});
      CHECK(linf(lifted.to_vector(), reference.coords) < 1e-12 * (1 + reference.coords[0]));
      const auto back = logmap0(lifted, kt).to_vector();
      CHECK(linf(back, u) < 1e-12);
      const auto lref = log_map(o, reference);
      CHECK(linf(back, {lref.coords[1], lref.coords[2], lref.coords[3]}) < 1e-10);
      CHECK(std::abs(lref.coords[0]) < 1e-10);
    }
  }
  // Series and closed-form branches meet smoothly.
  for (double q : {0.9e-6, 1.1e-6}) {
    CHECK(sinhc_sq(q) == doctest::Approx(std::sinh(std::sqrt(q)) / std::sqrt(q)).epsilon(1e-15));
    CHECK(asinhc_sq(q) == doctest::Approx(std::asinh(std::sqrt(q)) / std::sqrt(q)).epsilon(1e-15));
  }
}

TEST_CASE("differentiable distance matches the value-level distance") {
  std::mt19937_64 rng(21);
  const auto kt = curvature_value(Tensor::scalar(kUnit.theta()));
  for (int i = 0; i < 50; ++i) {
    const auto x = testing::random_point(rng, 3, kUnit);
    const auto y = testing::random_point(rng, 3, kUnit);
    const double d = distance(Tensor::from({1, 4}, x.coords), Tensor::from({1, 4}, y.coords), kt).item();
    CHECK(d == doctest::Approx(distance(x, y)).epsilon(1e-9));
  }
  const auto o = origin(3, kUnit);
  const auto ot = Tensor::from({1, 4}, o.coords);
  CHECK(distance(ot, ot, kt).item() == 0.0);
}

TEST_CASE("gradients through distance") {
  std::mt19937_64 rng(77);
  for (double kv : {-0.25, -1.0, -4.0}) {
    const Curvature k = Curvature::from_value(kv);
    auto kt = curvature_value(Tensor::scalar(k.theta()));
    const auto x = testing::random_point(rng, 3, k);
    const auto xt = Tensor::from({1, 4}, x.coords);
    auto u = Tensor::from({1, 3}, testing::uniform_vec(rng, 3, -1, 1), true);
    const double err = diff::grad_check([&](const Tensor& t) { return diff::sum(distance(xt, expmap0(t, kt), kt)); }, u);
    CHECK(err < 1e-4);
  }
  // Curvature gradient: both endpoints lifted from fixed tangent coordinates.
  auto theta = Tensor::scalar(kUnit.theta(), true);
  const auto u1 = Tensor::from({1, 3}, {0.4, -0.2, 0.9});
  const auto u2 = Tensor::from({1, 3}, {-0.7, 0.5, 0.1});
  auto f = [&](const Tensor& th) {
    const auto kt = curvature_value(th);
    return diff::sum(distance(expmap0(u1, kt), expmap0(u2, kt), kt));
  };
  CHECK(diff::grad_check(f, theta) < 1e-4);
  auto g = [&](const Tensor& th) { return diff::sum(logmap0(expmap0(u1, curvature_value(th)), curvature_value(th))); };
  CHECK(diff::grad_check(g, theta) < 1e-4);
}

TEST_CASE("origin chart in euclidean mode is the identity") {
  const OriginChart chart(Tensor::scalar(-1.0), true);
  const auto t = Tensor::from({2, 2}, {1, 2, 3, 4});
  CHECK(chart.exp0(t).to_vector() == t.to_vector());
  CHECK(chart.log0(t).to_vector() == t.to_vector());
}
