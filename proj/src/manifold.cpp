#include "hypkt/manifold.hpp"

#include <bit>
#include <cmath>
#include <string>

#include "hypkt/error.hpp"

namespace hypkt::manifold {

namespace {

constexpr double kSeriesCutoff = 1e-6;

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

void require_same_dim(std::span<const double> x, std::span<const double> y, const char* op) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(Errc::shape_mismatch, std::string(op) + ": ambient dimensions " + std::to_string(x.size()) +
                                          " and " + std::to_string(y.size()) + " (need equal, >= 2)");
  }
}

void require_same_curvature(const HyperbolicPoint& x, const HyperbolicPoint& y, const char* op) {
  if (!(x.curvature == y.curvature)) {
    throw Error(Errc::invalid_argument, std::string(op) + ": points live on different curvatures");
  }
  require_same_dim(x.coords, y.coords, op);
}

double sinhc_sq_grad(double q) {
  if (q < kSeriesCutoff) return 1.0 / 6.0 + q / 60.0 + q * q / 1680.0;
  const double r = std::sqrt(q);
  return (r * std::cosh(r) - std::sinh(r)) / (2.0 * q * r);
}

double asinhc_sq_grad(double q) {
  if (q < kSeriesCutoff) return -1.0 / 6.0 + 3.0 * q / 20.0 - 15.0 * q * q / 112.0;
  const double r = std::sqrt(q);
  return (r / std::sqrt(1.0 + q) - std::asinh(r)) / (2.0 * q * r);
}

}  // namespace

// ---- Curvature -------------------------------------------------------------

Curvature Curvature::from_value(double kappa) {
  const double y = -kappa - kCurvatureFloor;
  if (!(y > 0.0) || !std::isfinite(y)) {
    throw Error(Errc::invalid_argument, "curvature must be finite and < -" + std::to_string(kCurvatureFloor));
  }
  // softplus^{-1}(y) = log(expm1(y)), rewritten for large y.
  const double theta = y > 30.0 ? y + std::log(-std::expm1(-y)) : std::log(std::expm1(y));
  return Curvature(theta);
}

Curvature Curvature::from_bits(std::uint64_t bits) { return Curvature(std::bit_cast<double>(bits)); }

std::uint64_t Curvature::theta_bits() const noexcept { return std::bit_cast<std::uint64_t>(theta_); }

double Curvature::value() const noexcept { return -softplus(theta_) - kCurvatureFloor; }

double Curvature::sqrt_abs() const noexcept { return std::sqrt(-value()); }

// ---- value level -------------------------------------------------------------

double lorentz_inner(std::span<const double> x, std::span<const double> y) {
  require_same_dim(x, y, "lorentz_inner");
  double acc = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double lorentz_norm(std::span<const double> v) { return std::sqrt(std::max(lorentz_inner(v, v), 0.0)); }

HyperbolicPoint origin(std::size_t n, Curvature kappa) {
  if (n == 0) throw Error(Errc::invalid_argument, "origin: manifold dimension must be >= 1");
  HyperbolicPoint o{std::vector<double>(n + 1, 0.0), kappa};
  o.coords[0] = 1.0 / kappa.sqrt_abs();
  return o;
}

double manifold_residual(const HyperbolicPoint& x) {
  return std::abs(lorentz_inner(x.coords, x.coords) - 1.0 / x.curvature.value());
}

// kappa*<x,y> - 1 = (|kappa|/2)*<x-y,x-y>, so d = (2/s)*asinh(s*|x-y|_L/2)
// with s = sqrt|kappa|. Same value as (1/s)*arccosh(kappa*<x,y>) without the
// cancellation near x == y.
double distance(const HyperbolicPoint& x, const HyperbolicPoint& y) {
  require_same_curvature(x, y, "distance");
  double chord_sq = -(x.coords[0] - y.coords[0]) * (x.coords[0] - y.coords[0]);
  for (std::size_t i = 1; i < x.coords.size(); ++i) chord_sq += (x.coords[i] - y.coords[i]) * (x.coords[i] - y.coords[i]);
  const double s = x.curvature.sqrt_abs();
  return 2.0 / s * std::asinh(s * std::sqrt(std::max(chord_sq, 0.0)) / 2.0);
}

HyperbolicPoint exp_map(const HyperbolicPoint& x, const TangentVector& v) {
  if (v.base.coords != x.coords || !(v.base.curvature == x.curvature)) {
    throw Error(Errc::invalid_argument, "exp_map: tangent vector is not based at x");
  }
  require_same_dim(x.coords, v.coords, "exp_map");
  double scale = 1.0;
  for (std::size_t i = 0; i < x.coords.size(); ++i) scale += std::abs(x.coords[i]) * std::abs(v.coords[i]);
  if (std::abs(lorentz_inner(x.coords, v.coords)) > 1e-8 * scale) {
    throw Error(Errc::invalid_argument, "exp_map: vector is not tangent at x");
  }
  const double norm = lorentz_norm(v.coords);
  if (norm == 0.0) return x;
  const double theta = x.curvature.sqrt_abs() * norm;
  const double a = std::cosh(theta);
  const double b = std::sinh(theta) / theta;
  std::vector<double> out(x.coords.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x.coords[i] + b * v.coords[i];
  return project_to_manifold(out, x.curvature);
}

// log_x(y) = d(x,y) * u/|u|_L with u = y + |kappa|<x,y>x = (y - x) - (|kappa|/2)|y - x|^2_L x.
TangentVector log_map(const HyperbolicPoint& x, const HyperbolicPoint& y) {
  require_same_curvature(x, y, "log_map");
  const std::size_t n = x.coords.size();
  std::vector<double> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = y.coords[i] - x.coords[i];
  const double chord_sq = lorentz_inner(diff, diff);
  const double half_k = -x.curvature.value() / 2.0;
  std::vector<double> u(n);
  for (std::size_t i = 0; i < n; ++i) u[i] = diff[i] - half_k * chord_sq * x.coords[i];
  const double unorm = lorentz_norm(u);
  TangentVector out{x, std::vector<double>(n, 0.0)};
  if (unorm == 0.0) return out;
  const double d = distance(x, y);
  for (std::size_t i = 0; i < n; ++i) out.coords[i] = d * u[i] / unorm;
  return out;
}

HyperbolicPoint project_to_manifold(std::span<const double> raw, Curvature kappa) {
  if (raw.size() < 2) throw Error(Errc::shape_mismatch, "project_to_manifold: need ambient dimension >= 2");
  HyperbolicPoint p{std::vector<double>(raw.begin(), raw.end()), kappa};
  double space = 0.0;
  for (std::size_t i = 1; i < raw.size(); ++i) space += raw[i] * raw[i];
  p.coords[0] = std::sqrt(space - 1.0 / kappa.value());
  return p;
}

TangentVector project_to_tangent(const HyperbolicPoint& x, std::span<const double> raw) {
  require_same_dim(x.coords, raw, "project_to_tangent");
  const double c = x.curvature.value() * lorentz_inner(x.coords, raw);
  TangentVector v{x, std::vector<double>(raw.begin(), raw.end())};
  for (std::size_t i = 0; i < raw.size(); ++i) v.coords[i] -= c * x.coords[i];
  return v;
}

double sinhc_sq(double q) {
  if (q < kSeriesCutoff) return 1.0 + q / 6.0 + q * q / 120.0 + q * q * q / 5040.0;
  const double r = std::sqrt(q);
  return std::sinh(r) / r;
}

double asinhc_sq(double q) {
  if (q < kSeriesCutoff) return 1.0 - q / 6.0 + 3.0 * q * q / 40.0 - 5.0 * q * q * q / 112.0;
  const double r = std::sqrt(q);
  return std::asinh(r) / r;
}

// ---- differentiable ----------------------------------------------------------

using diff::Tensor;

namespace {

Tensor time_sign_row(std::size_t ambient) {
  std::vector<double> s(ambient, 1.0);
  s[0] = -1.0;
  return Tensor::from({1, ambient}, std::move(s));
}

Tensor row_sq_norm(const Tensor& m) { return diff::sum(diff::square(m), 1); }

}  // namespace

Tensor curvature_value(const Tensor& theta) { return -diff::softplus(theta) - kCurvatureFloor; }

Tensor lorentz_inner(const Tensor& x, const Tensor& y) {
  if (x.rank() != 2 || x.shape() != y.shape() || x.extent(1) < 2) {
    throw Error(Errc::shape_mismatch, "lorentz_inner: operands must be equal [N x (n+1)] tensors");
  }
  return diff::sum(x * y * time_sign_row(x.extent(1)), 1);
}

Tensor distance(const Tensor& x, const Tensor& y, const Tensor& kappa) {
  const Tensor arg = diff::threshold(kappa * lorentz_inner(x, y), 1.0 + kArccoshSnap, 1.0);
  return diff::arccosh(arg) / diff::sqrt(-kappa);
}

Tensor expmap0(const Tensor& tangent, const Tensor& kappa) {
  if (tangent.rank() != 2) throw Error(Errc::shape_mismatch, "expmap0: expected [N x n] tangent coordinates");
  const Tensor q = -kappa * row_sq_norm(tangent);
  const Tensor space = tangent * diff::map(q, sinhc_sq, sinhc_sq_grad, "sinhc_sq");
  return project_to_manifold(space, kappa);
}

Tensor logmap0(const Tensor& points, const Tensor& kappa) {
  if (points.rank() != 2 || points.extent(1) < 2) {
    throw Error(Errc::shape_mismatch, "logmap0: expected [N x (n+1)] points");
  }
  const Tensor space = diff::slice(points, 1, 1, points.extent(1) - 1);
  const Tensor q = -kappa * row_sq_norm(space);
  return space * diff::map(q, asinhc_sq, asinhc_sq_grad, "asinhc_sq");
}

Tensor project_to_manifold(const Tensor& space, const Tensor& kappa) {
  const Tensor time = diff::sqrt(row_sq_norm(space) - 1.0 / kappa);
  return diff::concat({time, space}, 1);
}

Tensor OriginChart::exp0(const Tensor& tangent) const { return euclidean_ ? tangent : expmap0(tangent, kappa_); }

Tensor OriginChart::log0(const Tensor& points) const { return euclidean_ ? points : logmap0(points, kappa_); }

}  // namespace hypkt::manifold
