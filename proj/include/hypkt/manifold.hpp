#pragma once

// Hyperboloid model of hyperbolic space with curvature kappa < 0:
//   H = { x in R^{n+1} : <x,x>_L = 1/kappa, x0 > 0 },  <x,y>_L = -x0*y0 + sum_i xi*yi.
//
// Two layers live here. Value-level types (Curvature, HyperbolicPoint,
// TangentVector) with general-base exp/log maps, and differentiable
// origin-chart maps over row-stacked tensors used by the encoder and tracker.

#include <cstdint>
#include <span>
#include <vector>

#include "hypkt/diffcore.hpp"

namespace hypkt::manifold {

// kappa = -softplus(theta) - kCurvatureFloor, so kappa <= -kCurvatureFloor.
inline constexpr double kCurvatureFloor = 1e-3;
// arccosh arguments below 1 + kArccoshSnap are snapped to exactly 1.
inline constexpr double kArccoshSnap = 1e-12;

class Curvature {
 public:
  explicit Curvature(double theta = 0.0) : theta_(theta) {}
  // Inverse of the softplus parameterization; kappa must be < -kCurvatureFloor.
  static Curvature from_value(double kappa);
  static Curvature from_bits(std::uint64_t bits);

  double theta() const noexcept { return theta_; }
  std::uint64_t theta_bits() const noexcept;
  double value() const noexcept;
  double sqrt_abs() const noexcept;

  friend bool operator==(const Curvature& a, const Curvature& b) noexcept {
    return a.theta_bits() == b.theta_bits();
  }

 private:
  double theta_;
};

struct HyperbolicPoint {
  std::vector<double> coords;
  Curvature curvature;

  std::size_t dim() const { return coords.size() - 1; }
};

struct TangentVector {
  HyperbolicPoint base;
  std::vector<double> coords;
};

double lorentz_inner(std::span<const double> x, std::span<const double> y);
// sqrt(max(<v,v>_L, 0)).
double lorentz_norm(std::span<const double> v);

// (sqrt(1/|kappa|), 0, ..., 0) in R^{n+1}.
HyperbolicPoint origin(std::size_t n, Curvature kappa);
// |<x,x>_L - 1/kappa|.
double manifold_residual(const HyperbolicPoint& x);

double distance(const HyperbolicPoint& x, const HyperbolicPoint& y);
HyperbolicPoint exp_map(const HyperbolicPoint& x, const TangentVector& v);
TangentVector log_map(const HyperbolicPoint& x, const HyperbolicPoint& y);
// Keeps the space coordinates and solves for the time coordinate.
HyperbolicPoint project_to_manifold(std::span<const double> raw, Curvature kappa);
// Removes the component of `raw` along x: raw - kappa*<x,raw>_L*x.
TangentVector project_to_tangent(const HyperbolicPoint& x, std::span<const double> raw);

// ---- differentiable, row-stacked ------------------------------------------
//
// Points are [N x (n+1)] tensors, tangent vectors at the origin are given by
// their n space coordinates ([N x n]; the time coordinate is identically 0).
// `kappa` is a [1] tensor holding the curvature value.

diff::Tensor curvature_value(const diff::Tensor& theta);
diff::Tensor lorentz_inner(const diff::Tensor& x, const diff::Tensor& y);
diff::Tensor distance(const diff::Tensor& x, const diff::Tensor& y, const diff::Tensor& kappa);
diff::Tensor expmap0(const diff::Tensor& tangent, const diff::Tensor& kappa);
diff::Tensor logmap0(const diff::Tensor& points, const diff::Tensor& kappa);
diff::Tensor project_to_manifold(const diff::Tensor& space, const diff::Tensor& kappa);

// sinh(sqrt(q))/sqrt(q) and asinh(sqrt(q))/sqrt(q), smooth through q = 0.
double sinhc_sq(double q);
double asinhc_sq(double q);

// Origin chart used by the learners. In Euclidean mode exp/log are identity
// and `kappa` is unused, which is the no-hyperbolic ablation.
class OriginChart {
 public:
  OriginChart(diff::Tensor kappa, bool euclidean) : kappa_(std::move(kappa)), euclidean_(euclidean) {}

  diff::Tensor exp0(const diff::Tensor& tangent) const;
  diff::Tensor log0(const diff::Tensor& points) const;
  bool euclidean() const noexcept { return euclidean_; }
  const diff::Tensor& kappa() const noexcept { return kappa_; }

 private:
  diff::Tensor kappa_;
  bool euclidean_;
};

}  // namespace hypkt::manifold
