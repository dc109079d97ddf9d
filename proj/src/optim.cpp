#include "hypkt/optim.hpp"

#include <cmath>

#include "hypkt/error.hpp"

namespace hypkt::diff {

double grad_norm(const std::vector<Tensor>& params) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) sq += g * g;
  return std::sqrt(sq);
}

Sgd::Sgd(std::vector<Tensor> params, double lr, double clip_norm)
    : params_(std::move(params)), lr_(lr), clip_norm_(clip_norm) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw Error(Errc::invalid_argument, "learning rate must be finite and >= 0");
  if (!(clip_norm >= 0.0)) throw Error(Errc::invalid_argument, "clip norm must be >= 0");
  for (const auto& p : params_) {
    if (!p.is_leaf() || !p.requires_grad()) throw Error(Errc::invalid_argument, "optimizer params must be grad leaves");
  }
}

double Sgd::step() {
  const double norm = grad_norm(params_);
  if (!std::isfinite(norm)) throw Error(Errc::divergence, "non-finite gradient norm");
  double scale = lr_;
  if (clip_norm_ > 0.0 && norm > clip_norm_) scale *= clip_norm_ / norm;
  if (scale == 0.0) return norm;
  for (auto& p : params_) {
    const auto g = p.grad();
    if (g.empty()) continue;
    auto v = p.mutable_data();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= scale * g[i];
  }
  return norm;
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

}  // namespace hypkt::diff
