#pragma once

#include <vector>

#include "hypkt/diffcore.hpp"

namespace hypkt::diff {

// L2 norm over the gradients of all params (missing grads count as zero).
double grad_norm(const std::vector<Tensor>& params);

// Plain gradient descent with optional global-norm clipping.
class Sgd {
 public:
  Sgd(std::vector<Tensor> params, double lr, double clip_norm = 0.0);

  // Applies one update and returns the pre-clip gradient norm. Params must
  // be leaves.
  double step();
  void zero_grad();

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const std::vector<Tensor>& params() const { return params_; }

 private:
  std::vector<Tensor> params_;
  double lr_;
  double clip_norm_;
};

}  // namespace hypkt::diff
