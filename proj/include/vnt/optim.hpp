#pragma once

#include <cmath>
#include <vector>

#include "vnt/common.hpp"

namespace vnt {

// Adam with bias correction. Slots are positional: callers must pass the same
// parameter list in the same order on every step.
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<Matrix*>& params,
            const std::vector<const Matrix*>& grads) {
    if (params.size() != grads.size())
      throw shape_error("Adam::step: params/grads size mismatch");
    if (slots_.empty()) {
      slots_.resize(params.size());
      for (size_t i = 0; i < params.size(); ++i) {
        slots_[i].m = Matrix::Zero(params[i]->rows(), params[i]->cols());
        slots_[i].v = Matrix::Zero(params[i]->rows(), params[i]->cols());
      }
    }
    if (slots_.size() != params.size())
      throw shape_error("Adam::step: parameter count changed between steps");
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (size_t i = 0; i < params.size(); ++i) {
      Slot& s = slots_[i];
      const Matrix& g = *grads[i];
      s.m = beta1_ * s.m + (1.0 - beta1_) * g;
      s.v = beta2_ * s.v + (1.0 - beta2_) * g.cwiseProduct(g);
      Matrix mhat = s.m / bc1;
      Matrix vhat = s.v / bc2;
      params[i]->array() -=
          lr_ * mhat.array() / (vhat.array().sqrt() + eps_);
    }
  }

  double lr() const { return lr_; }

 private:
  struct Slot {
    Matrix m, v;
  };
  double lr_, beta1_, beta2_, eps_;
  std::vector<Slot> slots_;
  long t_ = 0;
};

}  // namespace vnt
