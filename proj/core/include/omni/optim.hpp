#pragma once

#include <vector>

#include "omni/tensor.hpp"

namespace omni {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Plain gradient descent: p -= lr * grad.
class Sgd {
 public:
  explicit Sgd(std::vector<Tensor> params) : params_(std::move(params)) {}
  void step(double lr);
  void zero_grad();

 private:
  std::vector<Tensor> params_;
};

class Adam {
 public:
  explicit Adam(std::vector<Tensor> params, AdamConfig cfg = {});
  // Parameters without a gradient (never reached by backward) are skipped.
  void step(double lr);
  void zero_grad();
  long steps() const { return t_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  long t_ = 0;
};

}  // namespace omni
