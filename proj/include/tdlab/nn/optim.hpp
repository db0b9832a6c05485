#pragma once

#include "tdlab/nn/params.hpp"

namespace tdlab::nn {

enum class OptimKind { Sgd, Adam };

struct OptimConfig {
  OptimKind kind = OptimKind::Adam;
  double lr = 3e-4;
  int warmup_steps = 0;  // linear warmup from 0 to lr, then constant
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Optimizer {
 public:
  explicit Optimizer(OptimConfig cfg) : cfg_(cfg) {}

  // lr that will be used by the next step()
  double current_lr() const;
  int steps_taken() const { return t_; }

  void step(ParamStore& params, const GradMap& grads);

 private:
  OptimConfig cfg_;
  int t_ = 0;
  std::map<std::string, Matrix> m_, v_;
};

}  // namespace tdlab::nn
