#include "tdlab/nn/optim.hpp"

#include <cmath>

namespace tdlab::nn {

double Optimizer::current_lr() const {
  if (cfg_.warmup_steps <= 0) return cfg_.lr;
  int next = t_ + 1;
  if (next >= cfg_.warmup_steps) return cfg_.lr;
  return cfg_.lr * static_cast<double>(next) / static_cast<double>(cfg_.warmup_steps);
}

void Optimizer::step(ParamStore& params, const GradMap& grads) {
  double lr = current_lr();
  ++t_;
  for (auto& [name, p] : params.all()) {
    auto it = grads.find(name);
    if (it == grads.end() || it->second.size() == 0) continue;
    const Matrix& g = it->second;
    if (cfg_.kind == OptimKind::Sgd) {
      p -= lr * g;
      continue;
    }
    Matrix& m = m_.try_emplace(name, Matrix::Zero(p.rows(), p.cols())).first->second;
    Matrix& v = v_.try_emplace(name, Matrix::Zero(p.rows(), p.cols())).first->second;
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
    double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
    Matrix mhat = m / bc1;
    Matrix denom = (v / bc2).cwiseSqrt() + Matrix::Constant(p.rows(), p.cols(), cfg_.eps);
    p -= lr * mhat.cwiseQuotient(denom);
  }
}

}  // namespace tdlab::nn
