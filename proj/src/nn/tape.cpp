#include "tdlab/nn/tape.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace tdlab::nn {

namespace {

void check_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw std::logic_error("vars belong to different tapes");
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

int Tape::push(Matrix value, bool requires_grad, std::function<void(Tape&)> back) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.back = std::move(back);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Var Tape::leaf(Matrix value, bool requires_grad) {
  int id = push(std::move(value), requires_grad, nullptr);
  return Var{id, this};
}

const Matrix& Tape::value(Var v) const { return node(v.id).value; }

Matrix Tape::grad(Var v) const {
  const Node& n = node(v.id);
  if (n.grad.size() == 0) return Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

void Tape::accumulate(int id, const Matrix& g) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (!n.requires_grad) return;
  if (n.grad.size() == 0) {
    n.grad = g;
  } else {
    n.grad += g;
  }
}

void Tape::backward(Var v) {
  if (v.tape != this) throw std::logic_error("backward on foreign var");
  Node& target = node(v.id);
  if (target.value.rows() != 1 || target.value.cols() != 1)
    throw std::logic_error("backward target must be 1x1");
  for (auto& n : nodes_) n.grad.resize(0, 0);
  target.grad = Matrix::Ones(1, 1);
  for (int i = v.id; i >= 0; --i) {
    Node& n = nodes_[static_cast<std::size_t>(i)];
    if (n.grad.size() != 0 && n.back) n.back(*this);
  }
}

namespace {

// Helper: make a node whose backward accumulates into one parent.
Var unary(Var a, Matrix value, std::function<Matrix(const Matrix& g, Tape&)> pull) {
  Tape& t = *a.tape;
  bool rg = t.node(a.id).requires_grad;
  int pid = a.id;
  int id = t.push(std::move(value), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, pid, pull = std::move(pull)](Tape& tp) {
      tp.accumulate(pid, pull(tp.node(id).grad, tp));
    };
  }
  return Var{id, a.tape};
}

}  // namespace

Var add(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
  int ia = a.id, ib = b.id;
  int id = t.push(t.value(a) + t.value(b), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, ib](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      tp.accumulate(ia, g);
      tp.accumulate(ib, g);
    };
  }
  return Var{id, a.tape};
}

Var sub(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
  int ia = a.id, ib = b.id;
  int id = t.push(t.value(a) - t.value(b), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, ib](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      tp.accumulate(ia, g);
      tp.accumulate(ib, -g);
    };
  }
  return Var{id, a.tape};
}

Var cmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
  int ia = a.id, ib = b.id;
  int id = t.push(t.value(a).cwiseProduct(t.value(b)), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, ib](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      tp.accumulate(ia, g.cwiseProduct(tp.node(ib).value));
      tp.accumulate(ib, g.cwiseProduct(tp.node(ia).value));
    };
  }
  return Var{id, a.tape};
}

Var scale(Var a, double c) {
  return unary(a, a.tape->value(a) * c,
               [c](const Matrix& g, Tape&) { return Matrix(g * c); });
}

Var add_scalar(Var a, double c) {
  return unary(a, a.tape->value(a).array() + c,
               [](const Matrix& g, Tape&) { return g; });
}

Var matmul(Var a, Var b) {
  check_same_tape(a, b);
  Tape& t = *a.tape;
  if (t.value(a).cols() != t.value(b).rows())
    throw std::logic_error("matmul shape mismatch");
  bool rg = t.node(a.id).requires_grad || t.node(b.id).requires_grad;
  int ia = a.id, ib = b.id;
  int id = t.push(t.value(a) * t.value(b), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, ib](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      tp.accumulate(ia, g * tp.node(ib).value.transpose());
      tp.accumulate(ib, tp.node(ia).value.transpose() * g);
    };
  }
  return Var{id, a.tape};
}

Var transpose(Var a) {
  return unary(a, a.tape->value(a).transpose(),
               [](const Matrix& g, Tape&) { return Matrix(g.transpose()); });
}

Var abs(Var a) {
  Matrix sign = a.tape->value(a).unaryExpr(
      [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
  return unary(a, a.tape->value(a).cwiseAbs(),
               [sign](const Matrix& g, Tape&) { return Matrix(g.cwiseProduct(sign)); });
}

Var gather_rows(Var a, std::vector<int> idx) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  Matrix out(static_cast<Eigen::Index>(idx.size()), av.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || idx[i] >= av.rows())
      throw std::out_of_range("gather_rows index out of range");
    out.row(static_cast<Eigen::Index>(i)) = av.row(idx[i]);
  }
  bool rg = t.node(a.id).requires_grad;
  int ia = a.id;
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, idx = std::move(idx)](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      Matrix acc = Matrix::Zero(tp.node(ia).value.rows(), tp.node(ia).value.cols());
      for (std::size_t i = 0; i < idx.size(); ++i)
        acc.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
      tp.accumulate(ia, acc);
    };
  }
  return Var{id, a.tape};
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::logic_error("concat_rows: empty");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = 0;
  Eigen::Index cols = t.value(parts[0]).cols();
  bool rg = false;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    rows += t.value(p).rows();
    if (t.value(p).cols() != cols) throw std::logic_error("concat_rows: col mismatch");
    rg = rg || t.node(p.id).requires_grad;
  }
  Matrix out(rows, cols);
  Eigen::Index r = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets, sizes;
  for (const Var& p : parts) {
    Eigen::Index n = t.value(p).rows();
    out.middleRows(r, n) = t.value(p);
    ids.push_back(p.id);
    offsets.push_back(r);
    sizes.push_back(n);
    r += n;
  }
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ids, offsets, sizes](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      for (std::size_t i = 0; i < ids.size(); ++i)
        tp.accumulate(ids[i], g.middleRows(offsets[i], sizes[i]));
    };
  }
  return Var{id, parts[0].tape};
}

Var slice_rows(Var a, int row0, int nrows) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (row0 < 0 || row0 + nrows > av.rows()) throw std::out_of_range("slice_rows");
  bool rg = t.node(a.id).requires_grad;
  int ia = a.id;
  int id = t.push(av.middleRows(row0, nrows), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, row0, nrows](Tape& tp) {
      Matrix acc = Matrix::Zero(tp.node(ia).value.rows(), tp.node(ia).value.cols());
      acc.middleRows(row0, nrows) = tp.node(id).grad;
      tp.accumulate(ia, acc);
    };
  }
  return Var{id, a.tape};
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::logic_error("concat_cols: empty");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = 0;
  Eigen::Index rows = t.value(parts[0]).rows();
  bool rg = false;
  for (const Var& p : parts) {
    check_same_tape(parts[0], p);
    cols += t.value(p).cols();
    if (t.value(p).rows() != rows) throw std::logic_error("concat_cols: row mismatch");
    rg = rg || t.node(p.id).requires_grad;
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  std::vector<int> ids;
  std::vector<Eigen::Index> offsets, sizes;
  for (const Var& p : parts) {
    Eigen::Index n = t.value(p).cols();
    out.middleCols(c, n) = t.value(p);
    ids.push_back(p.id);
    offsets.push_back(c);
    sizes.push_back(n);
    c += n;
  }
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ids, offsets, sizes](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      for (std::size_t i = 0; i < ids.size(); ++i)
        tp.accumulate(ids[i], g.middleCols(offsets[i], sizes[i]));
    };
  }
  return Var{id, parts[0].tape};
}

Var slice_cols(Var a, int col0, int ncols) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  if (col0 < 0 || col0 + ncols > av.cols()) throw std::out_of_range("slice_cols");
  bool rg = t.node(a.id).requires_grad;
  int ia = a.id;
  int id = t.push(av.middleCols(col0, ncols), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, col0, ncols](Tape& tp) {
      Matrix acc = Matrix::Zero(tp.node(ia).value.rows(), tp.node(ia).value.cols());
      acc.middleCols(col0, ncols) = tp.node(id).grad;
      tp.accumulate(ia, acc);
    };
  }
  return Var{id, a.tape};
}

Var add_rowvec(Var a, Var row) {
  check_same_tape(a, row);
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  const Matrix& rv = t.value(row);
  if (rv.rows() != 1 || rv.cols() != av.cols())
    throw std::logic_error("add_rowvec shape mismatch");
  Matrix out = av;
  out.rowwise() += rv.row(0);
  bool rg = t.node(a.id).requires_grad || t.node(row.id).requires_grad;
  int ia = a.id, ir = row.id;
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, ir](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      tp.accumulate(ia, g);
      tp.accumulate(ir, g.colwise().sum());
    };
  }
  return Var{id, a.tape};
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  Matrix out(1, 1);
  out(0, 0) = t.value(a).sum();
  int ia = a.id;
  bool rg = t.node(a.id).requires_grad;
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia](Tape& tp) {
      double g = tp.node(id).grad(0, 0);
      tp.accumulate(ia, Matrix::Constant(tp.node(ia).value.rows(),
                                         tp.node(ia).value.cols(), g));
    };
  }
  return Var{id, a.tape};
}

Var mean_all(Var a) {
  double n = static_cast<double>(a.tape->value(a).size());
  return scale(sum_all(a), 1.0 / n);
}

Var mean_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& av = t.value(a);
  double n = static_cast<double>(av.rows());
  Matrix out = av.colwise().mean();
  bool rg = t.node(a.id).requires_grad;
  int ia = a.id;
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, n](Tape& tp) {
      const Matrix& g = tp.node(id).grad;  // 1xD
      Matrix acc(tp.node(ia).value.rows(), tp.node(ia).value.cols());
      for (Eigen::Index r = 0; r < acc.rows(); ++r) acc.row(r) = g.row(0) / n;
      tp.accumulate(ia, acc);
    };
  }
  return Var{id, a.tape};
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  Matrix y = x.unaryExpr([](double v) {
    double inner = kGeluC * (v + kGeluA * v * v * v);
    return 0.5 * v * (1.0 + std::tanh(inner));
  });
  Matrix dydx = x.unaryExpr([](double v) {
    double inner = kGeluC * (v + kGeluA * v * v * v);
    double th = std::tanh(inner);
    double sech2 = 1.0 - th * th;
    return 0.5 * (1.0 + th) + 0.5 * v * sech2 * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
  });
  return unary(a, std::move(y), [dydx](const Matrix& g, Tape&) {
    return Matrix(g.cwiseProduct(dydx));
  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    y.row(r) = e / e.sum();
  }
  bool rg = t.node(a.id).requires_grad;
  int ia = a.id;
  int id = t.push(y, rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      const Matrix& yv = tp.node(id).value;
      Matrix dx(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        double dot = g.row(r).dot(yv.row(r));
        dx.row(r) = yv.row(r).cwiseProduct(g.row(r) - Eigen::RowVectorXd::Constant(g.cols(), dot));
      }
      tp.accumulate(ia, dx);
    };
  }
  return Var{id, a.tape};
}

Var layer_norm_rows(Var x, Var gamma, Var beta, double eps) {
  check_same_tape(x, gamma);
  check_same_tape(x, beta);
  Tape& t = *x.tape;
  const Matrix& xv = t.value(x);
  const Matrix& gv = t.value(gamma);
  const Matrix& bv = t.value(beta);
  Eigen::Index D = xv.cols();
  if (gv.rows() != 1 || gv.cols() != D || bv.rows() != 1 || bv.cols() != D)
    throw std::logic_error("layer_norm: gamma/beta must be 1xD");
  Matrix xhat(xv.rows(), D);
  Eigen::VectorXd inv_std(xv.rows());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    double mu = xv.row(r).mean();
    double var = (xv.row(r).array() - mu).square().mean();
    double is = 1.0 / std::sqrt(var + eps);
    inv_std(r) = is;
    xhat.row(r) = (xv.row(r).array() - mu) * is;
  }
  Matrix y = xhat;
  for (Eigen::Index r = 0; r < y.rows(); ++r)
    y.row(r) = xhat.row(r).cwiseProduct(gv.row(0)) + bv.row(0);
  bool rg = t.node(x.id).requires_grad || t.node(gamma.id).requires_grad ||
            t.node(beta.id).requires_grad;
  int ix = x.id, ig = gamma.id, ib = beta.id;
  int id = t.push(std::move(y), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ix, ig, ib, xhat, inv_std](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      const Matrix& gv2 = tp.node(ig).value;
      Eigen::Index D2 = g.cols();
      Matrix dx(g.rows(), D2);
      Matrix dgamma = Matrix::Zero(1, D2);
      Matrix dbeta = Matrix::Zero(1, D2);
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        Eigen::RowVectorXd dxhat = g.row(r).cwiseProduct(gv2.row(0));
        double m1 = dxhat.mean();
        double m2 = dxhat.cwiseProduct(xhat.row(r)).mean();
        dx.row(r) = inv_std(r) *
                    (dxhat.array() - m1 - xhat.row(r).array() * m2).matrix();
        dgamma.row(0) += g.row(r).cwiseProduct(xhat.row(r));
        dbeta.row(0) += g.row(r);
      }
      tp.accumulate(ix, dx);
      tp.accumulate(ig, dgamma);
      tp.accumulate(ib, dbeta);
    };
  }
  return Var{id, x.tape};
}

Var l2_normalize_rows(Var a, double eps) {
  Tape& t = *a.tape;
  const Matrix& x = t.value(a);
  Matrix y(x.rows(), x.cols());
  Eigen::VectorXd norms(x.rows());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    double n = std::sqrt(x.row(r).squaredNorm() + eps);
    norms(r) = n;
    y.row(r) = x.row(r) / n;
  }
  bool rg = t.node(a.id).requires_grad;
  int ia = a.id;
  int id = t.push(y, rg, nullptr);
  if (rg) {
    t.node(id).back = [id, ia, norms](Tape& tp) {
      const Matrix& g = tp.node(id).grad;
      const Matrix& yv = tp.node(id).value;
      Matrix dx(g.rows(), g.cols());
      for (Eigen::Index r = 0; r < g.rows(); ++r) {
        double dot = g.row(r).dot(yv.row(r));
        dx.row(r) = (g.row(r) - yv.row(r) * dot) / norms(r);
      }
      tp.accumulate(ia, dx);
    };
  }
  return Var{id, a.tape};
}

Var cosine_rowvec(Var a, Var b) {
  Var an = l2_normalize_rows(a);
  Var bn = l2_normalize_rows(b);
  return sum_all(cmul(an, bn));
}

Var cross_entropy_rows(Var logits, std::vector<int> targets) {
  Tape& t = *logits.tape;
  const Matrix& x = t.value(logits);
  if (static_cast<Eigen::Index>(targets.size()) != x.rows())
    throw std::logic_error("cross_entropy: target count mismatch");
  double total = 0.0;
  Matrix probs(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    int tr = targets[static_cast<std::size_t>(r)];
    if (tr < 0 || tr >= x.cols()) throw std::out_of_range("cross_entropy target");
    double m = x.row(r).maxCoeff();
    Eigen::ArrayXd e = (x.row(r).array() - m).exp();
    double lse = m + std::log(e.sum());
    probs.row(r) = e / e.sum();
    total += lse - x(r, tr);
  }
  double n = static_cast<double>(x.rows());
  Matrix out(1, 1);
  out(0, 0) = total / n;
  bool rg = t.node(logits.id).requires_grad;
  int il = logits.id;
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, il, probs, targets, n](Tape& tp) {
      double g = tp.node(id).grad(0, 0);
      Matrix dx = probs;
      for (Eigen::Index r = 0; r < dx.rows(); ++r)
        dx(r, targets[static_cast<std::size_t>(r)]) -= 1.0;
      tp.accumulate(il, dx * (g / n));
    };
  }
  return Var{id, logits.tape};
}

Var bce_with_logit(Var logit, double target) {
  Tape& t = *logit.tape;
  const Matrix& z = t.value(logit);
  if (z.rows() != 1 || z.cols() != 1) throw std::logic_error("bce: logit must be 1x1");
  double zv = z(0, 0);
  // stable: log(1+exp(-|z|)) + max(z,0) - z*y
  double loss = std::log1p(std::exp(-std::fabs(zv))) + std::max(zv, 0.0) - zv * target;
  double sig = 1.0 / (1.0 + std::exp(-zv));
  Matrix out(1, 1);
  out(0, 0) = loss;
  bool rg = t.node(logit.id).requires_grad;
  int il = logit.id;
  int id = t.push(std::move(out), rg, nullptr);
  if (rg) {
    t.node(id).back = [id, il, sig, target](Tape& tp) {
      double g = tp.node(id).grad(0, 0);
      Matrix dx(1, 1);
      dx(0, 0) = (sig - target) * g;
      tp.accumulate(il, dx);
    };
  }
  return Var{id, logit.tape};
}

Var stop_gradient(Var a) {
  Tape& t = *a.tape;
  int id = t.push(t.value(a), false, nullptr);
  return Var{id, a.tape};
}

Var l1_distance(Var a, Var b, bool mean_reduction) {
  Var d = abs(sub(a, b));
  return mean_reduction ? mean_all(d) : sum_all(d);
}

}  // namespace tdlab::nn
