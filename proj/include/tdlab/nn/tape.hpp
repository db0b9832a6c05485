#pragma once

#include <Eigen/Dense>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace tdlab::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid for the tape that
// created it.
struct Var {
  int id = -1;
  Tape* tape = nullptr;
  bool valid() const { return id >= 0 && tape != nullptr; }
};

// Reverse-mode autodiff over dense double matrices. Nodes are appended in
// topological order; backward() walks them in reverse. All shapes are 2-D;
// scalars are 1x1 matrices.
class Tape {
 public:
  Var leaf(Matrix value, bool requires_grad = false);

  const Matrix& value(Var v) const;
  // Gradient of the last backward() target w.r.t. v (zeros if untouched).
  Matrix grad(Var v) const;

  // v must be 1x1. Clears previous gradients.
  void backward(Var v);

  std::size_t size() const { return nodes_.size(); }

  // --- internal, used by op builders ---
  struct Node {
    Matrix value;
    Matrix grad;  // empty until touched
    bool requires_grad = false;
    std::function<void(Tape&)> back;  // pulls this node's grad into parents
  };
  int push(Matrix value, bool requires_grad, std::function<void(Tape&)> back);
  void accumulate(int id, const Matrix& g);
  Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

 private:
  std::vector<Node> nodes_;
};

// ---- elementwise / arithmetic ----
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var cmul(Var a, Var b);              // elementwise product
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var abs(Var a);

// ---- shape plumbing ----
Var gather_rows(Var a, std::vector<int> idx);
Var concat_rows(std::span<const Var> parts);
Var slice_rows(Var a, int row0, int nrows);
Var concat_cols(std::span<const Var> parts);
Var slice_cols(Var a, int col0, int ncols);
Var add_rowvec(Var a, Var row);      // broadcast a 1xD row over all rows of a

// ---- reductions ----
Var sum_all(Var a);                  // -> 1x1
Var mean_all(Var a);                 // -> 1x1
Var mean_rows(Var a);                // SxD -> 1xD

// ---- nonlinearities / norms ----
Var gelu(Var a);                     // tanh approximation
Var softmax_rows(Var a);
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps = 1e-5);
Var l2_normalize_rows(Var a, double eps = 1e-12);
Var cosine_rowvec(Var a, Var b);     // 1xD, 1xD -> 1x1

// ---- losses ----
// Mean over rows of -log softmax(logits)[target].
Var cross_entropy_rows(Var logits, std::vector<int> targets);
// Binary cross-entropy with a 1x1 logit and a hard label in {0,1}.
Var bce_with_logit(Var logit, double target);

// Value passes through; gradient does not.
Var stop_gradient(Var a);

// L1 distance between two same-shape values, mean or sum over entries.
Var l1_distance(Var a, Var b, bool mean_reduction);

}  // namespace tdlab::nn
