#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <vector>

#include "veilprobe/errors.hpp"

namespace veilprobe {

// Row-major double matrix.
struct Mat {
  int rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(int r, int c, double fill = 0.0) : rows(r), cols(c), a(static_cast<size_t>(r) * c, fill) {}

  double& at(int r, int c) { return a[static_cast<size_t>(r) * cols + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * cols + c]; }
  double* row(int r) { return a.data() + static_cast<size_t>(r) * cols; }
  const double* row(int r) const { return a.data() + static_cast<size_t>(r) * cols; }
  size_t size() const { return a.size(); }
};

// Reverse-mode autodiff over Mat values. Nodes form a tape; parameters are
// long-lived nodes created outside any tape whose gradients accumulate until
// an optimizer consumes them. Values are doubles throughout so analytic
// gradients can be checked against central differences tightly.
struct Node {
  Mat value;
  Mat grad;
  bool requires_grad = false;
  std::function<void()> backward_fn;  // pushes this->grad into parents
  std::vector<std::shared_ptr<Node>> parents;
};

using NodeRef = std::shared_ptr<Node>;

NodeRef make_param(Mat value);
NodeRef make_input(Mat value);

class Tape {
 public:
  NodeRef input(Mat value);

  NodeRef matmul(NodeRef a, NodeRef b);     // [m,k]x[k,n]
  NodeRef matmul_nt(NodeRef a, NodeRef b);  // [m,k]x[n,k]^T -> [m,n]
  NodeRef add(NodeRef a, NodeRef b);
  NodeRef sub(NodeRef a, NodeRef b);
  NodeRef mul(NodeRef a, NodeRef b);              // elementwise
  NodeRef affine(NodeRef a, double s, double c);  // s*a + c
  NodeRef add_rowwise(NodeRef a, NodeRef bias);   // bias is [1,n]
  NodeRef tanh(NodeRef a);
  NodeRef relu(NodeRef a);
  NodeRef exp(NodeRef a);
  NodeRef clamp(NodeRef a, double lo, double hi);  // pass-through grad inside range
  NodeRef softmax_rows(NodeRef a);
  NodeRef layernorm_rows(NodeRef a, NodeRef gamma, NodeRef beta, double eps = 1e-5);
  NodeRef embedding(NodeRef table, const std::vector<int>& ids);
  NodeRef slice_cols(NodeRef a, int from, int width);
  NodeRef concat_cols(const std::vector<NodeRef>& parts);
  NodeRef reduce_sum(NodeRef a);  // [1,1]
  // Pairwise squared Euclidean distances: [m,k],[p,k] -> [m,p].
  NodeRef pairwise_sqdist(NodeRef q, NodeRef c);
  // Sum over rows of -log softmax(logits)[row, target]. Numerically stable.
  NodeRef cross_entropy_rows(NodeRef logits, const std::vector<int>& targets);

  // Seeds d(loss)/d(loss) = 1 and walks the tape in reverse. `loss` must be 1x1.
  void backward(NodeRef loss);

 private:
  NodeRef push(Mat value, std::vector<NodeRef> parents);
  std::vector<NodeRef> order_;
};

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<Mat> m, v;

  // Applies one update using the gradients accumulated on the params,
  // scaled by grad_scale, then zeroes them.
  void step(const std::vector<NodeRef>& params, double grad_scale = 1.0);
};

void zero_grads(const std::vector<NodeRef>& params);

// Xavier-uniform initialization, deterministic per rng.
Mat xavier_init(int rows, int cols, std::mt19937_64& rng);

}  // namespace veilprobe
