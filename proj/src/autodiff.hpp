#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

namespace nrib::ad {

using Mat = Eigen::MatrixXd;

class Graph;

// Lightweight handle into a Graph's node arena.
struct Var {
  Graph* g = nullptr;
  int id = -1;
  bool valid() const { return g != nullptr && id >= 0; }
};

// Reverse-mode tape over dense 64-bit matrices. One Graph per forward pass;
// nodes are created in topological order, backward() walks them in reverse.
class Graph {
 public:
  Var constant(Mat v);              // no gradient flows into it
  Var input(Mat v);                 // leaf with gradient (parameters, attacked features)

  const Mat& value(Var v) const;
  const Mat& grad(Var v) const;     // valid after backward(); zero matrix if untouched
  void backward(Var scalar_loss);   // loss must be 1x1
  size_t num_nodes() const { return nodes_.size(); }

  // Arithmetic
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var neg(Var a);
  Var mul(Var a, Var b);            // elementwise
  Var div(Var a, Var b);            // elementwise
  Var add_rowvec(Var a, Var row);   // broadcast 1xk over rows
  Var mul_rowvec(Var a, Var row);
  Var mul_colvec(Var a, Var col);   // broadcast Nx1 over columns
  Var scalar_mul(Var a, double c);
  Var scalar_add(Var a, double c);
  Var matmul(Var a, Var b);

  // Elementwise nonlinear
  Var exp(Var a);
  Var safe_log(Var a);              // log(max(x, 1e-12))
  Var square(Var a);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var elu(Var a);
  Var tanh_fn(Var a);
  Var sigmoid(Var a);
  Var clamp(Var a, double lo, double hi);  // pass-through gradient strictly inside

  // Reductions / shape
  Var sum(Var a);                   // -> 1x1
  Var mean_all(Var a);              // -> 1x1
  Var rowwise_sum(Var a);           // Nxk -> Nx1
  Var softmax_rows(Var a);
  Var logsumexp_rows(Var a);        // Nxk -> Nx1
  Var hcat(Var a, Var b);
  Var gather_rows(Var a, std::vector<int> idx);

  // Graph-attention helpers. `seg` maps each edge to its destination group;
  // groups need not be contiguous.
  Var segment_softmax(Var scores, std::vector<int> seg, int num_segments);
  Var edge_aggregate(Var alpha, Var h, std::vector<int> src, std::vector<int> dst, int num_rows);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool requires_grad = false;
    std::function<void(Graph&)> back;  // empty for leaves/constants
  };

  Var make(Mat value, bool requires_grad, std::function<void(Graph&)> back);
  Node& node(Var v);
  const Node& node(Var v) const;
  void accumulate(int id, const Mat& g);
  bool needs(Var v) const { return node(v).requires_grad; }

  std::vector<Node> nodes_;
};

constexpr double kLogFloor = 1e-12;

}  // namespace nrib::ad
