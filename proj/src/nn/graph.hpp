#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph is a tape: every op appends a node holding its value and a closure
// that propagates the node's gradient into its inputs. Leaves either wrap a
// Param (gradients accumulate into Param::grad) or a constant. Graphs are
// single-use; build one per forward/backward pass.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace duet::nn {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vec = Eigen::VectorXd;

/// Trainable tensor with its gradient and AdamW moments.
struct Param {
  std::string name;
  Mat value;
  mutable Mat grad;
  Mat m1, m2;
  bool trainable = true;
  // Rows excluded from updates even when the parameter is trainable. Used to
  // freeze the text rows of the shared embedding/output tables.
  std::vector<bool> frozen_rows;

  Param() = default;
  Param(std::string n, Mat v) : name(std::move(n)), value(std::move(v)) {
    grad = Mat::Zero(value.rows(), value.cols());
  }
  void zero_grad() const { grad.setZero(value.rows(), value.cols()); }
};

class Graph;

/// Handle to a node on a Graph tape.
struct Var {
  int id = -1;
  [[nodiscard]] bool valid() const { return id >= 0; }
};

class Graph {
 public:
  /// With grad disabled, parameters enter as constants and no closures are kept.
  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Leaves
  Var param(const Param& p);
  Var constant(Mat value);

  [[nodiscard]] const Mat& value(Var v) const { return nodes_[v.id].value; }
  [[nodiscard]] const Mat& grad(Var v) const { return nodes_[v.id].grad; }
  [[nodiscard]] double scalar(Var v) const { return nodes_[v.id].value(0, 0); }
  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

  // Linear algebra
  Var matmul(Var a, Var b);     // a * b
  Var matmul_nt(Var a, Var b);  // a * b^T
  Var transpose(Var a);

  // Elementwise
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double s);
  Var add_row(Var a, Var row);  // broadcast a 1 x n row over every row of a
  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var gelu(Var a);
  Var dropout(Var a, double p, std::mt19937_64& rng);

  // Row-wise
  Var softmax_rows(Var a, bool causal = false);
  Var layer_norm(Var a, Var gamma, Var beta, double eps = 1e-5);

  // Shape
  Var slice_cols(Var a, int start, int count);
  Var slice_rows(Var a, int start, int count);
  Var concat_cols(std::span<const Var> parts);
  Var concat_rows(std::span<const Var> parts);
  Var gather_rows(Var table, std::span<const int> rows);

  // Reductions and losses (all return 1 x 1)
  Var sum(Var a);
  Var mean(Var a);
  Var mse(Var a, const Mat& target);
  Var cross_entropy(Var logits, std::span<const int> targets, std::span<const double> weights);

  // Recurrent
  Var gru_cell(Var gx, Var h, Var w_h, Var b_h);

  // Value of `forward`, gradient passed to `through` unchanged.
  Var straight_through(Var through, const Mat& forward);

  void backward(Var loss);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    const Param* param = nullptr;
    std::function<void(Graph&, int)> back;
  };

  Var push(Mat value, bool needs_grad, std::function<void(Graph&, int)> back);
  [[nodiscard]] bool needs(Var v) const { return nodes_[v.id].needs_grad; }
  Mat& accum(Var v);

  std::vector<Node> nodes_;
  bool grad_enabled_ = true;
};

}  // namespace duet::nn
