#pragma once

#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace dygraft::nn {

using Mat = Eigen::MatrixXd;

// Reverse-mode autodiff over dense double matrices. A Tape owns the forward
// values and gradients for one loss evaluation; model code builds the graph
// through the op methods and calls backward() on a 1x1 loss node.
//
// Gradients of the transformer/attention stacks are checked against central
// finite differences in the test suite, so every op here must be exactly
// differentiable at the evaluation point (max/relu use the one-sided
// subgradient convention).
class Tape {
 public:
  struct Var {
    int idx = -1;
    bool valid() const { return idx >= 0; }
  };

  Var input(Mat value);                 // leaf, no gradient tracking
  Var param(Mat value);                 // leaf with gradient
  const Mat& val(Var v) const { return nodes_[v.idx].value; }
  const Mat& grad(Var v) const { return nodes_[v.idx].grad; }

  void backward(Var loss);              // loss must be 1x1

  // --- arithmetic ---
  Var add(Var a, Var b);                // same shape, or b is 1xC row broadcast
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);                // elementwise, same shape
  Var scale(Var a, double s);
  Var add_const(Var a, double c);
  Var matmul(Var a, Var b);
  Var transpose(Var a);

  // --- shape ---
  Var concat_cols(Var a, Var b);
  Var concat_rows(const std::vector<Var>& rows);
  Var slice_cols(Var a, int start, int n);
  Var slice_rows(Var a, int start, int n);
  Var gather_rows(Var table, const std::vector<int>& rows);  // scatter-add back

  // --- nonlinearities ---
  Var relu(Var a);
  Var tanh(Var a);
  Var sigmoid(Var a);
  Var sin(Var a);

  // --- reductions / fused ---
  Var softmax_rows(Var a);              // per-row softmax
  Var colwise_max(Var a);               // NxD -> 1xD, grad to first argmax
  Var mean_rows(Var a);                 // NxD -> 1xD
  Var sum_rows(Var a);                  // NxD -> 1xD
  Var sum(Var a);                       // -> 1x1

  // Row of logits (1xC) vs target index: -log softmax(logits)[target].
  Var softmax_cross_entropy(Var logits, int target);
  // Scores Nx1 with 0/1 labels: sum of binary cross-entropy with logits.
  Var bce_with_logits(Var scores, const std::vector<double>& labels);

  int size() const { return static_cast<int>(nodes_.size()); }

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void()> backprop;     // empty for leaves
  };

  Var make(Mat value, bool needs_grad, std::function<void()> backprop = {});
  Mat& grad_mut(Var v) { return nodes_[v.idx].grad; }
  bool needs(Var v) const { return nodes_[v.idx].needs_grad; }

  std::vector<Node> nodes_;
};

// Named parameter matrices with accumulated gradients and Adam state.
// Models bind entries onto a Tape per loss evaluation via ParamBinding.
class ParamStore {
 public:
  Mat& create(const std::string& name, int rows, int cols, double init_scale,
              std::mt19937_64& rng);
  Mat& create_zeros(const std::string& name, int rows, int cols);

  bool has(const std::string& name) const { return values_.count(name) > 0; }
  Mat& value(const std::string& name);
  const Mat& value(const std::string& name) const;
  Mat& grad(const std::string& name);
  void zero_grads();

  const std::map<std::string, Mat>& values() const { return values_; }
  std::map<std::string, Mat>& values_mut() { return values_; }

  void adam_step(double lr, double beta1 = 0.9, double beta2 = 0.999,
                 double eps = 1e-8);

 private:
  std::map<std::string, Mat> values_;
  std::map<std::string, Mat> grads_;
  std::map<std::string, Mat> adam_m_, adam_v_;
  long adam_t_ = 0;
};

// Binds ParamStore entries as tape leaves, once each, and flushes tape
// gradients back into the store after backward().
class ParamBinding {
 public:
  ParamBinding(ParamStore& store, Tape& tape) : store_(store), tape_(tape) {}

  Tape::Var operator[](const std::string& name);
  void flush_grads();

 private:
  ParamStore& store_;
  Tape& tape_;
  std::map<std::string, Tape::Var> bound_;
};

}  // namespace dygraft::nn
