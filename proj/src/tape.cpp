#include "dygraft/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace dygraft::nn {

Tape::Var Tape::make(Mat value, bool needs_grad, std::function<void()> backprop) {
  Node n;
  n.grad = Mat::Zero(value.rows(), value.cols());
  n.value = std::move(value);
  n.needs_grad = needs_grad;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return {static_cast<int>(nodes_.size()) - 1};
}

Tape::Var Tape::input(Mat value) { return make(std::move(value), false); }
Tape::Var Tape::param(Mat value) { return make(std::move(value), true); }

void Tape::backward(Var loss) {
  if (val(loss).rows() != 1 || val(loss).cols() != 1)
    throw std::invalid_argument("backward: loss must be 1x1");
  nodes_[loss.idx].grad(0, 0) = 1.0;
  for (int i = loss.idx; i >= 0; --i) {
    if (nodes_[i].needs_grad && nodes_[i].backprop) nodes_[i].backprop();
  }
}

Tape::Var Tape::add(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  bool bcast = B.rows() == 1 && A.rows() != 1 && A.cols() == B.cols();
  Mat out = bcast ? Mat(A.rowwise() + B.row(0)) : Mat(A + B);
  bool ng = needs(a) || needs(b);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  nodes_[o.idx].backprop = [this, a, b, o, bcast]() {
    const Mat& g = grad(o);
    if (needs(a)) grad_mut(a) += g;
    if (needs(b)) {
      if (bcast)
        grad_mut(b) += g.colwise().sum();
      else
        grad_mut(b) += g;
    }
  };
  return o;
}

Tape::Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Tape::Var Tape::mul(Var a, Var b) {
  Mat out = val(a).cwiseProduct(val(b));
  bool ng = needs(a) || needs(b);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  nodes_[o.idx].backprop = [this, a, b, o]() {
    if (needs(a)) grad_mut(a) += grad(o).cwiseProduct(val(b));
    if (needs(b)) grad_mut(b) += grad(o).cwiseProduct(val(a));
  };
  return o;
}

Tape::Var Tape::scale(Var a, double s) {
  Var o = make(val(a) * s, needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o, s]() { grad_mut(a) += grad(o) * s; };
  return o;
}

Tape::Var Tape::add_const(Var a, double c) {
  Var o = make(val(a).array() + c, needs(a));
  if (needs(a)) nodes_[o.idx].backprop = [this, a, o]() { grad_mut(a) += grad(o); };
  return o;
}

Tape::Var Tape::matmul(Var a, Var b) {
  Mat out = val(a) * val(b);
  bool ng = needs(a) || needs(b);
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  nodes_[o.idx].backprop = [this, a, b, o]() {
    if (needs(a)) grad_mut(a) += grad(o) * val(b).transpose();
    if (needs(b)) grad_mut(b) += val(a).transpose() * grad(o);
  };
  return o;
}

Tape::Var Tape::transpose(Var a) {
  Var o = make(val(a).transpose(), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() { grad_mut(a) += grad(o).transpose(); };
  return o;
}

Tape::Var Tape::concat_cols(Var a, Var b) {
  const Mat& A = val(a);
  const Mat& B = val(b);
  if (A.rows() != B.rows()) throw std::invalid_argument("concat_cols: row mismatch");
  Mat out(A.rows(), A.cols() + B.cols());
  out << A, B;
  bool ng = needs(a) || needs(b);
  int ac = static_cast<int>(A.cols());  // before make(): push_back may invalidate A
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  nodes_[o.idx].backprop = [this, a, b, o, ac]() {
    const Mat& g = grad(o);
    if (needs(a)) grad_mut(a) += g.leftCols(ac);
    if (needs(b)) grad_mut(b) += g.rightCols(g.cols() - ac);
  };
  return o;
}

Tape::Var Tape::concat_rows(const std::vector<Var>& rows) {
  if (rows.empty()) throw std::invalid_argument("concat_rows: empty");
  int total = 0;
  bool ng = false;
  for (Var r : rows) {
    total += static_cast<int>(val(r).rows());
    ng = ng || needs(r);
  }
  Mat out(total, val(rows[0]).cols());
  int at = 0;
  for (Var r : rows) {
    out.middleRows(at, val(r).rows()) = val(r);
    at += static_cast<int>(val(r).rows());
  }
  Var o = make(std::move(out), ng);
  if (!ng) return o;
  auto parts = rows;
  nodes_[o.idx].backprop = [this, parts, o]() {
    int at = 0;
    for (Var r : parts) {
      int nr = static_cast<int>(val(r).rows());
      if (needs(r)) grad_mut(r) += grad(o).middleRows(at, nr);
      at += nr;
    }
  };
  return o;
}

Tape::Var Tape::slice_cols(Var a, int start, int n) {
  Var o = make(val(a).middleCols(start, n), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o, start, n]() {
      grad_mut(a).middleCols(start, n) += grad(o);
    };
  return o;
}

Tape::Var Tape::slice_rows(Var a, int start, int n) {
  Var o = make(val(a).middleRows(start, n), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o, start, n]() {
      grad_mut(a).middleRows(start, n) += grad(o);
    };
  return o;
}

Tape::Var Tape::gather_rows(Var table, const std::vector<int>& rows) {
  const Mat& T = val(table);
  Mat out(static_cast<int>(rows.size()), T.cols());
  for (size_t i = 0; i < rows.size(); ++i) out.row(static_cast<int>(i)) = T.row(rows[i]);
  Var o = make(std::move(out), needs(table));
  if (needs(table)) {
    auto idx = rows;
    nodes_[o.idx].backprop = [this, table, o, idx]() {
      for (size_t i = 0; i < idx.size(); ++i)
        grad_mut(table).row(idx[i]) += grad(o).row(static_cast<int>(i));
    };
  }
  return o;
}

Tape::Var Tape::relu(Var a) {
  Var o = make(val(a).cwiseMax(0.0), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      grad_mut(a) += grad(o).cwiseProduct(
          (val(a).array() > 0.0).cast<double>().matrix());
    };
  return o;
}

Tape::Var Tape::tanh(Var a) {
  Var o = make(val(a).array().tanh(), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      grad_mut(a) += grad(o).cwiseProduct(
          (1.0 - val(o).array().square()).matrix());
    };
  return o;
}

Tape::Var Tape::sigmoid(Var a) {
  Mat out = (1.0 / (1.0 + (-val(a).array()).exp()));
  Var o = make(std::move(out), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      grad_mut(a) += grad(o).cwiseProduct(
          (val(o).array() * (1.0 - val(o).array())).matrix());
    };
  return o;
}

Tape::Var Tape::sin(Var a) {
  Var o = make(val(a).array().sin(), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      grad_mut(a) += grad(o).cwiseProduct(val(a).array().cos().matrix());
    };
  return o;
}

Tape::Var Tape::softmax_rows(Var a) {
  const Mat& A = val(a);
  Mat out(A.rows(), A.cols());
  for (int r = 0; r < A.rows(); ++r) {
    Eigen::ArrayXd row = A.row(r).array() - A.row(r).maxCoeff();
    Eigen::ArrayXd e = row.exp();
    out.row(r) = (e / e.sum()).matrix();
  }
  Var o = make(std::move(out), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      const Mat& y = val(o);
      const Mat& g = grad(o);
      for (int r = 0; r < y.rows(); ++r) {
        double dot = g.row(r).dot(y.row(r));
        grad_mut(a).row(r) +=
            (y.row(r).array() * (g.row(r).array() - dot)).matrix();
      }
    };
  return o;
}

Tape::Var Tape::colwise_max(Var a) {
  const Mat& A = val(a);
  Mat out(1, A.cols());
  std::vector<int> arg(A.cols());
  for (int c = 0; c < A.cols(); ++c) {
    int r;
    out(0, c) = A.col(c).maxCoeff(&r);
    arg[c] = r;
  }
  Var o = make(std::move(out), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o, arg]() {
      for (int c = 0; c < grad(o).cols(); ++c)
        grad_mut(a)(arg[c], c) += grad(o)(0, c);
    };
  return o;
}

Tape::Var Tape::mean_rows(Var a) {
  double n = static_cast<double>(val(a).rows());
  Var o = make(val(a).colwise().mean(), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o, n]() {
      grad_mut(a).rowwise() += (grad(o).row(0) / n);
    };
  return o;
}

Tape::Var Tape::sum_rows(Var a) {
  Var o = make(val(a).colwise().sum(), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      grad_mut(a).rowwise() += grad(o).row(0);
    };
  return o;
}

Tape::Var Tape::sum(Var a) {
  Mat out(1, 1);
  out(0, 0) = val(a).sum();
  Var o = make(std::move(out), needs(a));
  if (needs(a))
    nodes_[o.idx].backprop = [this, a, o]() {
      grad_mut(a).array() += grad(o)(0, 0);
    };
  return o;
}

Tape::Var Tape::softmax_cross_entropy(Var logits, int target) {
  const Mat& L = val(logits);
  if (L.rows() != 1) throw std::invalid_argument("softmax_cross_entropy: want 1xC");
  Eigen::ArrayXd shifted = L.row(0).array() - L.row(0).maxCoeff();
  Eigen::ArrayXd e = shifted.exp();
  double z = e.sum();
  Mat out(1, 1);
  out(0, 0) = std::log(z) - shifted(target);
  Var o = make(std::move(out), needs(logits));
  if (needs(logits)) {
    Eigen::RowVectorXd p = (e / z).matrix().transpose();
    nodes_[o.idx].backprop = [this, logits, o, p, target]() {
      Eigen::RowVectorXd g = p;
      g(target) -= 1.0;
      grad_mut(logits).row(0) += grad(o)(0, 0) * g;
    };
  }
  return o;
}

Tape::Var Tape::bce_with_logits(Var scores, const std::vector<double>& labels) {
  const Mat& S = val(scores);
  if (S.cols() != 1 || static_cast<size_t>(S.rows()) != labels.size())
    throw std::invalid_argument("bce_with_logits: shape mismatch");
  double total = 0.0;
  for (size_t i = 0; i < labels.size(); ++i) {
    double s = S(static_cast<int>(i), 0);
    // log(1 + exp(-|s|)) + max(s,0) - y*s, numerically stable
    total += std::log1p(std::exp(-std::abs(s))) + std::max(s, 0.0) - labels[i] * s;
  }
  Mat out(1, 1);
  out(0, 0) = total;
  Var o = make(std::move(out), needs(scores));
  if (needs(scores)) {
    auto y = labels;
    nodes_[o.idx].backprop = [this, scores, o, y]() {
      for (size_t i = 0; i < y.size(); ++i) {
        double s = val(scores)(static_cast<int>(i), 0);
        double sig = 1.0 / (1.0 + std::exp(-s));
        grad_mut(scores)(static_cast<int>(i), 0) += grad(o)(0, 0) * (sig - y[i]);
      }
    };
  }
  return o;
}

Mat& ParamStore::create(const std::string& name, int rows, int cols, double init_scale,
                        std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, init_scale);
  Mat m(rows, cols);
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) m(r, c) = gauss(rng);
  values_[name] = std::move(m);
  grads_[name] = Mat::Zero(rows, cols);
  return values_[name];
}

Mat& ParamStore::create_zeros(const std::string& name, int rows, int cols) {
  values_[name] = Mat::Zero(rows, cols);
  grads_[name] = Mat::Zero(rows, cols);
  return values_[name];
}

Mat& ParamStore::value(const std::string& name) {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

const Mat& ParamStore::value(const std::string& name) const {
  auto it = values_.find(name);
  if (it == values_.end()) throw std::out_of_range("no parameter " + name);
  return it->second;
}

Mat& ParamStore::grad(const std::string& name) {
  auto it = grads_.find(name);
  if (it == grads_.end()) {
    grads_[name] = Mat::Zero(value(name).rows(), value(name).cols());
    it = grads_.find(name);
  }
  return it->second;
}

void ParamStore::zero_grads() {
  for (auto& [name, g] : grads_) g.setZero();
}

void ParamStore::adam_step(double lr, double beta1, double beta2, double eps) {
  ++adam_t_;
  for (auto& [name, v] : values_) {
    const Mat& g = grad(name);
    if (!adam_m_.count(name)) {
      adam_m_[name] = Mat::Zero(v.rows(), v.cols());
      adam_v_[name] = Mat::Zero(v.rows(), v.cols());
    }
    Mat& m = adam_m_[name];
    Mat& vv = adam_v_[name];
    m = beta1 * m + (1 - beta1) * g;
    vv = beta2 * vv + (1 - beta2) * g.cwiseProduct(g);
    double bc1 = 1 - std::pow(beta1, adam_t_);
    double bc2 = 1 - std::pow(beta2, adam_t_);
    v.array() -= lr * (m.array() / bc1) /
                 ((vv.array() / bc2).sqrt() + eps);
  }
}

Tape::Var ParamBinding::operator[](const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  Tape::Var v = tape_.param(store_.value(name));
  bound_[name] = v;
  return v;
}

void ParamBinding::flush_grads() {
  for (const auto& [name, v] : bound_) store_.grad(name) += tape_.grad(v);
}

}  // namespace dygraft::nn
