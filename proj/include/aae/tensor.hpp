#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aae/errors.hpp"

namespace aae {

class Tape;

// Dense 64-bit real matrix (vectors are 1xN or Nx1) with an optional
// gradient slot when the tensor participates in a recorded graph.
// Value-semantic: copies share the underlying value and gradient buffers,
// which is what makes gradient accumulation across reuse work.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Eigen::MatrixXd v)
      : value_(std::make_shared<Eigen::MatrixXd>(std::move(v))) {}
  static Tensor scalar(double v) {
    Eigen::MatrixXd m(1, 1);
    m(0, 0) = v;
    return Tensor(std::move(m));
  }

  const Eigen::MatrixXd& value() const { return *value_; }
  Eigen::Index rows() const { return value_->rows(); }
  Eigen::Index cols() const { return value_->cols(); }
  bool is_scalar() const { return rows() == 1 && cols() == 1; }
  double item() const {
    if (!is_scalar()) throw ShapeError("item() on non-scalar tensor " + shape_str());
    return (*value_)(0, 0);
  }

  bool tracked() const { return grad_ != nullptr; }
  // Populated after Tape::backward.
  const Eigen::MatrixXd& grad() const {
    if (!grad_) throw NumericalError("grad() on untracked tensor");
    return *grad_;
  }

  std::string shape_str() const {
    if (!value_) return "[empty]";
    return "[" + std::to_string(rows()) + "x" + std::to_string(cols()) + "]";
  }

 private:
  friend class Tape;
  friend struct TensorAccess;
  std::shared_ptr<Eigen::MatrixXd> value_;
  std::shared_ptr<Eigen::MatrixXd> grad_;  // zeros until backward runs
  Tape* tape_ = nullptr;
  long node_ = -1;  // -1 for leaves and untracked tensors
};

// Reverse-mode tape. One tape per computation graph, confined to a thread.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Tracked input; gradient is accumulated here by backward().
  Tensor leaf(const Eigen::MatrixXd& v);

  // Records one op. `back` receives the output gradient and must accumulate
  // into the grads of the inputs it captured. Used by all op implementations,
  // and open to custom ops (the CTC loss records through this).
  Tensor record(const std::string& op, Eigen::MatrixXd value,
                std::function<void(const Eigen::MatrixXd&)> back);

  // root must be a tracked scalar on this tape; the graph is single-use.
  void backward(const Tensor& root);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    std::shared_ptr<Eigen::MatrixXd> out_grad;
    std::function<void(const Eigen::MatrixXd&)> back;
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Internal access to Tensor's tape bookkeeping, for op implementations
// (including custom ops recorded from other modules).
struct TensorAccess {
  static Tape* tape(const Tensor& t) { return t.tape_; }
  static long node(const Tensor& t) { return t.node_; }
  static Eigen::MatrixXd* grad(const Tensor& t) { return t.grad_.get(); }
  static void bind(Tensor& t, Tape* tp, long node,
                   std::shared_ptr<Eigen::MatrixXd> grad) {
    t.tape_ = tp;
    t.node_ = node;
    t.grad_ = std::move(grad);
  }
};

// ---- forward primitives -------------------------------------------------
// Each op computes values always and records onto the operands' tape when
// any operand is tracked. Mixing tensors from two different tapes is an error.

Tensor add(const Tensor& a, const Tensor& b);  // b may be 1xC (row broadcast)
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise
Tensor scale(const Tensor& a, double k);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor transpose(const Tensor& a);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n);
Tensor sum(const Tensor& a);                        // all elements -> scalar
Tensor log_softmax(const Tensor& a);                // row-wise
Tensor gather_rows(const Tensor& a, const std::vector<int>& ids);
Tensor pick(const Tensor& a, Eigen::Index r, Eigen::Index c);  // -> scalar
// Same-padded 1-D convolution along rows. input TxCin, kernel (k*Cin)xCout
// laid out kernel-tap-major: row (tap*Cin + cin).
Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int kernel_width);

Tensor neg(const Tensor& a);
Tensor add_scalars(const std::vector<Tensor>& xs);  // sum of 1x1 tensors

}  // namespace aae
