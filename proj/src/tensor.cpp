#include "aae/tensor.hpp"

#include <cmath>
#include <utility>

namespace aae {

namespace {

using M = Eigen::MatrixXd;

Eigen::MatrixXd* gptr(const Tensor& t) { return TensorAccess::grad(t); }

Tape* op_tape(const char* op, std::initializer_list<const Tensor*> ts) {
  Tape* tp = nullptr;
  for (const Tensor* p : ts) {
    Tape* pt = TensorAccess::tape(*p);
    if (!pt) continue;
    if (tp && pt != tp)
      throw NumericalError(std::string(op) + ": operands from different tapes");
    tp = pt;
  }
  return tp;
}

Tensor make_result(const char* op, Tape* tp, M value,
                   std::function<void(const M&)> back) {
  if (!value.allFinite())
    throw NumericalError(std::string(op) + ": non-finite result");
  if (!tp) return Tensor(std::move(value));
  return tp->record(op, std::move(value), std::move(back));
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
}

}  // namespace

Tensor Tape::leaf(const Eigen::MatrixXd& v) {
  if (!v.allFinite()) throw NumericalError("leaf: non-finite values");
  return record("leaf", v, nullptr);
}

Tensor Tape::record(const std::string& op, Eigen::MatrixXd value,
                    std::function<void(const Eigen::MatrixXd&)> back) {
  if (consumed_)
    throw NumericalError("tape already consumed by backward (op " + op + ")");
  Tensor out;
  auto grad = std::make_shared<Eigen::MatrixXd>(
      Eigen::MatrixXd::Zero(value.rows(), value.cols()));
  out.value_ = std::make_shared<Eigen::MatrixXd>(std::move(value));
  TensorAccess::bind(out, this, static_cast<long>(nodes_.size()), grad);
  nodes_.push_back(Node{std::move(grad), std::move(back)});
  return out;
}

void Tape::backward(const Tensor& root) {
  if (consumed_) throw NumericalError("backward: graph already consumed");
  if (!root.tracked() || TensorAccess::tape(root) != this)
    throw NumericalError("backward: root is not tracked on this tape");
  if (!root.is_scalar())
    throw ShapeError("backward: root must be scalar, got " + root.shape_str());
  consumed_ = true;
  (*TensorAccess::grad(root))(0, 0) += 1.0;
  for (long i = TensorAccess::node(root); i >= 0; --i)
    if (nodes_[static_cast<std::size_t>(i)].back)
      nodes_[static_cast<std::size_t>(i)].back(
          *nodes_[static_cast<std::size_t>(i)].out_grad);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const bool bcast = b.rows() == 1 && a.rows() > 1 && a.cols() == b.cols();
  if (!bcast) require_same_shape("add", a, b);
  M v = bcast ? M(a.value().rowwise() + b.value().row(0)) : M(a.value() + b.value());
  return make_result("add", op_tape("add", {&a, &b}), std::move(v),
                     [a, b, bcast](const M& og) {
                       if (auto* g = gptr(a)) *g += og;
                       if (auto* g = gptr(b)) {
                         if (bcast)
                           g->row(0) += og.colwise().sum();
                         else
                           *g += og;
                       }
                     });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  return make_result("sub", op_tape("sub", {&a, &b}), a.value() - b.value(),
                     [a, b](const M& og) {
                       if (auto* g = gptr(a)) *g += og;
                       if (auto* g = gptr(b)) *g -= og;
                     });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  M v = a.value().cwiseProduct(b.value());
  return make_result("mul", op_tape("mul", {&a, &b}), std::move(v),
                     [a, b](const M& og) {
                       if (auto* g = gptr(a)) *g += og.cwiseProduct(b.value());
                       if (auto* g = gptr(b)) *g += og.cwiseProduct(a.value());
                     });
}

Tensor scale(const Tensor& a, double k) {
  return make_result("scale", op_tape("scale", {&a}), a.value() * k,
                     [a, k](const M& og) {
                       if (auto* g = gptr(a)) *g += og * k;
                     });
}

Tensor neg(const Tensor& a) { return scale(a, -1.0); }

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows())
    throw ShapeError("matmul: shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  return make_result("matmul", op_tape("matmul", {&a, &b}), a.value() * b.value(),
                     [a, b](const M& og) {
                       if (auto* g = gptr(a)) g->noalias() += og * b.value().transpose();
                       if (auto* g = gptr(b)) g->noalias() += a.value().transpose() * og;
                     });
}

Tensor tanh_op(const Tensor& a) {
  M v = a.value().array().tanh();
  return make_result("tanh", op_tape("tanh", {&a}), v, [a, v](const M& og) {
    if (auto* g = gptr(a)) g->array() += og.array() * (1.0 - v.array().square());
  });
}

Tensor sigmoid(const Tensor& a) {
  M v = (1.0 / (1.0 + (-a.value().array()).exp())).matrix();
  return make_result("sigmoid", op_tape("sigmoid", {&a}), v, [a, v](const M& og) {
    if (auto* g = gptr(a)) g->array() += og.array() * v.array() * (1.0 - v.array());
  });
}

Tensor relu(const Tensor& a) {
  M v = a.value().cwiseMax(0.0);
  return make_result("relu", op_tape("relu", {&a}), std::move(v),
                     [a](const M& og) {
                       if (auto* g = gptr(a))
                         g->array() +=
                             og.array() * (a.value().array() > 0.0).cast<double>();
                     });
}

Tensor exp_op(const Tensor& a) {
  M v = a.value().array().exp();
  return make_result("exp", op_tape("exp", {&a}), v, [a, v](const M& og) {
    if (auto* g = gptr(a)) g->array() += og.array() * v.array();
  });
}

Tensor transpose(const Tensor& a) {
  return make_result("transpose", op_tape("transpose", {&a}),
                     a.value().transpose(), [a](const M& og) {
                       if (auto* g = gptr(a)) *g += og.transpose();
                     });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: empty input list");
  Eigen::Index cols = parts[0].cols(), rows = 0;
  Tape* tp = nullptr;
  for (const Tensor& p : parts) {
    if (p.cols() != cols)
      throw ShapeError("concat_rows: column mismatch " + parts[0].shape_str() +
                       " vs " + p.shape_str());
    rows += p.rows();
    Tape* pt = TensorAccess::tape(p);
    if (pt) {
      if (tp && tp != pt)
        throw NumericalError("concat_rows: operands from different tapes");
      tp = pt;
    }
  }
  M v(rows, cols);
  Eigen::Index r = 0;
  for (const Tensor& p : parts) {
    v.middleRows(r, p.rows()) = p.value();
    r += p.rows();
  }
  return make_result("concat_rows", tp, std::move(v), [parts](const M& og) {
    Eigen::Index r = 0;
    for (const Tensor& p : parts) {
      if (auto* g = gptr(p)) *g += og.middleRows(r, p.rows());
      r += p.rows();
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: empty input list");
  Eigen::Index rows = parts[0].rows(), cols = 0;
  Tape* tp = nullptr;
  for (const Tensor& p : parts) {
    if (p.rows() != rows)
      throw ShapeError("concat_cols: row mismatch " + parts[0].shape_str() +
                       " vs " + p.shape_str());
    cols += p.cols();
    Tape* pt = TensorAccess::tape(p);
    if (pt) {
      if (tp && tp != pt)
        throw NumericalError("concat_cols: operands from different tapes");
      tp = pt;
    }
  }
  M v(rows, cols);
  Eigen::Index c = 0;
  for (const Tensor& p : parts) {
    v.middleCols(c, p.cols()) = p.value();
    c += p.cols();
  }
  return make_result("concat_cols", tp, std::move(v), [parts](const M& og) {
    Eigen::Index c = 0;
    for (const Tensor& p : parts) {
      if (auto* g = gptr(p)) *g += og.middleCols(c, p.cols());
      c += p.cols();
    }
  });
}

Tensor slice_rows(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.rows())
    throw ShapeError("slice_rows: range [" + std::to_string(start) + "," +
                     std::to_string(start + n) + ") out of " + a.shape_str());
  return make_result("slice_rows", op_tape("slice_rows", {&a}),
                     a.value().middleRows(start, n), [a, start, n](const M& og) {
                       if (auto* g = gptr(a)) g->middleRows(start, n) += og;
                     });
}

Tensor slice_cols(const Tensor& a, Eigen::Index start, Eigen::Index n) {
  if (start < 0 || n < 0 || start + n > a.cols())
    throw ShapeError("slice_cols: range [" + std::to_string(start) + "," +
                     std::to_string(start + n) + ") out of " + a.shape_str());
  return make_result("slice_cols", op_tape("slice_cols", {&a}),
                     a.value().middleCols(start, n), [a, start, n](const M& og) {
                       if (auto* g = gptr(a)) g->middleCols(start, n) += og;
                     });
}

Tensor sum(const Tensor& a) {
  M v(1, 1);
  v(0, 0) = a.value().sum();
  return make_result("sum", op_tape("sum", {&a}), std::move(v),
                     [a](const M& og) {
                       if (auto* g = gptr(a)) g->array() += og(0, 0);
                     });
}

Tensor log_softmax(const Tensor& a) {
  M v(a.rows(), a.cols());
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    const double mx = a.value().row(r).maxCoeff();
    const double lse =
        mx + std::log((a.value().row(r).array() - mx).exp().sum());
    v.row(r) = a.value().row(r).array() - lse;
  }
  M sm = v.array().exp();
  return make_result("log_softmax", op_tape("log_softmax", {&a}), std::move(v),
                     [a, sm](const M& og) {
                       if (auto* g = gptr(a)) {
                         for (Eigen::Index r = 0; r < sm.rows(); ++r)
                           g->row(r) +=
                               og.row(r) - og.row(r).sum() * sm.row(r);
                       }
                     });
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& ids) {
  M v(static_cast<Eigen::Index>(ids.size()), a.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || ids[i] >= a.rows())
      throw ShapeError("gather_rows: index " + std::to_string(ids[i]) +
                       " out of " + a.shape_str());
    v.row(static_cast<Eigen::Index>(i)) = a.value().row(ids[i]);
  }
  return make_result("gather_rows", op_tape("gather_rows", {&a}), std::move(v),
                     [a, ids](const M& og) {
                       if (auto* g = gptr(a))
                         for (std::size_t i = 0; i < ids.size(); ++i)
                           g->row(ids[i]) += og.row(static_cast<Eigen::Index>(i));
                     });
}

Tensor pick(const Tensor& a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || r >= a.rows() || c < 0 || c >= a.cols())
    throw ShapeError("pick: index (" + std::to_string(r) + "," +
                     std::to_string(c) + ") out of " + a.shape_str());
  M v(1, 1);
  v(0, 0) = a.value()(r, c);
  return make_result("pick", op_tape("pick", {&a}), std::move(v),
                     [a, r, c](const M& og) {
                       if (auto* g = gptr(a)) (*g)(r, c) += og(0, 0);
                     });
}

Tensor conv1d(const Tensor& input, const Tensor& kernel, const Tensor& bias,
              int kernel_width) {
  const Eigen::Index t_len = input.rows(), cin = input.cols();
  const Eigen::Index cout = kernel.cols();
  if (kernel.rows() != kernel_width * cin)
    throw ShapeError("conv1d: kernel " + kernel.shape_str() + " does not match width " +
                     std::to_string(kernel_width) + " x input " + input.shape_str());
  if (bias.rows() != 1 || bias.cols() != cout)
    throw ShapeError("conv1d: bias " + bias.shape_str() + " vs " +
                     std::to_string(cout) + " output channels");
  const Eigen::Index pad = kernel_width / 2;
  M v = bias.value().replicate(t_len, 1);
  for (Eigen::Index t = 0; t < t_len; ++t)
    for (Eigen::Index tap = 0; tap < kernel_width; ++tap) {
      const Eigen::Index s = t + tap - pad;
      if (s < 0 || s >= t_len) continue;
      v.row(t) += input.value().row(s) * kernel.value().middleRows(tap * cin, cin);
    }
  return make_result(
      "conv1d", op_tape("conv1d", {&input, &kernel, &bias}), std::move(v),
      [input, kernel, bias, kernel_width, pad](const M& og) {
        const Eigen::Index t_len = input.rows(), cin = input.cols();
        if (auto* g = gptr(bias)) g->row(0) += og.colwise().sum();
        for (Eigen::Index t = 0; t < t_len; ++t)
          for (Eigen::Index tap = 0; tap < kernel_width; ++tap) {
            const Eigen::Index s = t + tap - pad;
            if (s < 0 || s >= t_len) continue;
            if (auto* g = gptr(input))
              g->row(s) +=
                  og.row(t) * kernel.value().middleRows(tap * cin, cin).transpose();
            if (auto* g = gptr(kernel))
              g->middleRows(tap * cin, cin) +=
                  input.value().row(s).transpose() * og.row(t);
          }
      });
}

Tensor add_scalars(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeError("add_scalars: empty input list");
  Tape* tp = nullptr;
  double total = 0.0;
  for (const Tensor& x : xs) {
    if (!x.is_scalar())
      throw ShapeError("add_scalars: non-scalar term " + x.shape_str());
    total += x.value()(0, 0);
    Tape* pt = TensorAccess::tape(x);
    if (pt) {
      if (tp && tp != pt)
        throw NumericalError("add_scalars: operands from different tapes");
      tp = pt;
    }
  }
  M v(1, 1);
  v(0, 0) = total;
  return make_result("add_scalars", tp, std::move(v), [xs](const M& og) {
    for (const Tensor& x : xs)
      if (auto* g = gptr(x)) (*g)(0, 0) += og(0, 0);
  });
}

}  // namespace aae
