#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace aae {

// Central finite differences, h = 1e-5. The oracle only ever evaluates the
// forward value, never the tape's backward path.
Eigen::MatrixXd finite_difference_grad(
    const std::function<double(const Eigen::MatrixXd&)>& f,
    const Eigen::MatrixXd& x, double h = 1e-5);

// rel err < tol, absolute < 1e-7 where the analytic gradient is 0.
bool grads_match(const Eigen::MatrixXd& analytic, const Eigen::MatrixXd& fd,
                 double tol, double* worst_rel = nullptr);

struct CheckSummary {
  int checks = 0;
  double worst_err = 0.0;
  std::vector<std::string> failures;

  bool ok() const { return failures.empty(); }
  void merge(const CheckSummary& o);
};

// Every forward primitive against the finite-difference oracle.
CheckSummary gradcheck_primitives(std::uint64_t seed, double tol = 1e-4);

// Random op composites (depth <= 6, dims <= 8) ending in a scalar sum.
CheckSummary gradcheck_composites(std::uint64_t seed, int count,
                                  double tol = 1e-4);

// Tiny-model gradients w.r.t. the input features: encoder sum, teacher-forced
// token losses, and CTC loss through the full model.
CheckSummary gradcheck_model(std::uint64_t seed, int count, double tol = 1e-4);

// CTC DP vs the exhaustive alignment-enumeration oracle (|diff| < 1e-8 on
// feasible instances) plus CTC input gradients vs finite differences.
CheckSummary ctc_oracle_check(std::uint64_t seed, int count);

}  // namespace aae
