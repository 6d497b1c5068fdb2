#include "aae/ctc.hpp"

#include <cmath>
#include <limits>

namespace aae {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double logadd(double a, double b) {
  if (a == kNegInf) return b;
  if (b == kNegInf) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

// alpha(t,s): log-probability of emitting a prefix consistent with expanded
// state s at frame t, inclusive of frame t's emission.
Eigen::MatrixXd forward_alphas(const Eigen::MatrixXd& lp,
                               const std::vector<int>& ext) {
  const Eigen::Index t_len = lp.rows();
  const auto n_states = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd alpha =
      Eigen::MatrixXd::Constant(t_len, n_states, kNegInf);
  alpha(0, 0) = lp(0, ext[0]);
  if (n_states > 1) alpha(0, 1) = lp(0, ext[1]);
  for (Eigen::Index t = 1; t < t_len; ++t)
    for (Eigen::Index s = 0; s < n_states; ++s) {
      double a = alpha(t - 1, s);
      if (s >= 1) a = logadd(a, alpha(t - 1, s - 1));
      if (s >= 2 && ext[s] != 0 && ext[s] != ext[s - 2])
        a = logadd(a, alpha(t - 1, s - 2));
      if (a != kNegInf) alpha(t, s) = a + lp(t, ext[s]);
    }
  return alpha;
}

// beta(t,s): log-probability of completing the labeling from state s after
// frame t (frame t's emission excluded).
Eigen::MatrixXd backward_betas(const Eigen::MatrixXd& lp,
                               const std::vector<int>& ext) {
  const Eigen::Index t_len = lp.rows();
  const auto n_states = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(t_len, n_states, kNegInf);
  beta(t_len - 1, n_states - 1) = 0.0;
  if (n_states > 1) beta(t_len - 1, n_states - 2) = 0.0;
  for (Eigen::Index t = t_len - 2; t >= 0; --t)
    for (Eigen::Index s = 0; s < n_states; ++s) {
      double b = beta(t + 1, s) + lp(t + 1, ext[s]);
      if (s + 1 < n_states)
        b = logadd(b, beta(t + 1, s + 1) + lp(t + 1, ext[s + 1]));
      if (s + 2 < n_states && ext[s + 2] != 0 && ext[s + 2] != ext[s])
        b = logadd(b, beta(t + 1, s + 2) + lp(t + 1, ext[s + 2]));
      beta(t, s) = b;
    }
  return beta;
}

}  // namespace

std::vector<int> expand_with_blanks(const std::vector<int>& labels) {
  std::vector<int> ext;
  ext.reserve(2 * labels.size() + 1);
  ext.push_back(0);
  for (int y : labels) {
    ext.push_back(y);
    ext.push_back(0);
  }
  return ext;
}

bool ctc_feasible(Eigen::Index t_len, const std::vector<int>& labels) {
  Eigen::Index required = static_cast<Eigen::Index>(labels.size());
  for (std::size_t i = 1; i < labels.size(); ++i)
    if (labels[i] == labels[i - 1]) ++required;
  return t_len >= std::max<Eigen::Index>(required, 1);
}

Tensor ctc_loss(const Tensor& logprobs, const std::vector<int>& labels) {
  const Eigen::MatrixXd& lp = logprobs.value();
  const Eigen::Index t_len = lp.rows();
  if (t_len < 1) throw ShapeError("ctc_loss: empty logprob matrix");
  for (int y : labels)
    if (y < 1 || y >= lp.cols())
      throw ShapeError("ctc_loss: label " + std::to_string(y) +
                       " out of range for " + logprobs.shape_str());
  for (Eigen::Index t = 0; t < t_len; ++t) {
    const double rowsum = lp.row(t).array().exp().sum();
    if (std::abs(rowsum - 1.0) > 1e-3)
      throw ShapeError("ctc_loss: row " + std::to_string(t) +
                       " is not a normalized log-distribution");
  }
  if (!ctc_feasible(t_len, labels))
    throw InfeasibleError("ctc_loss: infeasible alignment, " +
                          std::to_string(labels.size()) + " labels in " +
                          std::to_string(t_len) + " frames");

  const std::vector<int> ext = expand_with_blanks(labels);
  const auto n_states = static_cast<Eigen::Index>(ext.size());
  Eigen::MatrixXd alpha = forward_alphas(lp, ext);
  double log_z = alpha(t_len - 1, n_states - 1);
  if (n_states > 1) log_z = logadd(log_z, alpha(t_len - 1, n_states - 2));
  if (log_z == kNegInf)
    throw InfeasibleError("ctc_loss: zero-probability labeling");
  const double loss = -log_z;

  Tape* tp = TensorAccess::tape(logprobs);
  Eigen::MatrixXd v(1, 1);
  v(0, 0) = loss;
  if (!tp) return Tensor(std::move(v));

  // d(-logZ)/d lp(t,k) = -sum_{s: ext[s]=k} exp(alpha(t,s)+beta(t,s)-logZ)
  return tp->record(
      "ctc_loss", std::move(v),
      [logprobs, labels, ext, alpha, log_z](const Eigen::MatrixXd& og) {
        Eigen::MatrixXd* g = TensorAccess::grad(logprobs);
        if (!g) return;
        const Eigen::MatrixXd& lp = logprobs.value();
        const Eigen::MatrixXd beta = backward_betas(lp, ext);
        for (Eigen::Index t = 0; t < lp.rows(); ++t)
          for (std::size_t s = 0; s < ext.size(); ++s) {
            const double a = alpha(t, static_cast<Eigen::Index>(s));
            const double b = beta(t, static_cast<Eigen::Index>(s));
            if (a == kNegInf || b == kNegInf) continue;
            (*g)(t, ext[s]) -= og(0, 0) * std::exp(a + b - log_z);
          }
      });
}

std::vector<int> ctc_greedy_decode(const Eigen::MatrixXd& logprobs) {
  std::vector<int> out;
  int prev = -1;
  for (Eigen::Index t = 0; t < logprobs.rows(); ++t) {
    Eigen::Index k;
    logprobs.row(t).maxCoeff(&k);
    const int id = static_cast<int>(k);
    if (id != 0 && id != prev) out.push_back(id);
    prev = id;
  }
  return out;
}

double brute_force_ctc(const Eigen::MatrixXd& logprobs,
                       const std::vector<int>& labels) {
  const Eigen::Index t_len = logprobs.rows();
  const Eigen::Index n_sym = logprobs.cols();
  double paths = std::pow(static_cast<double>(n_sym), static_cast<double>(t_len));
  if (paths > 1e6)
    throw ConfigError("brute_force_ctc: instance too large (" +
                      std::to_string(static_cast<long long>(paths)) + " paths)");
  std::vector<int> path(static_cast<std::size_t>(t_len), 0);
  double total = kNegInf;
  while (true) {
    // collapse repeats then drop blanks
    std::vector<int> collapsed;
    int prev = -1;
    for (int s : path) {
      if (s != prev && s != 0) collapsed.push_back(s);
      prev = s;
    }
    if (collapsed == labels) {
      double lp = 0.0;
      for (Eigen::Index t = 0; t < t_len; ++t) lp += logprobs(t, path[t]);
      total = logadd(total, lp);
    }
    // odometer increment
    Eigen::Index i = 0;
    for (; i < t_len; ++i) {
      if (++path[i] < n_sym) break;
      path[i] = 0;
    }
    if (i == t_len) break;
  }
  if (total == kNegInf) return std::numeric_limits<double>::infinity();
  return -total;
}

}  // namespace aae
