#include "aae/attacks.hpp"

#include <cmath>

#include "aae/ctc.hpp"
#include "aae/errors.hpp"

namespace aae {

namespace {

using M = Eigen::MatrixXd;

void check_epsilon(double epsilon) {
  if (epsilon < 0.0 || !std::isfinite(epsilon))
    throw ConfigError("epsilon must be finite and >= 0");
}

M sign_of(const M& g) {  // sign(0) := 0
  return g.array().sign();
}

AdversarialExample finish(const M& x, M delta, std::vector<int> reference,
                          std::string method, double epsilon) {
  if (epsilon == 0.0) delta.setZero();
  AdversarialExample ex;
  ex.original = x;
  ex.delta = std::move(delta);
  ex.perturbed = x + ex.delta;
  ex.reference = std::move(reference);
  ex.method = std::move(method);
  return ex;
}

// grad of sum_{l in [lo,hi]} J(X, y*_l) w.r.t. X; token indices 0-based.
M att_window_grad(const HybridModel& m, const M& features,
                  const std::vector<int>& reference, std::size_t lo,
                  std::size_t hi) {
  Tape tape;
  BoundModel bm(m, &tape, false);
  Tensor x = tape.leaf(features);
  std::vector<Tensor> losses =
      token_losses(bm, m.vocab(), x, nullptr, reference);
  std::vector<Tensor> window(losses.begin() + static_cast<long>(lo),
                             losses.begin() + static_cast<long>(hi) + 1);
  tape.backward(add_scalars(window));
  if (!x.grad().allFinite())
    throw NumericalError("attack gradient is non-finite");
  return x.grad();
}

}  // namespace

AttackMethod attack_method_from_string(const std::string& s) {
  if (s == "whole-seq") return AttackMethod::WholeSequence;
  if (s == "static-window") return AttackMethod::StaticWindow;
  if (s == "moving-window") return AttackMethod::MovingWindow;
  if (s == "ctc") return AttackMethod::Ctc;
  if (s == "hybrid") return AttackMethod::Hybrid;
  throw ConfigError("unknown attack method \"" + s + "\"");
}

std::string attack_method_name(AttackMethod m) {
  switch (m) {
    case AttackMethod::WholeSequence: return "whole-seq";
    case AttackMethod::StaticWindow: return "static-window";
    case AttackMethod::MovingWindow: return "moving-window";
    case AttackMethod::Ctc: return "ctc";
    case AttackMethod::Hybrid: return "hybrid";
  }
  throw ConfigError("bad attack method enum");
}

std::vector<int> derive_reference(const HybridModel& m,
                                  const Eigen::MatrixXd& features) {
  return greedy_decode(m, features).tokens;
}

AdversarialExample fgsm_whole_sequence(const HybridModel& m,
                                       const Eigen::MatrixXd& features,
                                       const std::vector<int>& reference,
                                       double epsilon) {
  check_epsilon(epsilon);
  // An empty reference (possible on untrained models) leaves only the eos
  // step to climb.
  M grad = reference.empty()
               ? att_window_grad(m, features, reference, 0, 0)
               : att_window_grad(m, features, reference, 0, reference.size() - 1);
  return finish(features, epsilon * sign_of(grad), reference, "whole-seq",
                epsilon);
}

AdversarialExample fgsm_static_window(const HybridModel& m,
                                      const Eigen::MatrixXd& features,
                                      const std::vector<int>& reference,
                                      double epsilon, int gamma, int window) {
  check_epsilon(epsilon);
  if (gamma < 1) throw ConfigError("gamma must be >= 1");
  if (window < 1) throw ConfigError("window length must be >= 1");
  const auto len = static_cast<int>(reference.size());
  if (gamma > len)
    throw InfeasibleError("window start beyond sequence (gamma=" +
                          std::to_string(gamma) + ", L=" + std::to_string(len) +
                          ")");
  const std::size_t lo = static_cast<std::size_t>(gamma - 1);
  const std::size_t hi =
      static_cast<std::size_t>(std::min(gamma + window - 1, len) - 1);
  M grad = att_window_grad(m, features, reference, lo, hi);
  return finish(features, epsilon * sign_of(grad), reference, "static-window",
                epsilon);
}

AdversarialExample fgsm_moving_window(const HybridModel& m,
                                      const Eigen::MatrixXd& features,
                                      const std::vector<int>& reference,
                                      double epsilon, int window, int stride) {
  check_epsilon(epsilon);
  if (window < 1) throw ConfigError("window length must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (reference.empty()) {
    M grad = att_window_grad(m, features, reference, 0, 0);
    return finish(features, epsilon * sign_of(grad), reference, "moving-window",
                  epsilon);
  }
  const auto len = static_cast<int>(reference.size());
  const int n_windows = static_cast<int>(
      std::ceil(static_cast<double>(len) / static_cast<double>(stride)));
  M acc = M::Zero(features.rows(), features.cols());
  for (int i = 0; i <= n_windows; ++i) {
    const int start = i * stride + 1;  // 1-indexed
    if (start > len) continue;         // final window may be empty
    const int end = std::min(start + window - 1, len);
    M g = att_window_grad(m, features, reference,
                          static_cast<std::size_t>(start - 1),
                          static_cast<std::size_t>(end - 1));
    const double l1 = g.array().abs().sum();
    if (l1 < 1e-12) continue;  // flat window, normalization would blow up
    acc += g / l1;
  }
  return finish(features, epsilon * sign_of(acc), reference, "moving-window",
                epsilon);
}

AdversarialExample fgsm_ctc(const HybridModel& m,
                            const Eigen::MatrixXd& features,
                            const std::vector<int>& reference, double epsilon) {
  check_epsilon(epsilon);
  Tape tape;
  BoundModel bm(m, &tape, false);
  Tensor x = tape.leaf(features);
  Tensor enc = encode(bm, x);
  Tensor loss = ctc_loss(ctc_logprobs(bm, enc), reference);
  tape.backward(loss);
  if (!x.grad().allFinite())
    throw NumericalError("attack gradient is non-finite");
  return finish(features, epsilon * sign_of(x.grad()), reference, "ctc",
                epsilon);
}

AdversarialExample hybrid_aae(const HybridModel& m,
                              const Eigen::MatrixXd& features,
                              const std::vector<int>& reference,
                              const AttackConfig& cfg) {
  check_epsilon(cfg.epsilon);
  if (cfg.xi < 0.0 || cfg.xi > 1.0) throw ConfigError("xi must be in [0,1]");
  auto attention_part = [&]() {
    return cfg.hybrid_att == AttSubMethod::Static
               ? fgsm_static_window(m, features, reference, cfg.epsilon,
                                    cfg.gamma, cfg.window)
               : fgsm_moving_window(m, features, reference, cfg.epsilon,
                                    cfg.window, cfg.stride);
  };
  if (cfg.xi == 0.0) return attention_part();
  if (cfg.xi == 1.0) return fgsm_ctc(m, features, reference, cfg.epsilon);
  AdversarialExample att = attention_part();
  AdversarialExample ctc = fgsm_ctc(m, features, reference, cfg.epsilon);
  AdversarialExample ex;
  ex.original = features;
  ex.delta = (1.0 - cfg.xi) * att.delta + cfg.xi * ctc.delta;
  ex.perturbed = features + ex.delta;
  ex.reference = reference;
  ex.method = "hybrid";
  return ex;
}

AdversarialExample run_attack(const HybridModel& m,
                              const Eigen::MatrixXd& features,
                              const AttackConfig& cfg) {
  std::vector<int> reference = derive_reference(m, features);
  switch (cfg.method) {
    case AttackMethod::WholeSequence:
      return fgsm_whole_sequence(m, features, reference, cfg.epsilon);
    case AttackMethod::StaticWindow:
      return fgsm_static_window(m, features, reference, cfg.epsilon, cfg.gamma,
                                cfg.window);
    case AttackMethod::MovingWindow:
      return fgsm_moving_window(m, features, reference, cfg.epsilon, cfg.window,
                                cfg.stride);
    case AttackMethod::Ctc:
      return fgsm_ctc(m, features, reference, cfg.epsilon);
    case AttackMethod::Hybrid:
      return hybrid_aae(m, features, reference, cfg);
  }
  throw ConfigError("bad attack method enum");
}

}  // namespace aae
