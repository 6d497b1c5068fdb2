#pragma once

#include <string>
#include <vector>

#include "aae/model.hpp"

namespace aae {

enum class AttackMethod { WholeSequence, StaticWindow, MovingWindow, Ctc, Hybrid };
enum class AttSubMethod { Static, Moving };

AttackMethod attack_method_from_string(const std::string& s);
std::string attack_method_name(AttackMethod m);

struct AttackConfig {
  AttackMethod method = AttackMethod::MovingWindow;
  double epsilon = 0.3;
  int gamma = 1;   // 1-indexed window start token (static window)
  int window = 4;  // l_w, window length in tokens
  int stride = 2;  // nu, moving-window stride in tokens
  double xi = 0.5; // CTC mixing weight (hybrid)
  AttSubMethod hybrid_att = AttSubMethod::Moving;
};

struct AdversarialExample {
  Eigen::MatrixXd original;   // X
  Eigen::MatrixXd delta;      // T x F, |delta|_inf <= epsilon
  Eigen::MatrixXd perturbed;  // X + delta
  std::vector<int> reference; // y*, decoded not ground truth
  std::string method;
};

// Greedy attention decode of X; the ground truth is never consulted
// (label-leaking-safe reference).
std::vector<int> derive_reference(const HybridModel& m,
                                  const Eigen::MatrixXd& features);

// delta = eps * sign(grad_X sum_{l=1..L} J(X, y*_l)); content tokens only.
AdversarialExample fgsm_whole_sequence(const HybridModel& m,
                                       const Eigen::MatrixXd& features,
                                       const std::vector<int>& reference,
                                       double epsilon);

// Window of l_w consecutive tokens starting at gamma (1-indexed), clipped at L.
AdversarialExample fgsm_static_window(const HybridModel& m,
                                      const Eigen::MatrixXd& features,
                                      const std::vector<int>& reference,
                                      double epsilon, int gamma, int window);

// Strided windows with per-window L1 gradient normalization before the sign.
AdversarialExample fgsm_moving_window(const HybridModel& m,
                                      const Eigen::MatrixXd& features,
                                      const std::vector<int>& reference,
                                      double epsilon, int window, int stride);

AdversarialExample fgsm_ctc(const HybridModel& m,
                            const Eigen::MatrixXd& features,
                            const std::vector<int>& reference, double epsilon);

// delta = (1-xi)*delta_att + xi*delta_ctc; xi=0 and xi=1 are exact reductions.
AdversarialExample hybrid_aae(const HybridModel& m,
                              const Eigen::MatrixXd& features,
                              const std::vector<int>& reference,
                              const AttackConfig& cfg);

// Dispatch on cfg.method; derives the reference from the model.
AdversarialExample run_attack(const HybridModel& m,
                              const Eigen::MatrixXd& features,
                              const AttackConfig& cfg);

}  // namespace aae
