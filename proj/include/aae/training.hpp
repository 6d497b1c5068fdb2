#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "aae/corpus.hpp"
#include "aae/model.hpp"

namespace aae {

struct TrainConfig {
  int epochs = 10;
  int adv_start_epoch = 5;  // N: epochs 1..N are regular
  double p_adv = 0.05;      // per-minibatch augmentation probability
  double eps_min = 0.0, eps_max = 0.3;  // uniform step-size sampling range
  double xi_train = 0.0;    // 0 = attention-only AAEs, 0.5 = hybrid
  double alpha_mtl = 0.5;   // loss = alpha*L_CTC + (1-alpha)*sum_l J
  int batch_size = 1;
  double learning_rate = 0.25;
  double lr_decay = 0.85;   // per-epoch multiplicative decay
  double clip_norm = 5.0;   // global gradient-norm clip
  std::uint64_t seed = 1;

  void validate() const;
};

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-sample loss
  double dev_cer = 0.0;
  double adv_fraction = 0.0;  // augmented minibatches / minibatches
};

struct TrainResult {
  std::vector<EpochMetrics> epochs;
  std::vector<double> epsilon_draws;  // logged adversarial step sizes
  long long batches_seen = 0;
  long long batches_augmented = 0;
};

// Mid-training state for bit-identical resume.
struct TrainState {
  int epochs_done = 0;
  std::string main_rng;  // serialized engines
  std::string adv_rng;
  TrainResult result;
};

void save_train_checkpoint(const std::string& path, const HybridModel& m,
                           const TrainState& state);
std::pair<HybridModel, TrainState> load_train_checkpoint(const std::string& path);

// Plain SGD with gradient clipping; one parameter update per minibatch with
// the summed loss over the (possibly augmented) batch. `log` receives one
// JSON line per epoch. When checkpoint_path is non-empty a resumable
// checkpoint is written after every epoch.
TrainResult train_regular(HybridModel& m, const Corpus& corpus,
                          const TrainConfig& cfg, std::ostream* log = nullptr,
                          const std::string& checkpoint_path = "",
                          TrainState* resume = nullptr);

// Epochs 1..N match train_regular bit-exactly for the same seed; afterwards
// each minibatch is augmented (not replaced) with probability p_adv by AAEs
// built against the current model with freshly decoded references.
TrainResult train_adversarial(HybridModel& m, const Corpus& corpus,
                              const TrainConfig& cfg, std::ostream* log = nullptr,
                              const std::string& checkpoint_path = "",
                              TrainState* resume = nullptr);

}  // namespace aae
