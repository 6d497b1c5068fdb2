#include "aae/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>

#include "aae/attacks.hpp"
#include "aae/ctc.hpp"
#include "aae/errors.hpp"
#include "aae/eval.hpp"
#include "aae/io.hpp"
#include "aae/rng.hpp"

namespace aae {

namespace {

constexpr std::uint32_t kTrainCkptVersion = 1;

std::string rng_to_string(const std::mt19937_64& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

std::mt19937_64 rng_from_string(const std::string& s) {
  std::mt19937_64 rng;
  std::istringstream is(s);
  is >> rng;
  if (is.fail()) throw NumericalError("corrupt RNG state in checkpoint");
  return rng;
}

double dev_cer(const HybridModel& m, const Corpus& corpus) {
  long long dist = 0, ref = 0;
  for (const Utterance& u : corpus.dev) {
    const std::vector<int> hyp = greedy_decode(m, u.features).tokens;
    dist += edit_distance(hyp, u.transcript).distance;
    ref += static_cast<long long>(u.transcript.size());
  }
  return 100.0 * static_cast<double>(dist) / static_cast<double>(ref);
}

void sgd_step(HybridModel& m, double lr, double clip_norm) {
  double sq = 0.0;
  for (const Param& p : m.params()) sq += p.grad.squaredNorm();
  const double norm = std::sqrt(sq);
  if (!std::isfinite(norm))
    throw NumericalError("training diverged (non-finite gradient)");
  const double factor = norm > clip_norm ? clip_norm / norm : 1.0;
  for (Param& p : m.params()) p.value -= (lr * factor) * p.grad;
  m.zero_grads();
}

TrainResult train_impl(HybridModel& m, const Corpus& corpus,
                       const TrainConfig& cfg, bool adversarial,
                       std::ostream* log, const std::string& checkpoint_path,
                       TrainState* resume) {
  cfg.validate();
  if (m.config().content_size != corpus.vocab.content_size ||
      m.config().feat_dim != static_cast<int>(corpus.spec.feat_dim))
    throw ConfigError("model and corpus dimensions do not match");

  auto main_rng = make_rng(cfg.seed, 0x545241494eULL);
  auto adv_rng = make_rng(cfg.seed, 0x414456ULL);
  TrainResult res;
  int start_epoch = 0;
  if (resume) {
    main_rng = rng_from_string(resume->main_rng);
    adv_rng = rng_from_string(resume->adv_rng);
    res = resume->result;
    start_epoch = resume->epochs_done;
  }

  AttackConfig atk;
  atk.method = cfg.xi_train == 0.0 ? AttackMethod::MovingWindow
                                   : AttackMethod::Hybrid;
  atk.xi = cfg.xi_train;
  atk.hybrid_att = AttSubMethod::Moving;
  atk.stride = 2;
  atk.window = 4;

  const Vocabulary voc = corpus.vocab;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_real_distribution<double> eps_dist(cfg.eps_min, cfg.eps_max);

  for (int epoch = start_epoch + 1; epoch <= cfg.epochs; ++epoch) {
    const double lr =
        cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch - 1));
    std::vector<std::size_t> order(corpus.train.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), main_rng);

    double loss_sum = 0.0;
    long long samples = 0;
    long long batches = 0, augmented = 0;

    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t b_end =
          std::min(order.size(), b + static_cast<std::size_t>(cfg.batch_size));
      ++batches;

      bool augment = false;
      double eps = 0.0;
      if (adversarial && epoch > cfg.adv_start_epoch) {
        if (unit(adv_rng) < cfg.p_adv) {
          augment = true;
          eps = eps_dist(adv_rng);
          res.epsilon_draws.push_back(eps);
        }
      }

      // (features, targets) for the whole batch; adversarial copies are
      // generated outside the training tape and enter as plain constants.
      std::vector<std::pair<Eigen::MatrixXd, const std::vector<int>*>> batch;
      for (std::size_t i = b; i < b_end; ++i) {
        const Utterance& u = corpus.train[order[i]];
        batch.emplace_back(u.features, &u.transcript);
      }
      if (augment) {
        ++augmented;
        atk.epsilon = eps;
        for (std::size_t i = b; i < b_end; ++i) {
          const Utterance& u = corpus.train[order[i]];
          batch.emplace_back(run_attack(m, u.features, atk).perturbed,
                             &u.transcript);
        }
      }

      Tape tape;
      BoundModel bm(m, &tape, true);
      std::vector<Tensor> losses;
      losses.reserve(batch.size());
      for (const auto& [features, y] : batch) {
        Tensor x(features);  // constant input, never tracked
        Tensor enc = encode(bm, x);
        Tensor att_nll = add_scalars(token_losses(bm, voc, enc, *y));
        Tensor closs = ctc_loss(ctc_logprobs(bm, enc), *y);
        losses.push_back(add(scale(closs, cfg.alpha_mtl),
                             scale(att_nll, 1.0 - cfg.alpha_mtl)));
      }
      Tensor total = scale(add_scalars(losses),
                           1.0 / static_cast<double>(batch.size()));
      const double loss_value = total.item();
      if (!std::isfinite(loss_value))
        throw NumericalError("training diverged (non-finite loss)");
      tape.backward(total);
      bm.add_grads_to(m);
      sgd_step(m, lr, cfg.clip_norm);

      loss_sum += loss_value * static_cast<double>(batch.size());
      samples += static_cast<long long>(batch.size());
    }

    res.batches_seen += batches;
    res.batches_augmented += augmented;

    EpochMetrics em;
    em.epoch = epoch;
    em.train_loss = loss_sum / static_cast<double>(samples);
    em.dev_cer = dev_cer(m, corpus);
    em.adv_fraction =
        static_cast<double>(augmented) / static_cast<double>(batches);
    res.epochs.push_back(em);
    if (log)
      *log << "{\"epoch\":" << em.epoch << ",\"loss\":" << em.train_loss
           << ",\"cer_dev\":" << em.dev_cer
           << ",\"adv_fraction\":" << em.adv_fraction << "}\n";

    if (!checkpoint_path.empty()) {
      TrainState st;
      st.epochs_done = epoch;
      st.main_rng = rng_to_string(main_rng);
      st.adv_rng = rng_to_string(adv_rng);
      st.result = res;
      save_train_checkpoint(checkpoint_path, m, st);
    }
  }
  return res;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (adv_start_epoch < 0)
    throw ConfigError("adversarial start epoch must be >= 0");
  if (p_adv < 0.0 || p_adv > 1.0) throw ConfigError("p_adv must be in [0,1]");
  if (eps_min < 0.0 || eps_max < eps_min)
    throw ConfigError("epsilon range must satisfy 0 <= min <= max");
  if (xi_train < 0.0 || xi_train > 1.0)
    throw ConfigError("xi_train must be in [0,1]");
  if (alpha_mtl < 0.0 || alpha_mtl > 1.0)
    throw ConfigError("alpha_mtl must be in [0,1]");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (learning_rate <= 0.0) throw ConfigError("learning_rate must be > 0");
  if (lr_decay <= 0.0 || lr_decay > 1.0)
    throw ConfigError("lr_decay must be in (0,1]");
  if (clip_norm <= 0.0) throw ConfigError("clip_norm must be > 0");
}

void save_train_checkpoint(const std::string& path, const HybridModel& m,
                           const TrainState& state) {
  ByteWriter w;
  w.magic("ADVT");
  w.u32(kTrainCkptVersion);
  w.u32(static_cast<std::uint32_t>(state.epochs_done));
  w.str(state.main_rng);
  w.str(state.adv_rng);
  const TrainResult& r = state.result;
  w.u32(static_cast<std::uint32_t>(r.epochs.size()));
  for (const EpochMetrics& em : r.epochs) {
    w.u32(static_cast<std::uint32_t>(em.epoch));
    w.f64(em.train_loss);
    w.f64(em.dev_cer);
    w.f64(em.adv_fraction);
  }
  w.u32(static_cast<std::uint32_t>(r.epsilon_draws.size()));
  for (double e : r.epsilon_draws) w.f64(e);
  w.u64(static_cast<std::uint64_t>(r.batches_seen));
  w.u64(static_cast<std::uint64_t>(r.batches_augmented));
  m.serialize(w);
  w.write_file(path);
}

std::pair<HybridModel, TrainState> load_train_checkpoint(
    const std::string& path) {
  ByteReader rd = ByteReader::from_file(path);
  rd.expect_magic("ADVT");
  const std::uint32_t version = rd.u32();
  if (version != kTrainCkptVersion)
    throw ParseError(rd.offset(), "unsupported training checkpoint version " +
                                      std::to_string(version));
  TrainState st;
  st.epochs_done = static_cast<int>(rd.u32());
  st.main_rng = rd.str();
  st.adv_rng = rd.str();
  const std::uint32_t n_epochs = rd.u32();
  for (std::uint32_t i = 0; i < n_epochs; ++i) {
    EpochMetrics em;
    em.epoch = static_cast<int>(rd.u32());
    em.train_loss = rd.f64();
    em.dev_cer = rd.f64();
    em.adv_fraction = rd.f64();
    st.result.epochs.push_back(em);
  }
  const std::uint32_t n_eps = rd.u32();
  for (std::uint32_t i = 0; i < n_eps; ++i)
    st.result.epsilon_draws.push_back(rd.f64());
  st.result.batches_seen = static_cast<long long>(rd.u64());
  st.result.batches_augmented = static_cast<long long>(rd.u64());
  HybridModel m = HybridModel::deserialize(rd);
  rd.expect_end();
  return {std::move(m), std::move(st)};
}

TrainResult train_regular(HybridModel& m, const Corpus& corpus,
                          const TrainConfig& cfg, std::ostream* log,
                          const std::string& checkpoint_path,
                          TrainState* resume) {
  return train_impl(m, corpus, cfg, false, log, checkpoint_path, resume);
}

TrainResult train_adversarial(HybridModel& m, const Corpus& corpus,
                              const TrainConfig& cfg, std::ostream* log,
                              const std::string& checkpoint_path,
                              TrainState* resume) {
  return train_impl(m, corpus, cfg, true, log, checkpoint_path, resume);
}

}  // namespace aae
