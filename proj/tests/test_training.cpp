#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>

#include "aae/corpus.hpp"
#include "aae/model.hpp"
#include "aae/training.hpp"

using namespace aae;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.feat_dim = 6;
  c.content_size = 5;
  c.enc_hidden = 4;
  c.enc_layers = 2;
  c.dec_hidden = 4;
  c.embed_dim = 3;
  c.att_dim = 4;
  c.att_conv_channels = 2;
  c.att_conv_kernel = 3;
  return c;
}

Corpus tiny_corpus() {
  CorpusSpec s;
  s.seed = 5;
  s.n_train = 12;
  s.n_dev = 4;
  s.n_test = 4;
  s.content_size = 5;
  s.feat_dim = 6;
  s.min_len = 2;
  s.max_len = 4;
  return generate_corpus(s);
}

TrainConfig quick_config() {
  TrainConfig c;
  c.epochs = 2;
  c.adv_start_epoch = 1;
  c.batch_size = 4;
  c.seed = 9;
  return c;
}

bool same_params(const HybridModel& a, const HybridModel& b) {
  if (a.params().size() != b.params().size()) return false;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    if (a.params()[i].value != b.params()[i].value) return false;
  return true;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p) : path(p) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("config validation") {
  TrainConfig c;
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.p_adv = 1.5;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.eps_min = 0.4;
  c.eps_max = 0.2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.alpha_mtl = -0.1;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = TrainConfig{};
  c.learning_rate = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  TrainConfig{}.validate();
}

TEST_CASE("training is deterministic under a seed") {
  Corpus corpus = tiny_corpus();
  HybridModel a(tiny_config(), 1), b(tiny_config(), 1);
  TrainResult ra = train_regular(a, corpus, quick_config());
  TrainResult rb = train_regular(b, corpus, quick_config());
  CHECK(same_params(a, b));
  REQUIRE(ra.epochs.size() == rb.epochs.size());
  for (std::size_t i = 0; i < ra.epochs.size(); ++i) {
    CHECK(ra.epochs[i].train_loss == rb.epochs[i].train_loss);
    CHECK(ra.epochs[i].dev_cer == rb.epochs[i].dev_cer);
  }
}

TEST_CASE("loss decreases over the first epochs") {
  Corpus corpus = tiny_corpus();
  HybridModel m(tiny_config(), 1);
  TrainConfig cfg = quick_config();
  cfg.epochs = 3;
  TrainResult r = train_regular(m, corpus, cfg);
  CHECK(r.epochs.back().train_loss < r.epochs.front().train_loss);
}

TEST_CASE("p_adv zero makes adversarial training bit-exact with regular") {
  Corpus corpus = tiny_corpus();
  HybridModel reg(tiny_config(), 1), adv(tiny_config(), 1);
  TrainConfig cfg = quick_config();
  cfg.p_adv = 0.0;
  TrainResult rr = train_regular(reg, corpus, cfg);
  TrainResult ra = train_adversarial(adv, corpus, cfg);
  CHECK(same_params(reg, adv));
  CHECK(ra.epsilon_draws.empty());
  CHECK(ra.batches_augmented == 0);
  REQUIRE(rr.epochs.size() == ra.epochs.size());
  for (std::size_t i = 0; i < rr.epochs.size(); ++i)
    CHECK(rr.epochs[i].train_loss == ra.epochs[i].train_loss);
}

TEST_CASE("augmentation happens and logs epsilon draws in range") {
  Corpus corpus = tiny_corpus();
  HybridModel m(tiny_config(), 1);
  TrainConfig cfg = quick_config();
  cfg.epochs = 4;
  cfg.adv_start_epoch = 0;
  cfg.p_adv = 1.0;  // force augmentation every minibatch
  TrainResult r = train_adversarial(m, corpus, cfg);
  CHECK(r.batches_augmented == r.batches_seen);
  CHECK(r.epsilon_draws.size() == static_cast<std::size_t>(r.batches_seen));
  for (double e : r.epsilon_draws) {
    CHECK(e >= cfg.eps_min);
    CHECK(e <= cfg.eps_max);
  }
}

TEST_CASE("checkpoint resume reproduces an uninterrupted run bit-exactly") {
  TempFile ckpt("train_resume_test.advt");
  Corpus corpus = tiny_corpus();
  TrainConfig full = quick_config();
  full.epochs = 4;

  HybridModel straight(tiny_config(), 1);
  TrainResult r_straight = train_regular(straight, corpus, full);

  // run 2 epochs, checkpoint, then resume for the remaining 2
  HybridModel part(tiny_config(), 1);
  TrainConfig half = full;
  half.epochs = 2;
  train_regular(part, corpus, half, nullptr, ckpt.path);

  auto [resumed, state] = load_train_checkpoint(ckpt.path);
  CHECK(state.epochs_done == 2);
  CHECK(same_params(resumed, part));
  TrainResult r_rest =
      train_regular(resumed, corpus, full, nullptr, "", &state);

  CHECK(same_params(resumed, straight));
  REQUIRE(r_rest.epochs.size() == r_straight.epochs.size());
  for (std::size_t i = 0; i < r_rest.epochs.size(); ++i)
    CHECK(r_rest.epochs[i].train_loss == r_straight.epochs[i].train_loss);
}

TEST_CASE("model/corpus dimension mismatch is rejected") {
  Corpus corpus = tiny_corpus();
  ModelConfig wrong = tiny_config();
  wrong.feat_dim = 7;
  HybridModel m(wrong, 1);
  CHECK_THROWS_AS(train_regular(m, corpus, quick_config()), ConfigError);
}
