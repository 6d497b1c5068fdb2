#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "aae/corpus.hpp"
#include "aae/ctc.hpp"
#include "aae/model.hpp"

using namespace aae;
using Eigen::MatrixXd;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.feat_dim = 4;
  c.content_size = 5;
  c.enc_hidden = 6;
  c.enc_layers = 2;
  c.dec_hidden = 6;
  c.embed_dim = 4;
  c.att_dim = 5;
  c.att_conv_channels = 2;
  c.att_conv_kernel = 3;
  return c;
}

MatrixXd random_features(int t, int f, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd x(t, f);
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < f; ++c) x(r, c) = g(rng);
  return x;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p) : path(p) {}
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("construction is seeded and named") {
  HybridModel a(tiny_config(), 7), b(tiny_config(), 7), c(tiny_config(), 8);
  CHECK(a.params().size() == b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    CHECK(a.params()[i].value == b.params()[i].value);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.params().size(); ++i)
    any_diff |= (a.params()[i].value != c.params()[i].value);
  CHECK(any_diff);
  CHECK(a.param("dec.embed").value.cols() == tiny_config().embed_dim);
  CHECK_THROWS_AS(a.param("no.such.param"), ConfigError);
}

TEST_CASE("encoder output shape and input validation") {
  HybridModel m(tiny_config(), 1);
  BoundModel bm(m, nullptr, false);
  MatrixXd x = random_features(9, 4, 3);
  Tensor enc = encode(bm, Tensor(x));
  CHECK(enc.rows() == 9);
  CHECK(enc.cols() == tiny_config().enc_out_dim());
  CHECK_THROWS_AS(encode(bm, Tensor(random_features(9, 5, 3))), ShapeError);
  CHECK_THROWS_AS(encode(bm, Tensor(MatrixXd(0, 4))), ShapeError);
}

TEST_CASE("ctc head emits normalized log-probabilities") {
  HybridModel m(tiny_config(), 1);
  BoundModel bm(m, nullptr, false);
  Tensor lp = ctc_logprobs(bm, encode(bm, Tensor(random_features(7, 4, 5))));
  CHECK(lp.cols() == 6);  // K+1
  for (Eigen::Index t = 0; t < lp.rows(); ++t)
    CHECK(lp.value().row(t).array().exp().sum() == doctest::Approx(1.0));
}

TEST_CASE("attention weights are a distribution over frames") {
  HybridModel m(tiny_config(), 1);
  const Vocabulary voc = m.vocab();
  BoundModel bm(m, nullptr, false);
  Tensor enc = encode(bm, Tensor(random_features(8, 4, 11)));
  AttentionContext att = make_attention_context(bm, enc);
  DecoderState st = decoder_init(bm, enc.rows());
  auto [st2, logp] = decoder_step(bm, voc, att, st, voc.sos());
  CHECK(st2.align.rows() == 8);
  CHECK(st2.align.value().minCoeff() >= 0.0);
  CHECK(st2.align.value().sum() == doctest::Approx(1.0));
  CHECK(logp.cols() == voc.n_attention());
  CHECK(logp.value().array().exp().sum() == doctest::Approx(1.0));
}

TEST_CASE("uniform output layer gives ln(K+2) per-token loss") {
  HybridModel m(tiny_config(), 1);
  m.param("out.W").value.setZero();
  m.param("out.b").value.setZero();
  const Vocabulary voc = m.vocab();
  BoundModel bm(m, nullptr, false);
  Tensor enc = encode(bm, Tensor(random_features(10, 4, 2)));
  auto losses = token_losses(bm, voc, enc, {2, 4, 1});
  CHECK(losses.size() == 4);  // three tokens + eos
  for (const Tensor& l : losses)
    CHECK(l.item() == doctest::Approx(std::log(voc.n_attention())));
}

TEST_CASE("token_losses validates the targets") {
  HybridModel m(tiny_config(), 1);
  BoundModel bm(m, nullptr, false);
  Tensor enc = encode(bm, Tensor(random_features(6, 4, 2)));
  CHECK_THROWS_AS(token_losses(bm, m.vocab(), enc, {0}), ShapeError);
  CHECK_THROWS_AS(token_losses(bm, m.vocab(), enc, {6}), ShapeError);
}

TEST_CASE("beam width one reproduces greedy decoding") {
  HybridModel m(tiny_config(), 21);
  for (std::uint64_t s = 0; s < 5; ++s) {
    MatrixXd x = random_features(12, 4, 100 + s);
    DecodeResult g = greedy_decode(m, x);
    std::vector<DecodeResult> b = beam_decode(m, x, 1);
    REQUIRE(b.size() >= 1);
    CHECK(b[0].tokens == g.tokens);
    CHECK(b[0].log_prob == doctest::Approx(g.log_prob));
  }
}

TEST_CASE("decoding is deterministic and capped") {
  HybridModel m(tiny_config(), 3);
  MatrixXd x = random_features(10, 4, 9);
  DecodeResult a = greedy_decode(m, x);
  DecodeResult b = greedy_decode(m, x);
  CHECK(a.tokens == b.tokens);
  CHECK(a.log_prob == b.log_prob);
  CHECK(a.tokens.size() <= 20);  // 2T cap
  for (int id : a.tokens) {
    CHECK(id >= 1);
    CHECK(id <= 5);  // content only: no blank/sos/eos
  }
}

TEST_CASE("joint rescoring with lambda 0 returns the beam best") {
  HybridModel m(tiny_config(), 4);
  MatrixXd x = random_features(14, 4, 31);
  DecodeResult joint = joint_rescore_decode(m, x, 4, 0.0);
  CHECK(joint.tokens == beam_decode(m, x, 4)[0].tokens);
  CHECK_THROWS_AS(joint_rescore_decode(m, x, 4, 1.5), ConfigError);
  // lambda > 0 still returns one of the n-best
  DecodeResult j2 = joint_rescore_decode(m, x, 4, 0.5);
  bool found = false;
  for (const DecodeResult& h : beam_decode(m, x, 4)) found |= (h.tokens == j2.tokens);
  CHECK(found);
}

TEST_CASE("save/load round-trip preserves every bit") {
  TempFile f("model_roundtrip_test.advm");
  HybridModel m(tiny_config(), 77);
  m.save(f.path);
  HybridModel back = HybridModel::load(f.path);
  CHECK(back.config() == m.config());
  REQUIRE(back.params().size() == m.params().size());
  for (std::size_t i = 0; i < m.params().size(); ++i) {
    CHECK(back.params()[i].name == m.params()[i].name);
    CHECK(back.params()[i].value == m.params()[i].value);
  }
  MatrixXd x = random_features(9, 4, 5);
  CHECK(greedy_decode(back, x).tokens == greedy_decode(m, x).tokens);
}

TEST_CASE("forward values are identical with and without tracking") {
  HybridModel m(tiny_config(), 13);
  MatrixXd x = random_features(8, 4, 17);
  Tape tape;
  BoundModel tracked(m, &tape, true);
  BoundModel frozen(m, nullptr, false);
  Tensor e1 = encode(tracked, tape.leaf(x));
  Tensor e2 = encode(frozen, Tensor(x));
  CHECK(e1.value() == e2.value());
}
