#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "aae/eval.hpp"

using namespace aae;
using Eigen::MatrixXd;

namespace {

std::vector<int> chars(const std::string& s) {
  std::vector<int> out;
  for (char c : s) out.push_back(static_cast<int>(c));
  return out;
}

}  // namespace

TEST_CASE("edit distance basics") {
  CHECK(edit_distance({1, 2, 3}, {1, 2, 3}).distance == 0);
  CHECK(edit_distance(chars("kitten"), chars("sitting")).distance == 3);
  EditCounts empty_hyp = edit_distance({}, {5, 6, 7});
  CHECK(empty_hyp.distance == 3);
  CHECK(empty_hyp.ins == 3);  // ref tokens missing from the hypothesis
  CHECK(empty_hyp.subs == 0);
  CHECK(empty_hyp.dels == 0);
  EditCounts extra = edit_distance({5, 6, 7}, {});
  CHECK(extra.distance == 3);
  CHECK(extra.dels == 3);
}

TEST_CASE("error counts always sum to the distance") {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> len(0, 8), tok(1, 4);
  for (int i = 0; i < 200; ++i) {
    std::vector<int> a, b;
    for (int n = len(rng); n > 0; --n) a.push_back(tok(rng));
    for (int n = len(rng); n > 0; --n) b.push_back(tok(rng));
    EditCounts e = edit_distance(a, b);
    CHECK(e.subs + e.ins + e.dels == e.distance);
    CHECK(e.distance >= std::abs(static_cast<long long>(a.size()) -
                                 static_cast<long long>(b.size())));
    CHECK(e.distance <= static_cast<long long>(std::max(a.size(), b.size())));
  }
}

TEST_CASE("substitution is preferred over insert+delete") {
  EditCounts e = edit_distance({1}, {2});
  CHECK(e.distance == 1);
  CHECK(e.subs == 1);
}

TEST_CASE("cer and wer") {
  Vocabulary voc{12};
  CHECK(cer({2, 3}, {2, 3}) == 0.0);
  CHECK(cer({}, {2, 3}) == 100.0);
  CHECK(cer({2, 4}, {2, 3}) == 50.0);
  CHECK_THROWS_AS(cer({2}, {}), ConfigError);
  // "ab cd" vs "ab ce": one of two words wrong
  CHECK(wer({2, 3, 1, 4, 5}, {2, 3, 1, 4, 6}, voc) == 50.0);
  // identical words, different spacing handling: empty words are dropped
  CHECK(wer({1, 2, 3, 1}, {2, 3}, voc) == 0.0);
}

TEST_CASE("white noise hits the target SNR") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXd x(200, 64);  // T*F >= 10^4
  for (Eigen::Index r = 0; r < x.rows(); ++r)
    for (Eigen::Index c = 0; c < x.cols(); ++c) x(r, c) = g(rng);
  for (double snr : {30.0, 5.0}) {
    NoiseSpec spec{snr, 3};
    MatrixXd noisy = add_white_noise(x, spec);
    const MatrixXd n = noisy - x;
    const double measured =
        10.0 * std::log10(x.array().square().mean() / n.array().square().mean());
    CHECK(measured == doctest::Approx(snr).epsilon(0.1));
    CHECK(std::abs(measured - snr) < 0.5);
    // deterministic under the seed
    CHECK(add_white_noise(x, spec) == noisy);
  }
}

TEST_CASE("infinite SNR leaves the input unchanged") {
  MatrixXd x = MatrixXd::Random(5, 4);
  NoiseSpec spec{std::numeric_limits<double>::infinity(), 1};
  CHECK(add_white_noise(x, spec) == x);
}

TEST_CASE("all-zero input has no defined SNR") {
  CHECK_THROWS_AS(add_white_noise(MatrixXd::Zero(4, 4), NoiseSpec{30.0, 1}),
                  ConfigError);
}

TEST_CASE("decode mode names round-trip") {
  for (auto m : {DecodeMode::AttentionGreedy, DecodeMode::AttentionBeam,
                 DecodeMode::CtcGreedy, DecodeMode::JointRescored})
    CHECK(decode_mode_from_string(decode_mode_name(m)) == m);
  CHECK_THROWS_AS(decode_mode_from_string("nope"), ConfigError);
}

TEST_CASE("evaluate is independent of the job count") {
  ModelConfig mc;
  mc.feat_dim = 8;
  mc.content_size = 12;
  mc.enc_hidden = 5;
  mc.enc_layers = 2;
  mc.dec_hidden = 5;
  mc.embed_dim = 3;
  mc.att_dim = 4;
  mc.att_conv_channels = 2;
  mc.att_conv_kernel = 3;
  HybridModel m(mc, 3);
  CorpusSpec cs;
  cs.n_train = 4;
  cs.n_dev = 4;
  cs.n_test = 12;
  Corpus corpus = generate_corpus(cs);
  DecodeConfig dec;
  EvalRow one = evaluate(m, "m", corpus.test, corpus.vocab, dec, "noise-30db",
                         std::nullopt, NoiseSpec{30.0, 5}, 1);
  EvalRow four = evaluate(m, "m", corpus.test, corpus.vocab, dec, "noise-30db",
                          std::nullopt, NoiseSpec{30.0, 5}, 4);
  CHECK(one.cer == four.cer);
  CHECK(one.wer == four.wer);
  CHECK(one.subs == four.subs);
  CHECK(one.n_utts == 12);
}

TEST_CASE("report serializations are complete and stable") {
  EvalReport rep;
  EvalRow r;
  r.model_id = "demo";
  r.condition = "test";
  r.cer = 12.5;
  r.wer = 30.0;
  r.n_utts = 7;
  rep.rows.push_back(r);
  const std::string j1 = rep.to_json(), j2 = rep.to_json();
  CHECK(j1 == j2);
  CHECK(j1.find("demo") != std::string::npos);
  CHECK(rep.to_table().find("12.5") != std::string::npos);
}
