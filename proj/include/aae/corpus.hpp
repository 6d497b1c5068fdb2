#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace aae {

// Closed token inventory. Ids: blank=0, content 1..K (id 1 is the word
// separator used for WER), sos=K+1, eos=K+2.
struct Vocabulary {
  int content_size = 12;

  int blank() const { return 0; }
  int space() const { return 1; }
  int sos() const { return content_size + 1; }
  int eos() const { return content_size + 2; }
  int n_attention() const { return content_size + 2; }  // content + sos + eos
  int n_ctc() const { return content_size + 1; }        // blank + content

  std::string token_text(int id) const;
  std::string render(const std::vector<int>& tokens) const;

  bool operator==(const Vocabulary& o) const = default;
};

struct Utterance {
  std::string id;
  Eigen::MatrixXd features;     // T x F
  std::vector<int> transcript;  // content ids, no blank/sos/eos

  bool operator==(const Utterance& o) const = default;
};

struct CorpusSpec {
  std::uint64_t seed = 7;
  std::uint32_t n_train = 2000;
  std::uint32_t n_dev = 200;
  std::uint32_t n_test = 200;
  std::uint32_t content_size = 12;
  std::uint32_t feat_dim = 8;
  std::uint32_t min_frames = 3;  // per token; >= 3 keeps CTC alignments feasible
  std::uint32_t max_frames = 8;
  std::uint32_t min_len = 2;  // transcript length range
  std::uint32_t max_len = 12;
  double noise_std = 0.1;

  bool operator==(const CorpusSpec& o) const = default;
};

struct Corpus {
  CorpusSpec spec;
  Vocabulary vocab;
  std::vector<Utterance> train, dev, test;

  bool operator==(const Corpus& o) const = default;
};

// Per-token prototype frames, row k-1 for content id k; fixed by spec.seed.
Eigen::MatrixXd token_prototypes(const CorpusSpec& spec);

// Deterministic synthetic corpus: each token is its prototype repeated for a
// random 3..8 frames plus Gaussian feature noise. Same spec => same bits.
Corpus generate_corpus(const CorpusSpec& spec);

void save_corpus(const Corpus& corpus, const std::string& path);
Corpus load_corpus(const std::string& path);

// Two fixed noise-free utterances for the qualitative attack demos.
// name is "case1" or "case2".
Utterance make_case_study(const std::string& name);

}  // namespace aae
