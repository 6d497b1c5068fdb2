#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "aae/corpus.hpp"
#include "aae/tensor.hpp"

namespace aae {

struct ModelConfig {
  int feat_dim = 8;
  int content_size = 12;
  int enc_hidden = 64;  // per direction
  int enc_layers = 2;   // bidirectional LSTM layers, no subsampling
  int dec_hidden = 64;
  int embed_dim = 32;
  int att_dim = 64;
  int att_conv_channels = 4;  // location-aware convolution over prev alignment
  int att_conv_kernel = 5;

  int enc_out_dim() const { return 2 * enc_hidden; }

  bool operator==(const ModelConfig& o) const = default;
};

struct Param {
  std::string name;
  Eigen::MatrixXd value;
  Eigen::MatrixXd grad;  // accumulator used by the training loop
};

class HybridModel {
 public:
  HybridModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  Vocabulary vocab() const { return Vocabulary{cfg_.content_size}; }

  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;
  void zero_grads();

  void save(const std::string& path) const;
  static HybridModel load(const std::string& path);
  void serialize(class ByteWriter& w) const;
  static HybridModel deserialize(class ByteReader& r);

 private:
  HybridModel() = default;
  void add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols,
                 std::mt19937_64& rng);
  ModelConfig cfg_;
  std::vector<Param> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

// All model parameters bound as tensors for one forward pass. When `tape` is
// non-null and track_params is set, the params are tape leaves and
// add_grads_to() copies their gradients back after backward.
class BoundModel {
 public:
  BoundModel(const HybridModel& m, Tape* tape, bool track_params);
  const Tensor& operator[](const std::string& name) const;
  const ModelConfig& config() const { return *cfg_; }
  void add_grads_to(HybridModel& m) const;

 private:
  const ModelConfig* cfg_;
  std::unordered_map<std::string, Tensor> bound_;
};

// ---- forward passes -----------------------------------------------------

// T x enc_out_dim encoder states; differentiable w.r.t. features.
Tensor encode(const BoundModel& bm, const Tensor& features);

// T x (K+1) CTC head log-probabilities on top of encoder states.
Tensor ctc_logprobs(const BoundModel& bm, const Tensor& enc_states);

// Teacher-forced per-step cross-entropies. Returns L+1 scalars: one per
// content token of y plus the final eos step.
std::vector<Tensor> token_losses(const BoundModel& bm, const Vocabulary& voc,
                                 const Tensor& enc_states,
                                 const std::vector<int>& y);

// Convenience: encode + token_losses from raw features.
std::vector<Tensor> token_losses(const BoundModel& bm, const Vocabulary& voc,
                                 const Tensor& features, Tensor* enc_out,
                                 const std::vector<int>& y);

// ---- attention decoder internals (shared by training and decoding) ------

struct AttentionContext {
  Tensor enc;       // T x D
  Tensor enc_proj;  // T x A, precomputed once per utterance
};

struct DecoderState {
  Tensor h, c;      // 1 x dec_hidden
  Tensor align;     // T x 1, previous attention weights
  Tensor context;   // 1 x D
};

AttentionContext make_attention_context(const BoundModel& bm,
                                        const Tensor& enc_states);
DecoderState decoder_init(const BoundModel& bm, Eigen::Index t_len);
// Consumes the previous output token, returns the new state and the 1x(K+2)
// log-posterior over ids 1..K+2 (column j holds id j+1).
std::pair<DecoderState, Tensor> decoder_step(const BoundModel& bm,
                                             const Vocabulary& voc,
                                             const AttentionContext& att,
                                             const DecoderState& state,
                                             int prev_token);

// ---- decoding -----------------------------------------------------------

struct DecodeResult {
  std::vector<int> tokens;  // content ids only
  double log_prob = 0.0;    // attention score incl. the eos step
  bool truncated = false;   // hit the 2T step cap before eos
};

// Argmax per step (sos excluded) until eos or the hard 2T cap.
DecodeResult greedy_decode(const HybridModel& m, const Eigen::MatrixXd& features);

// n-best by attention score, best first. beam_decode(m, X, 1) == greedy.
std::vector<DecodeResult> beam_decode(const HybridModel& m,
                                      const Eigen::MatrixXd& features, int beam);

// argmax over the n-best of (1-lambda)*logP_att + lambda*(-L_CTC).
DecodeResult joint_rescore_decode(const HybridModel& m,
                                  const Eigen::MatrixXd& features, int beam,
                                  double lambda);

}  // namespace aae
