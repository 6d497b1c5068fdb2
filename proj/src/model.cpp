#include "aae/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "aae/ctc.hpp"
#include "aae/errors.hpp"
#include "aae/io.hpp"
#include "aae/rng.hpp"

namespace aae {

namespace {

constexpr std::uint32_t kCheckpointVersion = 1;

std::pair<Tensor, Tensor> lstm_step(const Tensor& wx, const Tensor& wh,
                                    const Tensor& b, const Tensor& x,
                                    const Tensor& h, const Tensor& c, int hid) {
  Tensor z = add(add(matmul(x, wx), matmul(h, wh)), b);
  Tensor i = sigmoid(slice_cols(z, 0, hid));
  Tensor f = sigmoid(slice_cols(z, hid, hid));
  Tensor g = tanh_op(slice_cols(z, 2 * hid, hid));
  Tensor o = sigmoid(slice_cols(z, 3 * hid, hid));
  Tensor c2 = add(mul(f, c), mul(i, g));
  Tensor h2 = mul(o, tanh_op(c2));
  return {h2, c2};
}

Tensor zeros(Eigen::Index r, Eigen::Index c) {
  return Tensor(Eigen::MatrixXd::Zero(r, c));
}

void check_content_token(const Vocabulary& voc, int id) {
  if (id < 1 || id > voc.content_size)
    throw ShapeError("token id " + std::to_string(id) +
                     " out of content range [1," +
                     std::to_string(voc.content_size) + "]");
}

}  // namespace

HybridModel::HybridModel(const ModelConfig& cfg, std::uint64_t seed) {
  cfg_ = cfg;
  auto rng = make_rng(seed, 0x4d4f44454cULL);
  const int h = cfg.enc_hidden, d = cfg.enc_out_dim();
  const int k_att = cfg.content_size + 2, k_ctc = cfg.content_size + 1;
  for (int layer = 0; layer < cfg.enc_layers; ++layer) {
    const int in_dim = layer == 0 ? cfg.feat_dim : d;
    for (const char* dir : {"fwd", "bwd"}) {
      const std::string base =
          "enc.l" + std::to_string(layer) + "." + dir + ".";
      add_param(base + "Wx", in_dim, 4 * h, rng);
      add_param(base + "Wh", h, 4 * h, rng);
      add_param(base + "b", 1, 4 * h, rng);
    }
  }
  add_param("dec.embed", cfg.content_size + 3, cfg.embed_dim, rng);
  add_param("dec.cell.Wx", cfg.embed_dim + d, 4 * cfg.dec_hidden, rng);
  add_param("dec.cell.Wh", cfg.dec_hidden, 4 * cfg.dec_hidden, rng);
  add_param("dec.cell.b", 1, 4 * cfg.dec_hidden, rng);
  add_param("att.W_enc", d, cfg.att_dim, rng);
  add_param("att.W_dec", cfg.dec_hidden, cfg.att_dim, rng);
  add_param("att.W_f", cfg.att_conv_channels, cfg.att_dim, rng);
  add_param("att.conv.K", cfg.att_conv_kernel, cfg.att_conv_channels, rng);
  add_param("att.conv.b", 1, cfg.att_conv_channels, rng);
  add_param("att.v", cfg.att_dim, 1, rng);
  add_param("att.b", 1, cfg.att_dim, rng);
  add_param("out.W", cfg.dec_hidden + d, k_att, rng);
  add_param("out.b", 1, k_att, rng);
  add_param("ctc.W", d, k_ctc, rng);
  add_param("ctc.b", 1, k_ctc, rng);

  // forget-gate bias at 1
  for (Param& p : params_)
    if (p.name.ends_with("cell.b") || (p.name.starts_with("enc.") && p.name.ends_with(".b"))) {
      const int hid = static_cast<int>(p.value.cols()) / 4;
      p.value.middleCols(hid, hid).setOnes();
    }
}

void HybridModel::add_param(const std::string& name, Eigen::Index rows,
                            Eigen::Index cols, std::mt19937_64& rng) {
  const double r = 1.0 / std::sqrt(static_cast<double>(std::max<Eigen::Index>(rows, 1)));
  std::uniform_real_distribution<double> dist(-r, r);
  Param p;
  p.name = name;
  p.value.resize(rows, cols);
  const bool is_bias = rows == 1 && name.ends_with("b");
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      p.value(i, j) = is_bias ? 0.0 : dist(rng);
  p.grad = Eigen::MatrixXd::Zero(rows, cols);
  index_[name] = params_.size();
  params_.push_back(std::move(p));
}

Param& HybridModel::param(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

const Param& HybridModel::param(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw ConfigError("unknown parameter " + name);
  return params_[it->second];
}

void HybridModel::zero_grads() {
  for (Param& p : params_) p.grad.setZero();
}

void HybridModel::save(const std::string& path) const {
  ByteWriter w;
  serialize(w);
  w.write_file(path);
}

HybridModel HybridModel::load(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  HybridModel m = deserialize(r);
  r.expect_end();
  return m;
}

void HybridModel::serialize(ByteWriter& w) const {
  w.magic("ADVM");
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(cfg_.feat_dim));
  w.u32(static_cast<std::uint32_t>(cfg_.content_size));
  w.u32(static_cast<std::uint32_t>(cfg_.enc_hidden));
  w.u32(static_cast<std::uint32_t>(cfg_.enc_layers));
  w.u32(static_cast<std::uint32_t>(cfg_.dec_hidden));
  w.u32(static_cast<std::uint32_t>(cfg_.embed_dim));
  w.u32(static_cast<std::uint32_t>(cfg_.att_dim));
  w.u32(static_cast<std::uint32_t>(cfg_.att_conv_channels));
  w.u32(static_cast<std::uint32_t>(cfg_.att_conv_kernel));
  w.u32(static_cast<std::uint32_t>(params_.size()));
  for (const Param& p : params_) {
    w.str(p.name);
    w.matrix(p.value);
  }
}

HybridModel HybridModel::deserialize(ByteReader& r) {
  r.expect_magic("ADVM");
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw ParseError(r.offset(),
                     "unsupported checkpoint version " + std::to_string(version));
  HybridModel m;
  m.cfg_.feat_dim = static_cast<int>(r.u32());
  m.cfg_.content_size = static_cast<int>(r.u32());
  m.cfg_.enc_hidden = static_cast<int>(r.u32());
  m.cfg_.enc_layers = static_cast<int>(r.u32());
  m.cfg_.dec_hidden = static_cast<int>(r.u32());
  m.cfg_.embed_dim = static_cast<int>(r.u32());
  m.cfg_.att_dim = static_cast<int>(r.u32());
  m.cfg_.att_conv_channels = static_cast<int>(r.u32());
  m.cfg_.att_conv_kernel = static_cast<int>(r.u32());
  const std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    Param p;
    p.name = r.str();
    p.value = r.matrix();
    p.grad = Eigen::MatrixXd::Zero(p.value.rows(), p.value.cols());
    m.index_[p.name] = m.params_.size();
    m.params_.push_back(std::move(p));
  }
  return m;
}

BoundModel::BoundModel(const HybridModel& m, Tape* tape, bool track_params)
    : cfg_(&m.config()) {
  for (const Param& p : m.params()) {
    if (tape && track_params)
      bound_.emplace(p.name, tape->leaf(p.value));
    else
      bound_.emplace(p.name, Tensor(p.value));
  }
}

const Tensor& BoundModel::operator[](const std::string& name) const {
  auto it = bound_.find(name);
  if (it == bound_.end()) throw ConfigError("unknown parameter " + name);
  return it->second;
}

void BoundModel::add_grads_to(HybridModel& m) const {
  for (auto& [name, t] : bound_)
    if (t.tracked()) m.param(name).grad += t.grad();
}

Tensor encode(const BoundModel& bm, const Tensor& features) {
  const ModelConfig& cfg = bm.config();
  if (features.rows() == 0) throw ShapeError("encode: empty feature sequence");
  if (features.cols() != cfg.feat_dim)
    throw ShapeError("encode: feature dim " + std::to_string(features.cols()) +
                     " does not match model feat_dim " +
                     std::to_string(cfg.feat_dim));
  const Eigen::Index t_len = features.rows();
  const int h = cfg.enc_hidden;
  Tensor layer_in = features;
  for (int layer = 0; layer < cfg.enc_layers; ++layer) {
    const std::string base = "enc.l" + std::to_string(layer) + ".";
    std::vector<Tensor> fwd(t_len), bwd(t_len);
    {
      Tensor hh = zeros(1, h), cc = zeros(1, h);
      for (Eigen::Index t = 0; t < t_len; ++t) {
        std::tie(hh, cc) =
            lstm_step(bm[base + "fwd.Wx"], bm[base + "fwd.Wh"],
                      bm[base + "fwd.b"], slice_rows(layer_in, t, 1), hh, cc, h);
        fwd[t] = hh;
      }
    }
    {
      Tensor hh = zeros(1, h), cc = zeros(1, h);
      for (Eigen::Index t = t_len - 1; t >= 0; --t) {
        std::tie(hh, cc) =
            lstm_step(bm[base + "bwd.Wx"], bm[base + "bwd.Wh"],
                      bm[base + "bwd.b"], slice_rows(layer_in, t, 1), hh, cc, h);
        bwd[t] = hh;
      }
    }
    layer_in = concat_cols({concat_rows(fwd), concat_rows(bwd)});
  }
  return layer_in;
}

Tensor ctc_logprobs(const BoundModel& bm, const Tensor& enc_states) {
  return log_softmax(add(matmul(enc_states, bm["ctc.W"]), bm["ctc.b"]));
}

AttentionContext make_attention_context(const BoundModel& bm,
                                        const Tensor& enc_states) {
  return AttentionContext{enc_states, matmul(enc_states, bm["att.W_enc"])};
}

DecoderState decoder_init(const BoundModel& bm, Eigen::Index t_len) {
  const ModelConfig& cfg = bm.config();
  DecoderState st;
  st.h = zeros(1, cfg.dec_hidden);
  st.c = zeros(1, cfg.dec_hidden);
  st.align = Tensor(Eigen::MatrixXd::Constant(t_len, 1,
                                              1.0 / static_cast<double>(t_len)));
  st.context = zeros(1, cfg.enc_out_dim());
  return st;
}

std::pair<DecoderState, Tensor> decoder_step(const BoundModel& bm,
                                             const Vocabulary& voc,
                                             const AttentionContext& att,
                                             const DecoderState& state,
                                             int prev_token) {
  const ModelConfig& cfg = bm.config();
  if (prev_token != voc.sos()) check_content_token(voc, prev_token);

  // location-aware additive attention, keyed on the previous decoder state
  Tensor loc = conv1d(state.align, bm["att.conv.K"], bm["att.conv.b"],
                      cfg.att_conv_kernel);
  Tensor pre = add(att.enc_proj, matmul(loc, bm["att.W_f"]));
  pre = add(pre, matmul(state.h, bm["att.W_dec"]));
  pre = add(pre, bm["att.b"]);
  Tensor scores = matmul(tanh_op(pre), bm["att.v"]);  // T x 1
  Tensor align = transpose(exp_op(log_softmax(transpose(scores))));
  Tensor context = matmul(transpose(align), att.enc);  // 1 x D

  Tensor emb = gather_rows(bm["dec.embed"], {prev_token});
  auto [h2, c2] =
      lstm_step(bm["dec.cell.Wx"], bm["dec.cell.Wh"], bm["dec.cell.b"],
                concat_cols({emb, context}), state.h, state.c, cfg.dec_hidden);
  Tensor logits = add(matmul(concat_cols({h2, context}), bm["out.W"]), bm["out.b"]);
  Tensor logp = log_softmax(logits);  // 1 x (K+2), column j is id j+1
  return {DecoderState{h2, c2, align, context}, logp};
}

std::vector<Tensor> token_losses(const BoundModel& bm, const Vocabulary& voc,
                                 const Tensor& enc_states,
                                 const std::vector<int>& y) {
  for (int id : y) check_content_token(voc, id);
  AttentionContext att = make_attention_context(bm, enc_states);
  DecoderState st = decoder_init(bm, enc_states.rows());
  std::vector<Tensor> losses;
  losses.reserve(y.size() + 1);
  int prev = voc.sos();
  for (std::size_t l = 0; l <= y.size(); ++l) {
    auto [st2, logp] = decoder_step(bm, voc, att, st, prev);
    const int target = l < y.size() ? y[l] : voc.eos();
    losses.push_back(neg(pick(logp, 0, target - 1)));
    st = st2;
    if (l < y.size()) prev = y[l];
  }
  return losses;
}

std::vector<Tensor> token_losses(const BoundModel& bm, const Vocabulary& voc,
                                 const Tensor& features, Tensor* enc_out,
                                 const std::vector<int>& y) {
  Tensor enc = encode(bm, features);
  if (enc_out) *enc_out = enc;
  return token_losses(bm, voc, enc, y);
}

namespace {

struct BeamHyp {
  std::vector<int> tokens;
  double score = 0.0;
  DecoderState st;
  int prev;
  bool truncated = false;
};

DecodeResult to_result(const BeamHyp& h) {
  return DecodeResult{h.tokens, h.score, h.truncated};
}

}  // namespace

std::vector<DecodeResult> beam_decode(const HybridModel& m,
                                      const Eigen::MatrixXd& features,
                                      int beam) {
  if (beam < 1) throw ConfigError("beam width must be >= 1");
  const Vocabulary voc = m.vocab();
  BoundModel bm(m, nullptr, false);
  Tensor x(features);
  Tensor enc = encode(bm, x);
  AttentionContext att = make_attention_context(bm, enc);
  const Eigen::Index cap = 2 * features.rows();

  std::vector<BeamHyp> active{
      BeamHyp{{}, 0.0, decoder_init(bm, enc.rows()), voc.sos(), false}};
  std::vector<BeamHyp> finished;

  for (Eigen::Index step = 0; step < cap && !active.empty(); ++step) {
    struct Cand {
      double score;
      std::size_t hyp;
      int token;  // id in 1..K+2 (eos finishes)
      DecoderState st;
    };
    std::vector<Cand> cands;
    for (std::size_t i = 0; i < active.size(); ++i) {
      auto [st2, logp] = decoder_step(bm, voc, att, active[i].st, active[i].prev);
      for (int col = 0; col < voc.n_attention(); ++col) {
        const int id = col + 1;
        if (id == voc.sos()) continue;
        cands.push_back(Cand{active[i].score + logp.value()(0, col), i, id, st2});
      }
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Cand& a, const Cand& b) { return a.score > b.score; });
    if (cands.size() > static_cast<std::size_t>(beam)) cands.resize(beam);
    std::vector<BeamHyp> next;
    for (const Cand& c : cands) {
      BeamHyp h = active[c.hyp];
      h.score = c.score;
      h.st = c.st;
      if (c.token == voc.eos()) {
        finished.push_back(std::move(h));
      } else {
        h.tokens.push_back(c.token);
        h.prev = c.token;
        next.push_back(std::move(h));
      }
    }
    active = std::move(next);
  }
  for (BeamHyp& h : active) {
    h.truncated = true;
    finished.push_back(std::move(h));
  }
  std::stable_sort(finished.begin(), finished.end(),
                   [](const BeamHyp& a, const BeamHyp& b) { return a.score > b.score; });
  if (finished.size() > static_cast<std::size_t>(beam)) finished.resize(beam);
  std::vector<DecodeResult> out;
  out.reserve(finished.size());
  for (const BeamHyp& h : finished) out.push_back(to_result(h));
  return out;
}

DecodeResult greedy_decode(const HybridModel& m,
                           const Eigen::MatrixXd& features) {
  const Vocabulary voc = m.vocab();
  BoundModel bm(m, nullptr, false);
  Tensor x(features);
  Tensor enc = encode(bm, x);
  AttentionContext att = make_attention_context(bm, enc);
  DecoderState st = decoder_init(bm, enc.rows());
  const Eigen::Index cap = 2 * features.rows();
  DecodeResult res;
  int prev = voc.sos();
  for (Eigen::Index step = 0; step < cap; ++step) {
    auto [st2, logp] = decoder_step(bm, voc, att, st, prev);
    st = st2;
    int best = -1;
    double best_lp = -std::numeric_limits<double>::infinity();
    for (int col = 0; col < voc.n_attention(); ++col) {
      const int id = col + 1;
      if (id == voc.sos()) continue;
      if (logp.value()(0, col) > best_lp) {
        best_lp = logp.value()(0, col);
        best = id;
      }
    }
    res.log_prob += best_lp;
    if (best == voc.eos()) return res;
    res.tokens.push_back(best);
    prev = best;
  }
  res.truncated = true;
  return res;
}

DecodeResult joint_rescore_decode(const HybridModel& m,
                                  const Eigen::MatrixXd& features, int beam,
                                  double lambda) {
  if (lambda < 0.0 || lambda > 1.0)
    throw ConfigError("lambda must be in [0,1]");
  std::vector<DecodeResult> nbest = beam_decode(m, features, beam);
  if (lambda == 0.0) return nbest.front();
  BoundModel bm(m, nullptr, false);
  Tensor enc = encode(bm, Tensor(features));
  Tensor clp = ctc_logprobs(bm, enc);
  double best_score = -std::numeric_limits<double>::infinity();
  const DecodeResult* best = nullptr;
  for (const DecodeResult& h : nbest) {
    if (!ctc_feasible(clp.rows(), h.tokens)) continue;
    const double ctc = ctc_loss(clp, h.tokens).item();
    const double score = (1.0 - lambda) * h.log_prob + lambda * (-ctc);
    if (score > best_score) {
      best_score = score;
      best = &h;
    }
  }
  return best ? *best : nbest.front();
}

}  // namespace aae
