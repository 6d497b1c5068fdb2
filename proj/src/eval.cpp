#include "aae/eval.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "aae/ctc.hpp"
#include "aae/errors.hpp"
#include "aae/rng.hpp"

namespace aae {

namespace {

// Maps word sequences onto fresh int ids so the token-level DP can be reused.
std::vector<int> words_as_ids(const std::vector<int>& tokens,
                              const Vocabulary& voc,
                              std::map<std::vector<int>, int>& dict) {
  std::vector<int> out;
  std::vector<int> word;
  auto flush = [&] {
    if (word.empty()) return;
    auto [it, inserted] = dict.emplace(word, static_cast<int>(dict.size()));
    out.push_back(it->second);
    word.clear();
  };
  for (int t : tokens) {
    if (t == voc.space())
      flush();
    else
      word.push_back(t);
  }
  flush();
  return out;
}

}  // namespace

EditCounts edit_distance(const std::vector<int>& hyp,
                         const std::vector<int>& ref) {
  const std::size_t n = hyp.size(), m = ref.size();
  Eigen::MatrixXi d(n + 1, m + 1);
  for (std::size_t i = 0; i <= n; ++i) d(i, 0) = static_cast<int>(i);
  for (std::size_t j = 0; j <= m; ++j) d(0, j) = static_cast<int>(j);
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j) {
      if (hyp[i - 1] == ref[j - 1]) {
        d(i, j) = d(i - 1, j - 1);
      } else {
        d(i, j) = 1 + std::min({d(i - 1, j - 1), d(i - 1, j), d(i, j - 1)});
      }
    }
  EditCounts c;
  c.distance = d(n, m);
  // one optimal alignment; ties resolved substitution > insertion > deletion
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && hyp[i - 1] == ref[j - 1] && d(i, j) == d(i - 1, j - 1)) {
      --i, --j;
    } else if (i > 0 && j > 0 && d(i, j) == d(i - 1, j - 1) + 1) {
      ++c.subs, --i, --j;
    } else if (j > 0 && d(i, j) == d(i, j - 1) + 1) {
      ++c.ins, --j;  // token present in ref, missing from hyp position
    } else {
      ++c.dels, --i;
    }
  }
  return c;
}

double cer(const std::vector<int>& hyp, const std::vector<int>& ref) {
  if (ref.empty()) throw ConfigError("cer: empty reference");
  return 100.0 * static_cast<double>(edit_distance(hyp, ref).distance) /
         static_cast<double>(ref.size());
}

double wer(const std::vector<int>& hyp, const std::vector<int>& ref,
           const Vocabulary& voc) {
  std::map<std::vector<int>, int> dict;
  const std::vector<int> h = words_as_ids(hyp, voc, dict);
  const std::vector<int> r = words_as_ids(ref, voc, dict);
  if (r.empty()) throw ConfigError("wer: reference has no words");
  return 100.0 * static_cast<double>(edit_distance(h, r).distance) /
         static_cast<double>(r.size());
}

Eigen::MatrixXd add_white_noise(const Eigen::MatrixXd& features,
                                const NoiseSpec& spec) {
  if (features.size() == 0) throw ConfigError("add_white_noise: empty features");
  if (std::isinf(spec.snr_db)) return features;
  const double power = features.array().square().mean();
  if (power == 0.0)
    throw ConfigError("add_white_noise: all-zero features, SNR undefined");
  const double var = power / std::pow(10.0, spec.snr_db / 10.0);
  auto rng = make_rng(spec.seed, 0x4e4f495345ULL);
  std::normal_distribution<double> noise(0.0, std::sqrt(var));
  Eigen::MatrixXd out = features;
  for (Eigen::Index r = 0; r < out.rows(); ++r)
    for (Eigen::Index c = 0; c < out.cols(); ++c) out(r, c) += noise(rng);
  return out;
}

DecodeMode decode_mode_from_string(const std::string& s) {
  if (s == "attention-greedy") return DecodeMode::AttentionGreedy;
  if (s == "attention-beam") return DecodeMode::AttentionBeam;
  if (s == "ctc-greedy") return DecodeMode::CtcGreedy;
  if (s == "joint-rescored") return DecodeMode::JointRescored;
  throw ConfigError("unknown decode mode \"" + s + "\"");
}

std::string decode_mode_name(DecodeMode m) {
  switch (m) {
    case DecodeMode::AttentionGreedy: return "attention-greedy";
    case DecodeMode::AttentionBeam: return "attention-beam";
    case DecodeMode::CtcGreedy: return "ctc-greedy";
    case DecodeMode::JointRescored: return "joint-rescored";
  }
  throw ConfigError("bad decode mode enum");
}

std::vector<int> decode(const HybridModel& m, const Eigen::MatrixXd& features,
                        const DecodeConfig& cfg) {
  switch (cfg.mode) {
    case DecodeMode::AttentionGreedy:
      return greedy_decode(m, features).tokens;
    case DecodeMode::AttentionBeam:
      return beam_decode(m, features, cfg.beam).front().tokens;
    case DecodeMode::CtcGreedy: {
      BoundModel bm(m, nullptr, false);
      return ctc_greedy_decode(
          ctc_logprobs(bm, encode(bm, Tensor(features))).value());
    }
    case DecodeMode::JointRescored:
      return joint_rescore_decode(m, features, cfg.beam, cfg.lambda).tokens;
  }
  throw ConfigError("bad decode mode enum");
}

EvalRow evaluate(const HybridModel& m, const std::string& model_id,
                 const std::vector<Utterance>& split, const Vocabulary& voc,
                 const DecodeConfig& dec, const std::string& condition,
                 const std::optional<AttackConfig>& attack,
                 const std::optional<NoiseSpec>& noise, int jobs) {
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  struct PerUtt {
    EditCounts tok;
    long long word_dist = 0, ref_words = 0, ref_tokens = 0;
  };
  std::vector<PerUtt> per(split.size());

  auto work = [&](std::size_t idx) {
    const Utterance& u = split[idx];
    Eigen::MatrixXd x = u.features;
    if (attack) x = run_attack(m, x, *attack).perturbed;
    if (noise)
      x = add_white_noise(
          x, NoiseSpec{noise->snr_db, splitmix64(noise->seed ^ (idx + 1))});
    const std::vector<int> hyp = decode(m, x, dec);
    PerUtt r;
    r.tok = edit_distance(hyp, u.transcript);
    r.ref_tokens = static_cast<long long>(u.transcript.size());
    std::map<std::vector<int>, int> dict;
    const std::vector<int> hw = words_as_ids(hyp, voc, dict);
    const std::vector<int> rw = words_as_ids(u.transcript, voc, dict);
    r.word_dist = edit_distance(hw, rw).distance;
    r.ref_words = static_cast<long long>(rw.size());
    per[idx] = r;
  };

  if (jobs == 1) {
    for (std::size_t i = 0; i < split.size(); ++i) work(i);
  } else {
    std::vector<std::thread> pool;
    std::size_t chunk = (split.size() + jobs - 1) / jobs;
    for (int j = 0; j < jobs; ++j) {
      const std::size_t lo = j * chunk, hi = std::min(split.size(), lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back([&, lo, hi] {
        for (std::size_t i = lo; i < hi; ++i) work(i);
      });
    }
    for (auto& t : pool) t.join();
  }

  EvalRow row;
  row.model_id = model_id;
  row.lambda = dec.mode == DecodeMode::JointRescored ? dec.lambda : 0.0;
  row.condition = condition;
  row.n_utts = static_cast<int>(split.size());
  long long tok_dist = 0, word_dist = 0;
  for (const PerUtt& r : per) {
    tok_dist += r.tok.distance;
    word_dist += r.word_dist;
    row.subs += r.tok.subs;
    row.ins += r.tok.ins;
    row.dels += r.tok.dels;
    row.ref_tokens += r.ref_tokens;
    row.ref_words += r.ref_words;
  }
  if (row.ref_tokens == 0) throw ConfigError("evaluate: empty references");
  row.cer = 100.0 * static_cast<double>(tok_dist) /
            static_cast<double>(row.ref_tokens);
  row.wer = row.ref_words == 0
                ? 0.0
                : 100.0 * static_cast<double>(word_dist) /
                      static_cast<double>(row.ref_words);
  return row;
}

EvalReport four_condition_report(const HybridModel& m,
                                 const std::string& model_id,
                                 const std::vector<Utterance>& split,
                                 const Vocabulary& voc, const DecodeConfig& dec,
                                 const AttackConfig& attack,
                                 std::uint64_t noise_seed, int jobs) {
  EvalReport rep;
  rep.rows.push_back(evaluate(m, model_id, split, voc, dec, "test", {}, {}, jobs));
  rep.rows.push_back(
      evaluate(m, model_id, split, voc, dec, "test-aae", attack, {}, jobs));
  rep.rows.push_back(evaluate(m, model_id, split, voc, dec, "noise-30db", {},
                              NoiseSpec{30.0, noise_seed}, jobs));
  rep.rows.push_back(evaluate(m, model_id, split, voc, dec, "noise-5db", {},
                              NoiseSpec{5.0, splitmix64(noise_seed)}, jobs));
  return rep;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["rows"] = nlohmann::ordered_json::array();
  for (const EvalRow& r : rows) {
    nlohmann::ordered_json jr;
    jr["model"] = r.model_id;
    jr["lambda"] = r.lambda;
    jr["condition"] = r.condition;
    jr["cer"] = r.cer;
    jr["wer"] = r.wer;
    jr["cer_wer_ratio"] = r.wer > 0.0 ? r.cer / r.wer : 0.0;
    jr["utterances"] = r.n_utts;
    jr["substitutions"] = r.subs;
    jr["insertions"] = r.ins;
    jr["deletions"] = r.dels;
    jr["reference_tokens"] = r.ref_tokens;
    jr["reference_words"] = r.ref_words;
    j["rows"].push_back(jr);
  }
  j["note"] = "noise and perturbations applied in feature space";
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  const std::vector<std::string> conds = {"test", "test-aae", "noise-30db",
                                          "noise-5db"};
  std::map<std::pair<std::string, double>, std::map<std::string, const EvalRow*>>
      grid;
  for (const EvalRow& r : rows) grid[{r.model_id, r.lambda}][r.condition] = &r;
  std::ostringstream os;
  os << "CER/WER";
  for (const auto& c : conds) os << "  |  " << c;
  os << "\n";
  for (const auto& [key, cells] : grid) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s (lambda=%.2f)", key.first.c_str(),
                  key.second);
    os << buf;
    for (const auto& c : conds) {
      auto it = cells.find(c);
      if (it == cells.end()) {
        os << "  |  -";
      } else {
        std::snprintf(buf, sizeof(buf), "  |  %.1f/%.1f", it->second->cer,
                      it->second->wer);
        os << buf;
      }
    }
    os << "\n";
  }
  return os.str();
}

}  // namespace aae
