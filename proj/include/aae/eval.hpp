#pragma once

#include <optional>
#include <string>
#include <vector>

#include "aae/attacks.hpp"
#include "aae/corpus.hpp"
#include "aae/model.hpp"

namespace aae {

struct EditCounts {
  long long distance = 0;
  long long subs = 0;
  long long ins = 0;
  long long dels = 0;
};

// Levenshtein with unit costs; counts from one optimal alignment of hyp
// against ref (tie-break: substitution over insertion over deletion).
EditCounts edit_distance(const std::vector<int>& hyp, const std::vector<int>& ref);

double cer(const std::vector<int>& hyp, const std::vector<int>& ref);  // percent
double wer(const std::vector<int>& hyp, const std::vector<int>& ref,
           const Vocabulary& voc);  // words delimited by the space token

struct NoiseSpec {
  double snr_db = 30.0;  // +inf leaves X unchanged
  std::uint64_t seed = 0;
};

Eigen::MatrixXd add_white_noise(const Eigen::MatrixXd& features,
                                const NoiseSpec& spec);

enum class DecodeMode { AttentionGreedy, AttentionBeam, CtcGreedy, JointRescored };

DecodeMode decode_mode_from_string(const std::string& s);
std::string decode_mode_name(DecodeMode m);

struct DecodeConfig {
  DecodeMode mode = DecodeMode::AttentionGreedy;
  int beam = 4;
  double lambda = 0.0;  // CTC weight in joint rescoring
};

std::vector<int> decode(const HybridModel& m, const Eigen::MatrixXd& features,
                        const DecodeConfig& cfg);

struct EvalRow {
  std::string model_id;
  double lambda = 0.0;
  std::string condition;  // test | test-aae | noise-30db | noise-5db
  double cer = 0.0, wer = 0.0;
  int n_utts = 0;
  long long subs = 0, ins = 0, dels = 0;
  long long ref_tokens = 0, ref_words = 0;
};

struct EvalReport {
  std::vector<EvalRow> rows;

  std::string to_json() const;
  std::string to_table() const;  // aligned plain-text, CER/WER per cell
};

// One condition over one split. The AAE condition regenerates perturbations
// against this model (whitebox). jobs bounds utterance-level parallelism;
// results are deterministic regardless of jobs.
EvalRow evaluate(const HybridModel& m, const std::string& model_id,
                 const std::vector<Utterance>& split, const Vocabulary& voc,
                 const DecodeConfig& dec, const std::string& condition,
                 const std::optional<AttackConfig>& attack,
                 const std::optional<NoiseSpec>& noise, int jobs = 1);

// The four-condition robustness report: test, test-aae, noise-30db, noise-5db.
EvalReport four_condition_report(const HybridModel& m,
                                 const std::string& model_id,
                                 const std::vector<Utterance>& split,
                                 const Vocabulary& voc, const DecodeConfig& dec,
                                 const AttackConfig& attack,
                                 std::uint64_t noise_seed, int jobs = 1);

}  // namespace aae
