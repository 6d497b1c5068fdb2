// aaebench: synthetic-speech adversarial-example workbench CLI.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "aae/attacks.hpp"
#include "aae/corpus.hpp"
#include "aae/ctc.hpp"
#include "aae/errors.hpp"
#include "aae/eval.hpp"
#include "aae/gradcheck.hpp"
#include "aae/model.hpp"
#include "aae/training.hpp"
#include "config.hpp"

namespace {

using namespace aae;
using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitNumerical = 4;

struct SynthArgs {
  std::string spec_path, out_path;
  bool seed_set = false;
  std::uint64_t seed = 1;
};

struct TrainArgs {
  std::string corpus_path, config_path, out_path = "model.advm";
  std::string adversarial = "off";  // off | attention | hybrid
  std::string resume_path, checkpoint_path, log_path;
  // command-line overrides; only applied when the flag was given
  std::optional<int> epochs, batch_size, adv_start;
  std::optional<double> lr, lr_decay, p_adv, alpha_mtl;
  std::optional<std::uint64_t> seed;
};

struct AttackArgs {
  std::string model_path, method = "moving-window";
  double epsilon = 0.3, xi = 0.5;
  int gamma = 1, window = 4, stride = 2;
  std::string att_sub = "moving";
  std::string utterance;  // case1 | case2
  std::string corpus_path, split = "test";
  std::string out_prefix;
  int jobs = 1;
};

struct EvalArgs {
  std::string model_path, model_id, corpus_path, split = "test";
  std::string mode = "attention-greedy";
  int beam = 4;
  double lambda = 0.0;
  std::string method = "moving-window";
  double epsilon = 0.3, xi = 0.5;
  int gamma = 1, window = 4, stride = 2;
  std::uint64_t noise_seed = 1;
  std::string out_prefix;
  int jobs = 1;
};

struct GradcheckArgs {
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  int composites = 50, model_checks = 3, ctc_checks = 50;
};

const std::vector<Utterance>& pick_split(const Corpus& c,
                                         const std::string& name) {
  if (name == "train") return c.train;
  if (name == "dev") return c.dev;
  if (name == "test") return c.test;
  throw ConfigError("unknown split \"" + name + "\" (train|dev|test)");
}

AttackConfig make_attack_config(const std::string& method, double epsilon,
                                int gamma, int window, int stride, double xi,
                                const std::string& att_sub) {
  AttackConfig a;
  a.method = attack_method_from_string(method);
  a.epsilon = epsilon;
  a.gamma = gamma;
  a.window = window;
  a.stride = stride;
  a.xi = xi;
  if (att_sub == "static")
    a.hybrid_att = AttSubMethod::Static;
  else if (att_sub == "moving")
    a.hybrid_att = AttSubMethod::Moving;
  else
    throw ConfigError("unknown attack sub-method \"" + att_sub +
                      "\" (static|moving)");
  if (epsilon < 0.0) throw ConfigError("epsilon must be >= 0");
  if (gamma < 1) throw ConfigError("gamma must be >= 1");
  if (window < 1) throw ConfigError("window length must be >= 1");
  if (stride < 1) throw ConfigError("stride must be >= 1");
  if (xi < 0.0 || xi > 1.0) throw ConfigError("xi must be in [0,1]");
  return a;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + path);
  out << text;
}

int run_synth(const SynthArgs& a) {
  CorpusSpec spec;
  if (!a.spec_path.empty())
    spec = aaecli::parse_corpus_spec(aaecli::load_json(a.spec_path));
  if (a.seed_set) spec.seed = a.seed;
  Corpus corpus = generate_corpus(spec);
  save_corpus(corpus, a.out_path);
  std::cout << "wrote " << a.out_path << ": train=" << corpus.train.size()
            << " dev=" << corpus.dev.size() << " test=" << corpus.test.size()
            << " (K=" << spec.content_size << ", F=" << spec.feat_dim
            << ", seed=" << spec.seed << ")\n";
  return kExitOk;
}

int run_train(const TrainArgs& a) {
  if (a.corpus_path.empty()) throw ConfigError("train: --corpus is required");
  Corpus corpus = load_corpus(a.corpus_path);

  TrainConfig cfg;
  if (!a.config_path.empty())
    cfg = aaecli::parse_train_config(aaecli::load_json(a.config_path));
  if (a.epochs) cfg.epochs = *a.epochs;
  if (a.batch_size) cfg.batch_size = *a.batch_size;
  if (a.adv_start) cfg.adv_start_epoch = *a.adv_start;
  if (a.lr) cfg.learning_rate = *a.lr;
  if (a.lr_decay) cfg.lr_decay = *a.lr_decay;
  if (a.p_adv) cfg.p_adv = *a.p_adv;
  if (a.alpha_mtl) cfg.alpha_mtl = *a.alpha_mtl;
  if (a.seed) cfg.seed = *a.seed;

  bool adversarial = false;
  if (a.adversarial == "off") {
    adversarial = false;
  } else if (a.adversarial == "attention") {
    adversarial = true;
    cfg.xi_train = 0.0;
  } else if (a.adversarial == "hybrid") {
    adversarial = true;
    cfg.xi_train = 0.5;
  } else {
    throw ConfigError("unknown --adversarial mode \"" + a.adversarial +
                      "\" (off|attention|hybrid)");
  }

  std::ofstream log_file;
  std::ostream* log = &std::cout;
  if (!a.log_path.empty()) {
    log_file.open(a.log_path, std::ios::binary);
    if (!log_file) throw ConfigError("cannot write " + a.log_path);
    log = &log_file;
  }

  ModelConfig mc;
  mc.feat_dim = static_cast<int>(corpus.spec.feat_dim);
  mc.content_size = static_cast<int>(corpus.spec.content_size);

  TrainResult result;
  if (!a.resume_path.empty()) {
    auto [m, state] = load_train_checkpoint(a.resume_path);
    result = adversarial ? train_adversarial(m, corpus, cfg, log,
                                             a.checkpoint_path, &state)
                         : train_regular(m, corpus, cfg, log,
                                         a.checkpoint_path, &state);
    m.save(a.out_path);
  } else {
    HybridModel m(mc, cfg.seed);
    result = adversarial
                 ? train_adversarial(m, corpus, cfg, log, a.checkpoint_path)
                 : train_regular(m, corpus, cfg, log, a.checkpoint_path);
    m.save(a.out_path);
  }

  const double final_cer =
      result.epochs.empty() ? -1.0 : result.epochs.back().dev_cer;
  std::cout << "wrote " << a.out_path << " after "
            << (result.epochs.empty() ? 0 : result.epochs.back().epoch)
            << " epochs; dev CER " << final_cer << "%"
            << "; augmented " << result.batches_augmented << "/"
            << result.batches_seen << " minibatches\n";
  return kExitOk;
}

ordered_json attack_record(const HybridModel& m, const Vocabulary& voc,
                           const Utterance& u, const AttackConfig& cfg,
                           AdversarialExample* out_aae) {
  const std::vector<int> hyp_before = greedy_decode(m, u.features).tokens;
  AdversarialExample aae = run_attack(m, u.features, cfg);
  const std::vector<int> hyp_after = greedy_decode(m, aae.perturbed).tokens;

  ordered_json rec;
  rec["id"] = u.id;
  rec["method"] = aae.method;
  rec["epsilon"] = cfg.epsilon;
  rec["truth"] = voc.render(u.transcript);
  rec["reference"] = voc.render(aae.reference);
  rec["hyp_before"] = voc.render(hyp_before);
  rec["hyp_after"] = voc.render(hyp_after);
  rec["cer_before"] = cer(hyp_before, u.transcript);
  rec["cer_after"] = cer(hyp_after, u.transcript);
  rec["wer_before"] = wer(hyp_before, u.transcript, voc);
  rec["wer_after"] = wer(hyp_after, u.transcript, voc);
  rec["delta_linf"] = aae.delta.cwiseAbs().maxCoeff();
  if (out_aae) *out_aae = std::move(aae);
  return rec;
}

int run_attack_cmd(const AttackArgs& a) {
  if (a.model_path.empty()) throw ConfigError("attack: --model is required");
  const AttackConfig cfg = make_attack_config(a.method, a.epsilon, a.gamma,
                                              a.window, a.stride, a.xi,
                                              a.att_sub);
  HybridModel m = HybridModel::load(a.model_path);
  const Vocabulary voc = m.vocab();

  std::vector<Utterance> targets;
  CorpusSpec spec_echo;
  if (!a.utterance.empty()) {
    if (!a.corpus_path.empty())
      throw ConfigError("attack: give either --utterance or --corpus, not both");
    targets.push_back(make_case_study(a.utterance));
  } else if (!a.corpus_path.empty()) {
    Corpus corpus = load_corpus(a.corpus_path);
    if (corpus.vocab.content_size != voc.content_size ||
        static_cast<int>(corpus.spec.feat_dim) != m.config().feat_dim)
      throw ConfigError("attack: model and corpus dimensions do not match");
    targets = pick_split(corpus, a.split);
    spec_echo = corpus.spec;
  } else {
    throw ConfigError("attack: need --utterance case1|case2 or --corpus PATH");
  }
  if (static_cast<int>(spec_echo.feat_dim) != m.config().feat_dim ||
      static_cast<int>(spec_echo.content_size) != voc.content_size) {
    spec_echo.feat_dim = static_cast<std::uint32_t>(m.config().feat_dim);
    spec_echo.content_size = static_cast<std::uint32_t>(voc.content_size);
  }

  ordered_json report;
  report["model"] = a.model_path;
  report["method"] = a.method;
  report["epsilon"] = a.epsilon;
  report["utterances"] = ordered_json::array();

  std::vector<Utterance> perturbed;
  long long dist_before = 0, dist_after = 0, ref_len = 0;
  for (const Utterance& u : targets) {
    AdversarialExample aae;
    ordered_json rec = attack_record(m, voc, u, cfg, &aae);
    dist_before +=
        edit_distance(greedy_decode(m, u.features).tokens, u.transcript)
            .distance;
    dist_after +=
        edit_distance(greedy_decode(m, aae.perturbed).tokens, u.transcript)
            .distance;
    ref_len += static_cast<long long>(u.transcript.size());
    report["utterances"].push_back(rec);
    Utterance p = u;
    p.id = u.id + "-aae";
    p.features = aae.perturbed;
    perturbed.push_back(std::move(p));

    if (targets.size() <= 4) {
      std::cout << u.id << " [" << rec["method"].get<std::string>()
                << ", eps=" << cfg.epsilon << "]\n"
                << "  truth:  " << rec["truth"].get<std::string>() << "\n"
                << "  before: " << rec["hyp_before"].get<std::string>()
                << "  (CER " << rec["cer_before"].get<double>() << "%, WER "
                << rec["wer_before"].get<double>() << "%)\n"
                << "  after:  " << rec["hyp_after"].get<std::string>()
                << "  (CER " << rec["cer_after"].get<double>() << "%, WER "
                << rec["wer_after"].get<double>() << "%)\n";
    }
  }

  const double cer_before =
      100.0 * static_cast<double>(dist_before) / static_cast<double>(ref_len);
  const double cer_after =
      100.0 * static_cast<double>(dist_after) / static_cast<double>(ref_len);
  report["cer_before"] = cer_before;
  report["cer_after"] = cer_after;
  std::cout << "attacked " << targets.size() << " utterance(s): CER "
            << cer_before << "% -> " << cer_after << "%\n";

  if (!a.out_prefix.empty()) {
    Corpus out_corpus;
    out_corpus.spec = spec_echo;
    out_corpus.spec.n_train = 0;
    out_corpus.spec.n_dev = 0;
    out_corpus.spec.n_test = static_cast<std::uint32_t>(perturbed.size());
    out_corpus.vocab = voc;
    out_corpus.test = std::move(perturbed);
    save_corpus(out_corpus, a.out_prefix + ".advc");
    write_text_file(a.out_prefix + ".json", report.dump(2) + "\n");
    std::cout << "wrote " << a.out_prefix << ".advc and " << a.out_prefix
              << ".json\n";
  }
  return kExitOk;
}

int run_eval(const EvalArgs& a) {
  if (a.model_path.empty()) throw ConfigError("eval: --model is required");
  if (a.corpus_path.empty()) throw ConfigError("eval: --corpus is required");
  HybridModel m = HybridModel::load(a.model_path);
  Corpus corpus = load_corpus(a.corpus_path);
  if (corpus.vocab.content_size != m.vocab().content_size ||
      static_cast<int>(corpus.spec.feat_dim) != m.config().feat_dim)
    throw ConfigError("eval: model and corpus dimensions do not match");

  DecodeConfig dec;
  dec.mode = decode_mode_from_string(a.mode);
  dec.beam = a.beam;
  dec.lambda = a.lambda;
  if (a.beam < 1) throw ConfigError("beam must be >= 1");
  if (a.lambda < 0.0 || a.lambda > 1.0)
    throw ConfigError("lambda must be in [0,1]");

  const AttackConfig atk = make_attack_config(a.method, a.epsilon, a.gamma,
                                              a.window, a.stride, a.xi,
                                              "moving");
  const std::string model_id =
      a.model_id.empty() ? a.model_path : a.model_id;
  EvalReport report = four_condition_report(
      m, model_id, pick_split(corpus, a.split), corpus.vocab, dec, atk,
      a.noise_seed, a.jobs);

  std::cout << report.to_table();
  if (!a.out_prefix.empty()) {
    write_text_file(a.out_prefix + ".json", report.to_json());
    write_text_file(a.out_prefix + ".txt", report.to_table());
    std::cout << "wrote " << a.out_prefix << ".json and " << a.out_prefix
              << ".txt\n";
  }
  return kExitOk;
}

int run_gradcheck(const GradcheckArgs& a) {
  if (a.tolerance <= 0.0) throw ConfigError("tolerance must be > 0");
  CheckSummary all;

  CheckSummary prim = gradcheck_primitives(a.seed, a.tolerance);
  std::printf("primitives: %d checks, worst rel err %.3e, %s\n", prim.checks,
              prim.worst_err, prim.ok() ? "ok" : "FAIL");
  all.merge(prim);

  CheckSummary comp = gradcheck_composites(a.seed + 1, a.composites,
                                           a.tolerance);
  std::printf("composites: %d checks, worst rel err %.3e, %s\n", comp.checks,
              comp.worst_err, comp.ok() ? "ok" : "FAIL");
  all.merge(comp);

  CheckSummary model = gradcheck_model(a.seed + 2, a.model_checks, a.tolerance);
  std::printf("model:      %d checks, worst rel err %.3e, %s\n", model.checks,
              model.worst_err, model.ok() ? "ok" : "FAIL");
  all.merge(model);

  CheckSummary ctc = ctc_oracle_check(a.seed + 3, a.ctc_checks);
  std::printf("ctc oracle: %d checks, worst rel err %.3e, %s\n", ctc.checks,
              ctc.worst_err, ctc.ok() ? "ok" : "FAIL");
  all.merge(ctc);

  for (const std::string& f : all.failures) std::cout << "  " << f << "\n";
  if (!all.ok()) throw NumericalError("gradient checks failed");
  std::cout << "all " << all.checks << " gradient checks passed\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"aaebench: adversarial-example workbench for a hybrid "
               "CTC/attention recognizer on synthetic speech-like features"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand(
      "synth-data", "Generate the deterministic synthetic corpus");
  synth->add_option("--spec", sa.spec_path, "Corpus spec JSON file");
  synth->add_option("--out", sa.out_path, "Output corpus path")->required();
  synth->add_option("--seed", sa.seed, "Override the corpus seed")
      ->capture_default_str();

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a hybrid CTC/attention model");
  train->add_option("--corpus", ta.corpus_path, "Corpus file")->required();
  train->add_option("--config", ta.config_path, "Training config JSON file");
  train->add_option("--out", ta.out_path, "Output model path")
      ->capture_default_str();
  train
      ->add_option("--adversarial", ta.adversarial,
                   "Adversarial training mode (off|attention|hybrid); "
                   "p_adv=0.05, eps~U[0,0.3], regular epochs N=5")
      ->capture_default_str();
  train->add_option("--resume", ta.resume_path, "Resume from a training checkpoint");
  train->add_option("--checkpoint", ta.checkpoint_path,
                    "Write a resumable checkpoint after each epoch");
  train->add_option("--log", ta.log_path, "Per-epoch JSON log file");
  train->add_option("--epochs", ta.epochs, "Override epoch count");
  train->add_option("--batch-size", ta.batch_size, "Override batch size");
  train->add_option("--adv-start", ta.adv_start,
                    "Override N (regular epochs before augmentation)");
  train->add_option("--lr", ta.lr, "Override learning rate");
  train->add_option("--lr-decay", ta.lr_decay,
                    "Override per-epoch learning-rate decay");
  train->add_option("--p-adv", ta.p_adv, "Override augmentation probability");
  train->add_option("--alpha-mtl", ta.alpha_mtl, "Override CTC loss weight");
  train->add_option("--seed", ta.seed, "Override training seed");

  AttackArgs aa;
  auto* attack = app.add_subcommand("attack", "Generate adversarial examples");
  attack->add_option("--model", aa.model_path, "Model file")->required();
  attack
      ->add_option("--method", aa.method,
                   "whole-seq|static-window|moving-window|ctc|hybrid")
      ->capture_default_str();
  attack->add_option("--epsilon", aa.epsilon, "Perturbation bound")
      ->capture_default_str();
  attack->add_option("--gamma", aa.gamma, "Static window start (1-indexed)")
      ->capture_default_str();
  attack->add_option("--lw", aa.window, "Window length in tokens")
      ->capture_default_str();
  attack->add_option("--nu", aa.stride, "Moving-window stride in tokens")
      ->capture_default_str();
  attack->add_option("--xi", aa.xi, "CTC weight for the hybrid attack")
      ->capture_default_str();
  attack
      ->add_option("--att-sub", aa.att_sub,
                   "Attention sub-method inside hybrid (static|moving)")
      ->capture_default_str();
  attack->add_option("--utterance", aa.utterance,
                     "Built-in case study (case1|case2)");
  attack->add_option("--corpus", aa.corpus_path, "Corpus file to attack");
  attack->add_option("--split", aa.split, "Corpus split")
      ->capture_default_str();
  attack->add_option("--out", aa.out_prefix,
                     "Output prefix (.advc dataset + .json report)");

  EvalArgs ea;
  auto* eval = app.add_subcommand(
      "eval", "Four-condition robustness report (clean, AAE, 30dB, 5dB noise)");
  eval->add_option("--model", ea.model_path, "Model file")->required();
  eval->add_option("--model-id", ea.model_id, "Model label in the report");
  eval->add_option("--corpus", ea.corpus_path, "Corpus file")->required();
  eval->add_option("--split", ea.split, "Corpus split")->capture_default_str();
  eval
      ->add_option("--mode", ea.mode,
                   "attention-greedy|attention-beam|ctc-greedy|joint-rescored")
      ->capture_default_str();
  eval->add_option("--beam", ea.beam, "Beam width")->capture_default_str();
  eval->add_option("--lambda", ea.lambda, "CTC weight in joint rescoring")
      ->capture_default_str();
  eval
      ->add_option("--method", ea.method,
                   "Attack for the AAE condition (whole-seq|static-window|"
                   "moving-window|ctc|hybrid)")
      ->capture_default_str();
  eval->add_option("--epsilon", ea.epsilon, "Attack perturbation bound")
      ->capture_default_str();
  eval->add_option("--gamma", ea.gamma, "Static window start")
      ->capture_default_str();
  eval->add_option("--lw", ea.window, "Window length")->capture_default_str();
  eval->add_option("--nu", ea.stride, "Moving-window stride")
      ->capture_default_str();
  eval->add_option("--xi", ea.xi, "Hybrid CTC weight")->capture_default_str();
  eval->add_option("--noise-seed", ea.noise_seed, "Noise condition seed")
      ->capture_default_str();
  eval->add_option("--jobs", ea.jobs, "Utterance-level worker threads")
      ->capture_default_str();
  eval->add_option("--out", ea.out_prefix, "Output prefix (.json + .txt)");

  GradcheckArgs ga;
  auto* gradcheck = app.add_subcommand(
      "gradcheck", "Finite-difference and CTC-oracle verification");
  gradcheck->add_option("--seed", ga.seed, "Base seed")->capture_default_str();
  gradcheck->add_option("--tolerance", ga.tolerance, "Relative error tolerance")
      ->capture_default_str();
  gradcheck->add_option("--composites", ga.composites, "Random composite count")
      ->capture_default_str();
  gradcheck->add_option("--model-checks", ga.model_checks,
                        "Tiny-model check count")
      ->capture_default_str();
  gradcheck->add_option("--ctc-checks", ga.ctc_checks,
                        "CTC oracle instance count")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }
  sa.seed_set = synth->count("--seed") > 0;

  try {
    if (synth->parsed()) return run_synth(sa);
    if (train->parsed()) return run_train(ta);
    if (attack->parsed()) return run_attack_cmd(aa);
    if (eval->parsed()) return run_eval(ea);
    if (gradcheck->parsed()) return run_gradcheck(ga);
  } catch (const aae::InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const aae::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const aae::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const aae::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const aae::ShapeError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitNumerical;
  }
  return kExitConfig;
}
