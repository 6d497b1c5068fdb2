#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aae/attacks.hpp"
#include "aae/corpus.hpp"
#include "aae/errors.hpp"
#include "aae/eval.hpp"
#include "aae/training.hpp"

namespace aaecli {

using nlohmann::json;

inline json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw aae::ConfigError("cannot open config file: " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw aae::ConfigError("malformed JSON in " + path + ": " + e.what());
  }
}

inline void reject_unknown(const json& j, const std::vector<std::string>& known,
                           const std::string& where) {
  if (!j.is_object())
    throw aae::ConfigError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw aae::ConfigError(where + ": unknown key \"" + key + "\"");
}

inline aae::CorpusSpec parse_corpus_spec(const json& j) {
  reject_unknown(j,
                 {"seed", "n_train", "n_dev", "n_test", "content_size",
                  "feat_dim", "min_frames", "max_frames", "min_len", "max_len",
                  "noise_std"},
                 "corpus spec");
  aae::CorpusSpec s;
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("n_train")) s.n_train = j["n_train"].get<std::uint32_t>();
  if (j.contains("n_dev")) s.n_dev = j["n_dev"].get<std::uint32_t>();
  if (j.contains("n_test")) s.n_test = j["n_test"].get<std::uint32_t>();
  if (j.contains("content_size"))
    s.content_size = j["content_size"].get<std::uint32_t>();
  if (j.contains("feat_dim")) s.feat_dim = j["feat_dim"].get<std::uint32_t>();
  if (j.contains("min_frames")) s.min_frames = j["min_frames"].get<std::uint32_t>();
  if (j.contains("max_frames")) s.max_frames = j["max_frames"].get<std::uint32_t>();
  if (j.contains("min_len")) s.min_len = j["min_len"].get<std::uint32_t>();
  if (j.contains("max_len")) s.max_len = j["max_len"].get<std::uint32_t>();
  if (j.contains("noise_std")) s.noise_std = j["noise_std"].get<double>();
  return s;
}

inline aae::TrainConfig parse_train_config(const json& j) {
  reject_unknown(j,
                 {"epochs", "adv_start_epoch", "p_adv", "eps_min", "eps_max",
                  "xi_train", "alpha_mtl", "batch_size", "learning_rate",
                  "lr_decay", "clip_norm", "seed"},
                 "train config");
  aae::TrainConfig c;
  if (j.contains("epochs")) c.epochs = j["epochs"].get<int>();
  if (j.contains("adv_start_epoch"))
    c.adv_start_epoch = j["adv_start_epoch"].get<int>();
  if (j.contains("p_adv")) c.p_adv = j["p_adv"].get<double>();
  if (j.contains("eps_min")) c.eps_min = j["eps_min"].get<double>();
  if (j.contains("eps_max")) c.eps_max = j["eps_max"].get<double>();
  if (j.contains("xi_train")) c.xi_train = j["xi_train"].get<double>();
  if (j.contains("alpha_mtl")) c.alpha_mtl = j["alpha_mtl"].get<double>();
  if (j.contains("batch_size")) c.batch_size = j["batch_size"].get<int>();
  if (j.contains("learning_rate"))
    c.learning_rate = j["learning_rate"].get<double>();
  if (j.contains("lr_decay")) c.lr_decay = j["lr_decay"].get<double>();
  if (j.contains("clip_norm")) c.clip_norm = j["clip_norm"].get<double>();
  if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
  return c;
}

}  // namespace aaecli
