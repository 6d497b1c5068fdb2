#include "aae/corpus.hpp"

#include <random>

#include "aae/errors.hpp"
#include "aae/io.hpp"
#include "aae/rng.hpp"

namespace aae {

namespace {

constexpr std::uint32_t kCorpusVersion = 1;

void validate_spec(const CorpusSpec& s) {
  if (s.content_size < 2) throw ConfigError("corpus: content_size must be >= 2");
  if (s.n_train == 0 || s.n_dev == 0 || s.n_test == 0)
    throw ConfigError("corpus: split counts must be positive");
  if (s.feat_dim == 0) throw ConfigError("corpus: feat_dim must be positive");
  if (s.min_frames < 3)
    throw ConfigError("corpus: min_frames must be >= 3 (T >= 3L invariant)");
  if (s.max_frames < s.min_frames) throw ConfigError("corpus: bad frame range");
  if (s.min_len < 1 || s.max_len < s.min_len)
    throw ConfigError("corpus: bad transcript length range");
  if (s.noise_std < 0.0) throw ConfigError("corpus: negative noise_std");
}

Utterance synth_utterance(const CorpusSpec& spec, const Eigen::MatrixXd& protos,
                          std::string id, const std::vector<int>& transcript,
                          const std::vector<int>& frames_per_token,
                          std::mt19937_64* noise_rng) {
  Eigen::Index t_total = 0;
  for (int n : frames_per_token) t_total += n;
  Utterance u;
  u.id = std::move(id);
  u.transcript = transcript;
  u.features.resize(t_total, spec.feat_dim);
  std::normal_distribution<double> noise(0.0, spec.noise_std);
  Eigen::Index t = 0;
  for (std::size_t i = 0; i < transcript.size(); ++i)
    for (int rep = 0; rep < frames_per_token[i]; ++rep, ++t)
      for (std::uint32_t f = 0; f < spec.feat_dim; ++f) {
        double x = protos(transcript[i] - 1, f);
        if (noise_rng && spec.noise_std > 0.0) x += noise(*noise_rng);
        u.features(t, f) = x;
      }
  return u;
}

std::vector<Utterance> synth_split(const CorpusSpec& spec,
                                   const Eigen::MatrixXd& protos,
                                   const std::string& name, std::uint32_t count,
                                   std::uint64_t stream) {
  auto rng = make_rng(spec.seed, stream);
  std::uniform_int_distribution<int> len_dist(static_cast<int>(spec.min_len),
                                              static_cast<int>(spec.max_len));
  std::uniform_int_distribution<int> tok_dist(1, static_cast<int>(spec.content_size));
  std::uniform_int_distribution<int> frames_dist(static_cast<int>(spec.min_frames),
                                                 static_cast<int>(spec.max_frames));
  std::vector<Utterance> out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const int len = len_dist(rng);
    std::vector<int> transcript(len), frames(len);
    for (int& t : transcript) t = tok_dist(rng);
    for (int& n : frames) n = frames_dist(rng);
    out.push_back(synth_utterance(spec, protos, name + "-" + std::to_string(i),
                                  transcript, frames, &rng));
  }
  return out;
}

void write_utterance(ByteWriter& w, const Utterance& u) {
  w.str(u.id);
  w.u32(static_cast<std::uint32_t>(u.transcript.size()));
  for (int t : u.transcript) w.u32(static_cast<std::uint32_t>(t));
  w.u32(static_cast<std::uint32_t>(u.features.rows()));
  w.u32(static_cast<std::uint32_t>(u.features.cols()));
  for (Eigen::Index r = 0; r < u.features.rows(); ++r)
    for (Eigen::Index c = 0; c < u.features.cols(); ++c) w.f64(u.features(r, c));
}

Utterance read_utterance(ByteReader& r) {
  Utterance u;
  u.id = r.str();
  const std::uint32_t len = r.u32();
  u.transcript.resize(len);
  for (std::uint32_t i = 0; i < len; ++i) u.transcript[i] = static_cast<int>(r.u32());
  const std::uint32_t t_len = r.u32(), f_dim = r.u32();
  u.features.resize(t_len, f_dim);
  for (std::uint32_t i = 0; i < t_len; ++i)
    for (std::uint32_t j = 0; j < f_dim; ++j) u.features(i, j) = r.f64();
  return u;
}

}  // namespace

std::string Vocabulary::token_text(int id) const {
  if (id == blank()) return "<b>";
  if (id == sos()) return "<s>";
  if (id == eos()) return "</s>";
  if (id == space()) return "_";
  if (id > 1 && id <= content_size)
    return std::string(1, static_cast<char>('a' + id - 2));
  return "<?" + std::to_string(id) + ">";
}

std::string Vocabulary::render(const std::vector<int>& tokens) const {
  std::string s;
  for (int t : tokens) s += token_text(t);
  return s;
}

Eigen::MatrixXd token_prototypes(const CorpusSpec& spec) {
  Eigen::MatrixXd protos(spec.content_size, spec.feat_dim);
  for (std::uint32_t k = 1; k <= spec.content_size; ++k) {
    auto rng = make_rng(spec.seed, 0x50524f544f000000ULL + k);  // per-token stream
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::uint32_t f = 0; f < spec.feat_dim; ++f) protos(k - 1, f) = unit(rng);
  }
  return protos;
}

Corpus generate_corpus(const CorpusSpec& spec) {
  validate_spec(spec);
  const Eigen::MatrixXd protos = token_prototypes(spec);
  Corpus c;
  c.spec = spec;
  c.vocab.content_size = static_cast<int>(spec.content_size);
  c.train = synth_split(spec, protos, "train", spec.n_train, 1);
  c.dev = synth_split(spec, protos, "dev", spec.n_dev, 2);
  c.test = synth_split(spec, protos, "test", spec.n_test, 3);
  return c;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  ByteWriter w;
  w.magic("ADVC");
  w.u32(kCorpusVersion);
  const CorpusSpec& s = corpus.spec;
  w.u64(s.seed);
  w.u32(s.n_train);
  w.u32(s.n_dev);
  w.u32(s.n_test);
  w.u32(s.content_size);
  w.u32(s.feat_dim);
  w.u32(s.min_frames);
  w.u32(s.max_frames);
  w.u32(s.min_len);
  w.u32(s.max_len);
  w.f64(s.noise_std);
  for (const auto* split : {&corpus.train, &corpus.dev, &corpus.test}) {
    w.u32(static_cast<std::uint32_t>(split->size()));
    for (const Utterance& u : *split) write_utterance(w, u);
  }
  w.write_file(path);
}

Corpus load_corpus(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("ADVC");
  const std::uint32_t version = r.u32();
  if (version != kCorpusVersion)
    throw ParseError(r.offset(), "unsupported corpus version " +
                                     std::to_string(version));
  Corpus c;
  CorpusSpec& s = c.spec;
  s.seed = r.u64();
  s.n_train = r.u32();
  s.n_dev = r.u32();
  s.n_test = r.u32();
  s.content_size = r.u32();
  s.feat_dim = r.u32();
  s.min_frames = r.u32();
  s.max_frames = r.u32();
  s.min_len = r.u32();
  s.max_len = r.u32();
  s.noise_std = r.f64();
  c.vocab.content_size = static_cast<int>(s.content_size);
  for (auto* split : {&c.train, &c.dev, &c.test}) {
    const std::uint32_t n = r.u32();
    split->reserve(n);
    for (std::uint32_t i = 0; i < n; ++i) split->push_back(read_utterance(r));
  }
  r.expect_end();
  return c;
}

Utterance make_case_study(const std::string& name) {
  CorpusSpec spec;  // defaults; noise forced off below
  spec.noise_std = 0.0;
  const Eigen::MatrixXd protos = token_prototypes(spec);
  // Fixed transcripts standing in for the two reference sentences: a longer
  // two-"sentence" utterance and a shorter one. Ids 2..12 are letters a..k,
  // id 1 the word separator.
  std::vector<int> transcript;
  if (name == "case1") {
    transcript = {3, 6, 4, 1, 7, 2, 8, 1, 3, 6, 4, 1, 9, 2, 10, 4};
  } else if (name == "case2") {
    transcript = {2, 5, 8, 1, 11, 2, 12, 6, 4};
  } else {
    throw ConfigError("unknown case study \"" + name + "\" (case1|case2)");
  }
  std::vector<int> frames(transcript.size());
  for (std::size_t i = 0; i < frames.size(); ++i)
    frames[i] = 4 + static_cast<int>(i % 3);  // 4,5,6 repeating
  Utterance u = synth_utterance(spec, protos, name, transcript, frames, nullptr);
  return u;
}

}  // namespace aae
