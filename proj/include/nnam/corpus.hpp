// SPDX-License-Identifier: Apache-2.0
/**
 * @file   corpus.hpp
 * @brief  Labeled utterance corpora: the text container format, the
 *         synthetic HMM corpus generator, and dev splitting.
 */
#ifndef NNAM_CORPUS_HPP
#define NNAM_CORPUS_HPP

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nnam/decoder.hpp"
#include "nnam/features.hpp"
#include "nnam/io.hpp"
#include "nnam/numeric.hpp"

namespace nnam {

struct Utterance {
  std::string id;
  Matrix features; ///< T x D
  std::vector<std::size_t> labels;
  PhoneSequence transcript;

  std::size_t frames() const noexcept { return features.rows(); }

  friend bool operator==(const Utterance &, const Utterance &) = default;
};

struct Corpus {
  std::vector<Utterance> train, dev, test;
  std::size_t num_classes = 0;
  std::size_t feature_dim = 0;
  DecodeGraph graph;

  friend bool operator==(const Corpus &, const Corpus &) = default;
};

inline std::vector<Matrix> feature_list(std::span<const Utterance> utts) {
  std::vector<Matrix> out;
  out.reserve(utts.size());
  for (const auto &u : utts)
    out.push_back(u.features);
  return out;
}

inline std::vector<std::vector<std::size_t>> label_list(std::span<const Utterance> utts) {
  std::vector<std::vector<std::size_t>> out;
  for (const auto &u : utts)
    out.push_back(u.labels);
  return out;
}

inline std::vector<PhoneSequence> transcript_list(std::span<const Utterance> utts) {
  std::vector<PhoneSequence> out;
  for (const auto &u : utts)
    out.push_back(u.transcript);
  return out;
}

inline std::size_t total_frames(std::span<const Utterance> utts) {
  std::size_t n = 0;
  for (const auto &u : utts)
    n += u.frames();
  return n;
}

/// Checks every corpus invariant; throws DataError naming the offender.
inline void validate_corpus(const Corpus &c) {
  std::set<std::string> ids;
  const std::set<std::string> phones(c.graph.phones.phones.begin(), c.graph.phones.phones.end());
  auto check_split = [&](const std::vector<Utterance> &split, const char *name) {
    for (const auto &u : split) {
      const std::string where = std::string(name) + " utterance '" + u.id + "'";
      if (!ids.insert(u.id).second)
        throw DataError("duplicate utterance id '" + u.id + "'");
      if (u.frames() == 0)
        throw DataError(where + " has no frames");
      if (u.features.cols() != c.feature_dim)
        throw DataError(where + " has feature dim " + std::to_string(u.features.cols()) +
                        ", corpus has " + std::to_string(c.feature_dim));
      if (u.labels.size() != u.frames())
        throw DataError(where + ": " + std::to_string(u.labels.size()) + " labels for " +
                        std::to_string(u.frames()) + " frames");
      for (auto l : u.labels)
        if (l >= c.num_classes)
          throw DataError(where + ": label " + std::to_string(l) + " >= num_classes " +
                          std::to_string(c.num_classes));
      if (u.transcript.empty())
        throw DataError(where + " has an empty transcript");
      for (const auto &p : u.transcript)
        if (!phones.count(p))
          throw DataError(where + ": unknown phone '" + p + "'");
      for (double v : u.features.values())
        if (!std::isfinite(v))
          throw DataError(where + " has a non-finite feature");
    }
  };
  check_split(c.train, "train");
  check_split(c.dev, "dev");
  check_split(c.test, "test");
}

// ---------------------------------------------------------------------------
// Text container
// ---------------------------------------------------------------------------

/**
 * `#utt <id> <T> <D>`, T feature rows, `#labels` + one line of T labels,
 * `#phones` + one line of symbols. Other lines starting with '#' are comments.
 */
inline std::string write_utterances(std::span<const Utterance> utts) {
  std::ostringstream os;
  for (const auto &u : utts) {
    os << "#utt " << u.id << ' ' << u.frames() << ' ' << u.features.cols() << '\n';
    for (std::size_t t = 0; t < u.frames(); ++t) {
      for (std::size_t d = 0; d < u.features.cols(); ++d)
        os << (d ? " " : "") << format_double(u.features(t, d));
      os << '\n';
    }
    os << "#labels\n";
    for (std::size_t t = 0; t < u.labels.size(); ++t)
      os << (t ? " " : "") << u.labels[t];
    os << "\n#phones\n";
    for (std::size_t k = 0; k < u.transcript.size(); ++k)
      os << (k ? " " : "") << u.transcript[k];
    os << '\n';
  }
  return os.str();
}

inline std::vector<Utterance> parse_utterances(const std::string &text,
                                               const std::string &source) {
  const auto lines = split_lines(text);
  std::vector<Utterance> out;
  std::size_t i = 0;
  std::string current;
  auto fail = [&](std::size_t line, const std::string &msg) {
    return ParseError(source + ":" + std::to_string(line + 1) + ": " +
                      (current.empty() ? "" : "utterance '" + current + "': ") + msg);
  };
  auto next_content = [&]() -> std::size_t {
    while (i < lines.size()) {
      const auto toks = split_ws(lines[i]);
      const bool directive = !toks.empty() && (toks[0] == "#utt" || toks[0] == "#labels" ||
                                               toks[0] == "#phones");
      if (!toks.empty() && (directive || toks[0].front() != '#'))
        return i;
      ++i;
    }
    return i;
  };
  auto expect_directive = [&](std::string_view name) {
    if (next_content() >= lines.size())
      throw fail(lines.size() - 1, "unexpected end of file, expected " + std::string(name));
    const auto toks = split_ws(lines[i]);
    if (toks.size() != 1 || toks[0] != name)
      throw fail(i, "expected " + std::string(name));
    ++i;
  };
  auto ints_line = [&](std::size_t count) {
    if (next_content() >= lines.size())
      throw fail(lines.size() - 1, "unexpected end of file");
    const auto toks = split_ws(lines[i]);
    if (toks.size() != count)
      throw fail(i, "expected " + std::to_string(count) + " labels, got " +
                      std::to_string(toks.size()));
    std::vector<std::size_t> v(count);
    for (std::size_t k = 0; k < count; ++k)
      if (!parse_int(toks[k], v[k]))
        throw fail(i, "bad label '" + std::string(toks[k]) + "'");
    ++i;
    return v;
  };

  while (next_content() < lines.size()) {
    const auto head = split_ws(lines[i]);
    current.clear();
    Utterance u;
    std::size_t T = 0, D = 0;
    if (head.size() != 4 || head[0] != "#utt" || !parse_int(head[2], T) ||
        !parse_int(head[3], D))
      throw fail(i, "expected '#utt <id> <T> <D>'");
    u.id = std::string(head[1]);
    current = u.id;
    ++i;
    u.features = Matrix(T, D);
    for (std::size_t t = 0; t < T; ++t) {
      if (next_content() >= lines.size())
        throw fail(lines.size() - 1, "unexpected end of file in feature rows");
      const auto toks = split_ws(lines[i]);
      if (toks.size() != D)
        throw fail(i, "feature row has " + std::to_string(toks.size()) + " values, expected " +
                        std::to_string(D));
      for (std::size_t d = 0; d < D; ++d)
        if (!parse_double(toks[d], u.features(t, d)))
          throw fail(i, "bad number '" + std::string(toks[d]) + "'");
      ++i;
    }
    expect_directive("#labels");
    u.labels = ints_line(T);
    expect_directive("#phones");
    if (next_content() >= lines.size())
      throw fail(lines.size() - 1, "unexpected end of file, expected transcript");
    for (auto tok : split_ws(lines[i]))
      u.transcript.emplace_back(tok);
    ++i;
    out.push_back(std::move(u));
  }
  return out;
}

/// Writes train/dev/test plus the decoder sidecars into `dir`.
inline void save_corpus(const std::filesystem::path &dir, const Corpus &c) {
  write_file_atomic(dir / "train.txt", write_utterances(c.train));
  write_file_atomic(dir / "dev.txt", write_utterances(c.dev));
  write_file_atomic(dir / "test.txt", write_utterances(c.test));
  save_decode_graph(dir, c.graph);
}

/**
 * Loads and validates a corpus directory (three splits plus decoder
 * sidecars). num_classes comes from the HMM table.
 */
inline Corpus load_corpus(const std::filesystem::path &dir) {
  Corpus c;
  auto load_split = [&](const char *name) {
    const auto path = dir / name;
    return parse_utterances(read_file(path), path.string());
  };
  c.train = load_split("train.txt");
  c.dev = load_split("dev.txt");
  c.test = load_split("test.txt");
  if (c.train.empty())
    throw DataError(dir.string() + ": training split is empty");
  c.feature_dim = c.train.front().features.cols();

  c.graph = load_decode_graph(dir);
  for (const auto &h : c.graph.hmms)
    for (const auto &st : h.states)
      c.num_classes = std::max(c.num_classes, st.class_index + 1);
  validate_corpus(c);
  return c;
}

// ---------------------------------------------------------------------------
// Synthetic corpus
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::size_t phones = 10;
  std::size_t states = 2;
  std::size_t feature_dim = 12;
  std::size_t train = 120;
  std::size_t dev = 20;
  std::size_t test = 20;
  std::size_t min_frames = 30;
  std::size_t max_frames = 80;
  double noise = 1.0;       ///< std of the additive Gaussian noise
  double self_loop = 0.5;   ///< HMM state self-loop probability
  double lm_sharpness = 1.5; ///< std of the bigram logits

  void validate() const {
    if (phones < 2)
      throw ConfigError("synthetic corpus needs at least 2 phones");
    if (states < 1 || feature_dim < 1)
      throw ConfigError("synthetic corpus needs states >= 1 and feature_dim >= 1");
    if (train < 1)
      throw ConfigError("synthetic corpus needs at least one training utterance");
    if (min_frames < states || max_frames < min_frames)
      throw ConfigError("synthetic frame range must satisfy states <= min <= max");
    if (max_frames < min_frames + states)
      throw ConfigError("synthetic frame range too narrow for whole phones");
    if (!(noise >= 0.0) || !(self_loop > 0.0 && self_loop < 1.0) || !(lm_sharpness >= 0.0))
      throw ConfigError("synthetic noise, self_loop or lm_sharpness out of range");
  }
};

/// Class-conditional generator behind a synthetic corpus.
struct SynthModel {
  DecodeGraph graph;
  Matrix means; ///< classes x feature_dim
};

namespace detail {

inline std::size_t sample_log_categorical(std::span<const double> logp, Rng &rng) {
  double u = rng.uniform();
  for (std::size_t k = 0; k < logp.size(); ++k) {
    u -= std::exp(logp[k]);
    if (u < 0.0)
      return k;
  }
  return logp.size() - 1;
}

inline Vector random_log_distribution(std::size_t n, double sharpness, Rng &rng) {
  Vector v(n);
  for (auto &x : v)
    x = sharpness * rng.normal();
  return log_softmax(v);
}

inline std::string synth_phone_name(std::size_t p) {
  std::string s = std::to_string(p);
  return "p" + std::string(s.size() < 2 ? 2 - s.size() : 0, '0') + s;
}

} // namespace detail

inline SynthModel make_synth_model(const SynthSpec &spec, Rng &rng) {
  spec.validate();
  SynthModel m;
  std::vector<std::string> names;
  for (std::size_t p = 0; p < spec.phones; ++p)
    names.push_back(detail::synth_phone_name(p));
  m.graph.phones = PhoneSet::with_identity_map(names);
  m.graph.hmms = uniform_hmms(spec.phones, spec.states, spec.self_loop);
  m.graph.lm.initial = detail::random_log_distribution(spec.phones, spec.lm_sharpness, rng);
  m.graph.lm.transition = Matrix(spec.phones, spec.phones);
  for (std::size_t i = 0; i < spec.phones; ++i) {
    const Vector row = detail::random_log_distribution(spec.phones, spec.lm_sharpness, rng);
    std::copy(row.begin(), row.end(), m.graph.lm.transition.row(i).begin());
  }
  m.means = Matrix(spec.phones * spec.states, spec.feature_dim);
  for (auto &v : m.means.values())
    v = rng.normal();
  return m;
}

/**
 * One utterance: draw a target length in [min, max], sample phones from the
 * bigram and walk each phone's HMM until the target is reached; resample
 * if the last phone overshoots max.
 */
inline Utterance sample_utterance(const SynthSpec &spec, const SynthModel &m,
                                  const std::string &id, Rng &rng) {
  const auto &lm = m.graph.lm;
  for (;;) {
    const std::size_t target = rng.between(spec.min_frames, spec.max_frames);
    Utterance u;
    u.id = id;
    std::vector<std::size_t> phones;
    while (u.labels.size() < target) {
      const std::size_t p = phones.empty()
                              ? detail::sample_log_categorical(lm.initial.values(), rng)
                              : detail::sample_log_categorical(lm.transition.row(phones.back()), rng);
      phones.push_back(p);
      for (const auto &st : m.graph.hmms[p].states) {
        u.labels.push_back(st.class_index);
        while (rng.bernoulli(spec.self_loop))
          u.labels.push_back(st.class_index);
      }
    }
    if (u.labels.size() > spec.max_frames)
      continue;
    u.features = Matrix(u.labels.size(), spec.feature_dim);
    for (std::size_t t = 0; t < u.labels.size(); ++t)
      for (std::size_t d = 0; d < spec.feature_dim; ++d)
        u.features(t, d) = m.means(u.labels[t], d) + spec.noise * rng.normal();
    u.transcript = phone_symbols(phones, m.graph.phones);
    return u;
  }
}

/**
 * Random bigram over P phones, S-state left-to-right HMMs with class
 * p*S + s, Gaussian state means N(0, I) and features mean + noise * N(0, I).
 * Consumes rng in a fixed order: model, then train, dev and test.
 */
inline std::pair<Corpus, SynthModel> synthesize(const SynthSpec &spec, Rng &rng) {
  std::pair<Corpus, SynthModel> out{Corpus{}, make_synth_model(spec, rng)};
  const SynthModel &m = out.second;
  Corpus &c = out.first;
  c.num_classes = spec.phones * spec.states;
  c.feature_dim = spec.feature_dim;
  c.graph = m.graph;
  auto fill = [&](std::vector<Utterance> &split, std::size_t n, const char *prefix) {
    for (std::size_t k = 0; k < n; ++k) {
      std::string num = std::to_string(k);
      num.insert(0, num.size() < 4 ? 4 - num.size() : 0, '0');
      split.push_back(sample_utterance(spec, m, std::string(prefix) + num, rng));
    }
  };
  fill(c.train, spec.train, "train");
  fill(c.dev, spec.dev, "dev");
  fill(c.test, spec.test, "test");
  return out;
}

inline Corpus generate_synthetic(const SynthSpec &spec, Rng &rng) {
  return synthesize(spec, rng).first;
}

/// Generator means and noise level, the ground-truth acoustic model.
struct SynthTruth {
  Matrix means;
  double noise = 0.0;
};

/// `nnam-truth v1 C D noise` followed by C rows of D means.
inline std::string write_truth(const SynthTruth &t) {
  std::ostringstream os;
  os << "nnam-truth v1 " << t.means.rows() << ' ' << t.means.cols() << ' '
     << format_double(t.noise) << '\n';
  for (std::size_t c = 0; c < t.means.rows(); ++c) {
    for (std::size_t d = 0; d < t.means.cols(); ++d)
      os << (d ? " " : "") << format_double(t.means(c, d));
    os << '\n';
  }
  return os.str();
}

inline SynthTruth parse_truth(const std::string &text, const std::string &source) {
  const auto lines = split_lines(text);
  auto fail = [&](std::size_t line, const std::string &msg) {
    return ParseError(source + ":" + std::to_string(line) + ": " + msg);
  };
  if (lines.empty())
    throw fail(1, "empty truth file");
  const auto head = split_ws(lines[0]);
  std::size_t rows = 0, cols = 0;
  SynthTruth t;
  if (head.size() != 5 || head[0] != "nnam-truth" || head[1] != "v1" ||
      !parse_int(head[2], rows) || !parse_int(head[3], cols) || !parse_double(head[4], t.noise))
    throw fail(1, "expected 'nnam-truth v1 C D noise'");
  if (lines.size() < rows + 1)
    throw fail(lines.size(), "expected " + std::to_string(rows) + " mean rows");
  t.means = Matrix(rows, cols);
  for (std::size_t c = 0; c < rows; ++c) {
    const auto f = split_ws(lines[c + 1]);
    if (f.size() != cols)
      throw fail(c + 2, "expected " + std::to_string(cols) + " values");
    for (std::size_t d = 0; d < cols; ++d)
      if (!parse_double(f[d], t.means(c, d)))
        throw fail(c + 2, "bad number '" + std::string(f[d]) + "'");
  }
  return t;
}

/**
 * Moves round(fraction * n) randomly chosen training utterances to a dev
 * list, preserving the original order within both parts.
 */
inline std::pair<std::vector<Utterance>, std::vector<Utterance>>
split_dev(const std::vector<Utterance> &train, double fraction, Rng &rng) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split_dev: fraction must be in (0,1)");
  const std::size_t n_dev =
    static_cast<std::size_t>(std::llround(fraction * static_cast<double>(train.size())));
  if (n_dev == 0 || n_dev >= train.size())
    throw ConfigError("split_dev: fraction " + std::to_string(fraction) + " of " +
                      std::to_string(train.size()) + " utterances leaves a split empty");
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  std::vector<bool> to_dev(train.size(), false);
  for (std::size_t k = 0; k < n_dev; ++k)
    to_dev[order[k]] = true;
  std::pair<std::vector<Utterance>, std::vector<Utterance>> out;
  for (std::size_t k = 0; k < train.size(); ++k)
    (to_dev[k] ? out.second : out.first).push_back(train[k]);
  return out;
}

} // namespace nnam

#endif // NNAM_CORPUS_HPP
