// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "nnam/decoder.hpp"

using namespace nnam;

namespace {

PhoneSet letters(std::size_t n) {
  std::vector<std::string> p;
  for (std::size_t i = 0; i < n; ++i)
    p.push_back(std::string(1, static_cast<char>('a' + i)));
  return PhoneSet::with_identity_map(p);
}

BigramLm uniform_lm(std::size_t P) {
  const double lp = -std::log(static_cast<double>(P));
  return {Vector(P, lp), Matrix(P, P, lp)};
}

Vector random_log_distribution(std::size_t n, Rng &rng) {
  Vector v(n);
  for (auto &x : v)
    x = rng.uniform(-3.0, 0.0);
  return log_softmax(v);
}

/// Random graph with up to 4 phones of up to 2 states and arbitrary transitions.
DecodeGraph random_graph(Rng &rng, std::size_t &classes) {
  const std::size_t P = rng.between(1, 4);
  DecodeGraph g;
  g.phones = letters(P);
  classes = 0;
  g.hmms.resize(P);
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t S = rng.between(1, 2);
    for (std::size_t s = 0; s < S; ++s) {
      const double stay = rng.uniform(0.05, 0.95);
      g.hmms[p].states.push_back({classes++, std::log(stay), std::log1p(-stay)});
    }
  }
  g.lm.initial = random_log_distribution(P, rng);
  g.lm.transition = Matrix(P, P);
  for (std::size_t i = 0; i < P; ++i) {
    const Vector row = random_log_distribution(P, rng);
    std::copy(row.begin(), row.end(), g.lm.transition.row(i).begin());
  }
  return g;
}

Matrix random_scores(std::size_t T, std::size_t C, Rng &rng) {
  Matrix m(T, C);
  for (auto &v : m.values())
    v = rng.uniform(-5.0, 0.0);
  return m;
}

/// Independent audit of a returned path: recompute its log-score from the graph tables.
double audit(const Matrix &scores, const DecodeGraph &g, double lm_w, const DecodeResult &r) {
  double total = 0.0;
  for (std::size_t t = 0; t < r.path.size(); ++t) {
    const auto [p, s] = r.path[t];
    total += scores(t, g.hmms[p].states[s].class_index);
    if (t == 0) {
      total += lm_w * g.lm.initial[p];
      continue;
    }
    const auto prev = r.path[t - 1];
    if (r.entered[t])
      total += g.hmms[prev.phone].states[prev.state].forward +
               lm_w * g.lm.transition(prev.phone, p);
    else if (prev.state == s)
      total += g.hmms[p].states[s].self_loop;
    else
      total += g.hmms[p].states[prev.state].forward;
  }
  return total;
}

/// Plain edit distance, no backtrace.
std::size_t edit_distance(const PhoneSequence &a, const PhoneSequence &b) {
  std::vector<std::size_t> row(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j)
    row[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    std::size_t diag = row[0];
    row[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] != b[j - 1])});
      diag = up;
    }
  }
  return row[b.size()];
}

PhoneSequence random_sequence(Rng &rng, std::size_t alphabet, std::size_t max_len,
                              std::size_t min_len = 0) {
  PhoneSequence s(rng.between(min_len, max_len));
  for (auto &x : s)
    x = std::string(1, static_cast<char>('a' + rng.below(alphabet)));
  return s;
}

} // namespace

TEST(Scores, SpotValueAndUniformPriors) {
  const Matrix lp{{-1.0, -0.5}};
  const auto s = posteriors_to_scores(lp, ClassPrior{Vector{-2.0, -1.0}}, 0.8);
  EXPECT_NEAR(s(0, 0), 0.8, 1e-15);
  const auto u = posteriors_to_scores(lp, uniform_priors(2), 1.0);
  EXPECT_NEAR(u(0, 0) - u(0, 1), -0.5, 1e-15);
  EXPECT_THROW(posteriors_to_scores(lp, uniform_priors(2), 0.0), ConfigError);
  EXPECT_THROW(posteriors_to_scores(lp, uniform_priors(3), 1.0), ShapeError);
}

TEST(Viterbi, SinglePhoneSingleState) {
  DecodeGraph g{letters(1), uniform_hmms(1, 1, 0.6), uniform_lm(1)};
  const Matrix scores{{-1.0}, {-2.0}, {-0.5}, {-0.25}};
  const auto r = viterbi_decode(scores, g, 1.0);
  // With one phone, re-entry (0.4 * 1) and the self-loop (0.6) compete;
  // the self-loop wins at every step.
  EXPECT_EQ(r.phones, std::vector<std::size_t>{0});
  EXPECT_NEAR(r.score, -3.75 + 3 * std::log(0.6) + 0.0, 1e-12);
}

TEST(Viterbi, LanguageModelBreaksAcousticTie) {
  DecodeGraph g{letters(2), uniform_hmms(2, 1), uniform_lm(2)};
  g.lm.initial = Vector{std::log(0.9), std::log(0.1)};
  const Matrix scores(3, 2, -1.0);
  const auto r = viterbi_decode(scores, g, 1.0);
  ASSERT_FALSE(r.phones.empty());
  EXPECT_EQ(r.phones[0], 0u);
}

TEST(Viterbi, TooFewFramesIsDecodeError) {
  DecodeGraph g{letters(2), uniform_hmms(2, 3), uniform_lm(2)};
  EXPECT_THROW(viterbi_decode(Matrix(2, 6), g, 1.0), DecodeError);
  EXPECT_THROW(brute_force_decode(Matrix(2, 6), g, 1.0), DecodeError);
  EXPECT_NO_THROW(viterbi_decode(Matrix(3, 6), g, 1.0));
}

TEST(Viterbi, ClassIndexOutOfRange) {
  DecodeGraph g{letters(2), uniform_hmms(2, 2), uniform_lm(2)};
  EXPECT_THROW(viterbi_decode(Matrix(4, 3), g, 1.0), DecodeError);
}

TEST(Viterbi, EmptyPhoneSet) {
  DecodeGraph g;
  EXPECT_THROW(viterbi_decode(Matrix(3, 1), g, 1.0), DecodeError);
  EXPECT_THROW(brute_force_decode(Matrix(3, 1), g, 1.0), DecodeError);
}

TEST(Viterbi, MatchesBruteForceOnRandomInstances) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    Rng rng(seed);
    std::size_t C = 0;
    const auto g = random_graph(rng, C);
    const Matrix scores = random_scores(rng.between(1, 8), C, rng);
    const double lm_w = rng.uniform(0.5, 2.0);
    try {
      const auto v = viterbi_decode(scores, g, lm_w);
      const auto b = brute_force_decode(scores, g, lm_w);
      EXPECT_EQ(v.phones, b.phones) << "seed " << seed;
      EXPECT_NEAR(v.score, b.score, 1e-9) << "seed " << seed;
      EXPECT_NEAR(audit(scores, g, lm_w, v), v.score, 1e-9) << "seed " << seed;
      EXPECT_NEAR(path_score(scores, g, lm_w, v.path, v.entered), v.score, 1e-9);
    } catch (const DecodeError &) {
      EXPECT_THROW(brute_force_decode(scores, g, lm_w), DecodeError) << "seed " << seed;
    }
  }
}

TEST(Viterbi, ArgmaxInvariantToPerFrameShift) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    Rng rng(seed + 1000);
    std::size_t C = 0;
    const auto g = random_graph(rng, C);
    const std::size_t T = rng.between(4, 12);
    Matrix scores = random_scores(T, C, rng);
    const auto base = viterbi_decode(scores, g, 1.0);
    for (std::size_t t = 0; t < T; ++t) {
      const double k = rng.uniform(-10.0, 10.0);
      for (auto &v : scores.row(t))
        v += k;
    }
    EXPECT_EQ(viterbi_decode(scores, g, 1.0).phones, base.phones) << "seed " << seed;
  }
}

TEST(BruteForce, GuardRejectsHugeSearch) {
  DecodeGraph g{letters(4), uniform_hmms(4, 1), uniform_lm(4)};
  EXPECT_THROW(brute_force_decode(Matrix(20, 4), g, 1.0), OracleError);
}

TEST(BruteForce, SingleLegalPath) {
  DecodeGraph g{letters(1), uniform_hmms(1, 3), uniform_lm(1)};
  const auto r = brute_force_decode(Matrix{{-1, -2, -3}, {-1, -2, -3}, {-1, -2, -3}}, g, 1.0);
  EXPECT_EQ(r.phones, std::vector<std::size_t>{0});
  EXPECT_NEAR(r.score, -1 - 2 - 3 + 2 * std::log(0.5), 1e-12);
}

TEST(MapPhones, Examples) {
  const auto id = letters(3);
  EXPECT_EQ(map_phones({"a", "b", "c"}, id), (PhoneSequence{"a", "b", "c"}));
  EXPECT_EQ(map_phones({}, id), PhoneSequence{});
  PhoneSet merge = id;
  merge.mapping["b"] = "a";
  EXPECT_EQ(map_phones({"a", "b", "c"}, merge), (PhoneSequence{"a", "c"}));
  // A genuine repetition in the source is not a mapping artifact.
  EXPECT_EQ(map_phones({"c", "c"}, merge), (PhoneSequence{"c", "c"}));
}

TEST(MapPhones, UnknownSymbolNamed) {
  try {
    map_phones({"a", "zz"}, letters(2));
    FAIL() << "expected MappingError";
  } catch (const MappingError &e) {
    EXPECT_NE(std::string(e.what()).find("zz"), std::string::npos);
  }
}

TEST(MapPhones, IdempotentOnTargetAlphabet) {
  PhoneSet ps = letters(6);
  ps.mapping["b"] = "a";
  ps.mapping["d"] = "c";
  ps.mapping["f"] = "e";
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    const auto once = map_phones(random_sequence(rng, 6, 15), ps);
    EXPECT_EQ(map_phones(once, ps), once);
  }
}

TEST(Per, HandCases) {
  auto r = per({"a", "b", "c"}, {"a", "b", "c"});
  EXPECT_EQ(r.per, 0.0);
  EXPECT_EQ(r.errors(), 0u);
  r = per({"a", "b", "c"}, {"a", "c"});
  EXPECT_NEAR(r.per, 100.0 / 3.0, 1e-12);
  EXPECT_EQ(r.substitutions, 0u);
  EXPECT_EQ(r.deletions, 1u);
  EXPECT_EQ(r.insertions, 0u);
  r = per({"a"}, {"b", "b"});
  EXPECT_EQ(r.per, 200.0);
  EXPECT_EQ(r.substitutions, 1u);
  EXPECT_EQ(r.deletions, 0u);
  EXPECT_EQ(r.insertions, 1u);
  EXPECT_THROW(per({}, {"a"}), ScoringError);
}

TEST(Per, MatchesEditDistanceOracle) {
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed);
    const std::size_t alphabet = rng.between(1, 10);
    const auto ref = random_sequence(rng, alphabet, 20, 1);
    const auto hyp = random_sequence(rng, alphabet, 20);
    const auto r = per(ref, hyp);
    EXPECT_EQ(r.errors(), edit_distance(ref, hyp)) << "seed " << seed;
    EXPECT_EQ(ref.size() - r.deletions + r.insertions, hyp.size());
    EXPECT_DOUBLE_EQ(r.per, 100.0 * static_cast<double>(r.errors()) / ref.size());
    if (!hyp.empty()) {
      EXPECT_EQ(per(hyp, ref).errors(), r.errors());
    }
  }
}

TEST(Estimate, BigramHandCorpus) {
  const auto ps = letters(3);
  const auto lm = estimate_bigram({{"a", "b"}, {"a", "b", "c"}, {"b"}}, ps);
  // Initial counts a:2 b:1 c:0, pairs a->b:2, b->c:1, all plus one.
  EXPECT_NEAR(lm.initial[0], std::log(3.0 / 6.0), 1e-15);
  EXPECT_NEAR(lm.initial[2], std::log(1.0 / 6.0), 1e-15);
  EXPECT_NEAR(lm.transition(0, 1), std::log(3.0 / 5.0), 1e-15);
  EXPECT_NEAR(lm.transition(1, 2), std::log(2.0 / 4.0), 1e-15);
  EXPECT_NEAR(lm.transition(2, 0), std::log(1.0 / 3.0), 1e-15);
  for (std::size_t i = 0; i < 3; ++i)
    EXPECT_NEAR(log_sum_exp(lm.transition.row(i)), 0.0, 1e-10);
  EXPECT_NEAR(log_sum_exp(lm.initial.values()), 0.0, 1e-10);
}

TEST(Estimate, ObservedPairDominates) {
  const auto lm = estimate_bigram({{"a", "b"}}, letters(2));
  EXPECT_GT(lm.transition(0, 1), lm.transition(0, 0));
}

TEST(Estimate, EmptyCorpusRejected) {
  EXPECT_THROW(estimate_bigram({}, letters(2)), DataError);
  EXPECT_THROW(estimate_priors({}, 3), DataError);
  EXPECT_THROW(estimate_priors({{0, 5}}, 3), IndexError);
}

TEST(Estimate, Priors) {
  const auto p = estimate_priors({{0, 0, 1}, {0}}, 3);
  EXPECT_NEAR(p.log_prior[0], std::log(4.0 / 7.0), 1e-15);
  EXPECT_NEAR(p.log_prior[2], std::log(1.0 / 7.0), 1e-15);
  EXPECT_NEAR(log_sum_exp(p.log_prior.values()), 0.0, 1e-10);
}

TEST(Sidecars, RoundTrip) {
  Rng rng(5);
  std::size_t C = 0;
  auto g = random_graph(rng, C);
  g.phones.mapping["a"] = "a";
  const auto dir = std::filesystem::temp_directory_path() / "nnam_test_sidecars";
  std::filesystem::remove_all(dir);
  save_decode_graph(dir, g);
  EXPECT_EQ(load_decode_graph(dir), g);
  std::filesystem::remove_all(dir);
}

TEST(Sidecars, ParseErrorsNameLine) {
  const auto ps = letters(2);
  try {
    parse_hmms("# header\na 0 0 -0.69 -0.69\nb 0 x -0.69 -0.69\n", ps, "hmm.txt");
    FAIL() << "expected ParseError";
  } catch (const ParseError &e) {
    EXPECT_NE(std::string(e.what()).find("hmm.txt:3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_bigram("a q -1\n", ps), ParseError);
  EXPECT_THROW(parse_phone_list("a\na\n"), ParseError);
}

TEST(Sidecars, ValidationCatchesUnnormalizedTables) {
  DecodeGraph g{letters(2), uniform_hmms(2, 2), uniform_lm(2)};
  EXPECT_NO_THROW(validate_graph(g));
  g.hmms[1].states[0].self_loop = std::log(0.7);
  EXPECT_THROW(validate_graph(g), DataError);
}
