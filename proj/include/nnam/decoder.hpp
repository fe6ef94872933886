// SPDX-License-Identifier: Apache-2.0
/**
 * @file   decoder.hpp
 * @brief  Hybrid HMM/network phone decoding: left-to-right phone HMMs with
 *         a bigram phone model, exact Viterbi search, an exhaustive oracle,
 *         phone-set mapping and phone error rate scoring.
 */
#ifndef NNAM_DECODER_HPP
#define NNAM_DECODER_HPP

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "nnam/io.hpp"
#include "nnam/numeric.hpp"

namespace nnam {

using PhoneSequence = std::vector<std::string>;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// Ordered phone inventory plus the scoring map source -> target.
struct PhoneSet {
  std::vector<std::string> phones;
  std::map<std::string, std::string> mapping;

  std::size_t size() const noexcept { return phones.size(); }

  std::size_t index_of(const std::string &symbol) const {
    auto it = std::find(phones.begin(), phones.end(), symbol);
    if (it == phones.end())
      throw MappingError("unknown phone symbol '" + symbol + "'");
    return static_cast<std::size_t>(it - phones.begin());
  }

  static PhoneSet with_identity_map(std::vector<std::string> phones) {
    PhoneSet ps{std::move(phones), {}};
    for (const auto &p : ps.phones)
      ps.mapping[p] = p;
    return ps;
  }

  friend bool operator==(const PhoneSet &, const PhoneSet &) = default;
};

struct HmmState {
  std::size_t class_index = 0;
  double self_loop = std::log(0.5); ///< log P(stay)
  double forward = std::log(0.5);   ///< log P(advance or exit)

  friend bool operator==(const HmmState &, const HmmState &) = default;
};

/// Left-to-right HMM of one phone.
struct PhoneHmm {
  std::vector<HmmState> states;

  friend bool operator==(const PhoneHmm &, const PhoneHmm &) = default;
};

/// Bigram phone model; initial[j] = log P(j | <s>), transition(i, j) = log P(j | i).
struct BigramLm {
  Vector initial;
  Matrix transition;

  std::size_t size() const noexcept { return initial.dim(); }

  friend bool operator==(const BigramLm &, const BigramLm &) = default;
};

struct ClassPrior {
  Vector log_prior;
};

/// Everything the decoder needs besides the acoustic scores.
struct DecodeGraph {
  PhoneSet phones;
  std::vector<PhoneHmm> hmms; ///< aligned with phones.phones
  BigramLm lm;

  friend bool operator==(const DecodeGraph &, const DecodeGraph &) = default;
};

/// `states` phones x states, uniform class mapping p*S + s, self-loop probability `self_loop`.
inline std::vector<PhoneHmm> uniform_hmms(std::size_t phones, std::size_t states,
                                          double self_loop = 0.5) {
  std::vector<PhoneHmm> hmms(phones);
  for (std::size_t p = 0; p < phones; ++p)
    for (std::size_t s = 0; s < states; ++s)
      hmms[p].states.push_back({p * states + s, std::log(self_loop), std::log1p(-self_loop)});
  return hmms;
}

inline void validate_graph(const DecodeGraph &g, double tol = 1e-10) {
  const std::size_t P = g.phones.size();
  if (P == 0)
    throw DecodeError("decode graph has no phones");
  if (g.hmms.size() != P)
    throw DataError("decode graph: " + std::to_string(g.hmms.size()) + " HMMs for " +
                    std::to_string(P) + " phones");
  if (g.lm.initial.dim() != P || g.lm.transition.rows() != P || g.lm.transition.cols() != P)
    throw DataError("decode graph: bigram size does not match phone count");
  for (std::size_t p = 0; p < P; ++p) {
    if (g.hmms[p].states.empty())
      throw DataError("phone '" + g.phones.phones[p] + "' has no HMM states");
    for (const auto &st : g.hmms[p].states) {
      const double lse = log_sum_exp(std::vector<double>{st.self_loop, st.forward});
      if (std::abs(lse) > tol)
        throw DataError("phone '" + g.phones.phones[p] +
                        "': state transition probabilities do not sum to 1");
    }
    if (std::abs(log_sum_exp(g.lm.transition.row(p))) > tol)
      throw DataError("bigram row '" + g.phones.phones[p] + "' does not sum to 1");
  }
  if (std::abs(log_sum_exp(g.lm.initial.values())) > tol)
    throw DataError("bigram initial distribution does not sum to 1");
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

/// score[t][c] = scale * (log_posterior[t][c] - log_prior[c])
inline Matrix posteriors_to_scores(const Matrix &log_posteriors, const ClassPrior &priors,
                                   double scale) {
  if (!(scale > 0.0))
    throw ConfigError("acoustic scale must be positive");
  if (priors.log_prior.dim() != log_posteriors.cols())
    throw ShapeError("posteriors_to_scores: " + std::to_string(log_posteriors.cols()) +
                     " classes vs " + std::to_string(priors.log_prior.dim()) + " priors");
  Matrix out(log_posteriors.rows(), log_posteriors.cols());
  for (std::size_t t = 0; t < out.rows(); ++t)
    for (std::size_t c = 0; c < out.cols(); ++c)
      out(t, c) = scale * (log_posteriors(t, c) - priors.log_prior[c]);
  return out;
}

// ---------------------------------------------------------------------------
// Search
// ---------------------------------------------------------------------------

/// A position in the decode graph.
struct GraphState {
  std::size_t phone = 0;
  std::size_t state = 0;

  friend auto operator<=>(const GraphState &, const GraphState &) = default;
};

struct DecodeResult {
  std::vector<std::size_t> phones; ///< phone indices in order
  double score = kNegInf;
  std::vector<GraphState> path; ///< one entry per frame
  std::vector<bool> entered;    ///< true where a frame starts a new phone
};

namespace detail {

/// Transition weights shared by the Viterbi search, the oracle and the score audit.
struct GraphWeights {
  std::vector<double> start;              ///< lm_weight * initial
  std::vector<std::vector<double>> entry; ///< [q][p]: forward of q's last state + lm_weight * bigram
  double lm_weight = 1.0;

  GraphWeights(const DecodeGraph &g, double lm_w) : lm_weight(lm_w) {
    const std::size_t P = g.phones.size();
    start.resize(P);
    entry.assign(P, std::vector<double>(P));
    for (std::size_t p = 0; p < P; ++p)
      start[p] = lm_w * g.lm.initial[p];
    for (std::size_t q = 0; q < P; ++q)
      for (std::size_t p = 0; p < P; ++p)
        entry[q][p] = g.hmms[q].states.back().forward + lm_w * g.lm.transition(q, p);
  }
};

inline void check_decode_inputs(const Matrix &scores, const DecodeGraph &g) {
  if (g.phones.size() == 0 || g.hmms.empty())
    throw DecodeError("decode graph has no phones");
  if (scores.rows() == 0)
    throw DecodeError("no frames to decode");
  for (std::size_t p = 0; p < g.hmms.size(); ++p)
    for (const auto &st : g.hmms[p].states)
      if (st.class_index >= scores.cols())
        throw DecodeError("HMM state of phone " + std::to_string(p) + " maps to class " +
                          std::to_string(st.class_index) + " but scores have " +
                          std::to_string(scores.cols()) + " classes");
}

} // namespace detail

/**
 * Exact best path through the phone loop: within a phone, a state either
 * loops or advances; the last state of phone q may enter the first state of
 * any phone p with weight forward(q) + lm_weight * log P(p | q). The path
 * starts in a first state (weight lm_weight * log P(p | <s>)) and ends in a
 * last state. Ties prefer the self-loop, then the lowest predecessor.
 */
inline DecodeResult viterbi_decode(const Matrix &scores, const DecodeGraph &g,
                                   double lm_weight) {
  detail::check_decode_inputs(scores, g);
  const detail::GraphWeights w(g, lm_weight);
  const std::size_t P = g.hmms.size(), T = scores.rows();
  std::vector<std::size_t> offset(P + 1, 0);
  for (std::size_t p = 0; p < P; ++p)
    offset[p + 1] = offset[p] + g.hmms[p].states.size();
  const std::size_t N = offset[P];

  std::vector<double> delta(N, kNegInf), next(N);
  std::vector<std::vector<std::size_t>> back(T, std::vector<std::size_t>(N, N));
  std::vector<std::vector<char>> entered(T, std::vector<char>(N, 0));

  for (std::size_t p = 0; p < P; ++p) {
    delta[offset[p]] = w.start[p] + scores(0, g.hmms[p].states[0].class_index);
    entered[0][offset[p]] = 1;
  }

  for (std::size_t t = 1; t < T; ++t) {
    for (std::size_t p = 0; p < P; ++p) {
      const auto &states = g.hmms[p].states;
      for (std::size_t s = 0; s < states.size(); ++s) {
        const std::size_t n = offset[p] + s;
        double best = delta[n] + states[s].self_loop;
        std::size_t arg = n;
        char enter = 0;
        if (s > 0) {
          const double c = delta[n - 1] + states[s - 1].forward;
          if (c > best) {
            best = c;
            arg = n - 1;
          }
        } else {
          for (std::size_t q = 0; q < P; ++q) {
            const std::size_t last = offset[q + 1] - 1;
            const double c = delta[last] + w.entry[q][p];
            if (c > best) {
              best = c;
              arg = last;
              enter = 1;
            }
          }
        }
        next[n] = best + scores(t, states[s].class_index);
        back[t][n] = arg;
        entered[t][n] = enter;
      }
    }
    std::swap(delta, next);
  }

  double best = kNegInf;
  std::size_t arg = N;
  for (std::size_t p = 0; p < P; ++p) {
    const std::size_t last = offset[p + 1] - 1;
    if (delta[last] > best) {
      best = delta[last];
      arg = last;
    }
  }
  if (arg == N || best == kNegInf)
    throw DecodeError("no valid path through " + std::to_string(T) + " frames");

  auto locate = [&](std::size_t n) {
    const auto it = std::upper_bound(offset.begin(), offset.end(), n);
    const std::size_t p = static_cast<std::size_t>(it - offset.begin()) - 1;
    return GraphState{p, n - offset[p]};
  };

  DecodeResult r;
  r.score = best;
  r.path.resize(T);
  r.entered.resize(T);
  std::size_t n = arg;
  for (std::size_t t = T; t-- > 0;) {
    r.path[t] = locate(n);
    r.entered[t] = entered[t][n] != 0;
    if (t > 0)
      n = back[t][n];
  }
  for (std::size_t t = 0; t < T; ++t)
    if (r.entered[t])
      r.phones.push_back(r.path[t].phone);
  return r;
}

/**
 * Score of an explicit path, summed in the same order as the search.
 * Throws DecodeError if the path is illegal.
 */
inline double path_score(const Matrix &scores, const DecodeGraph &g, double lm_weight,
                         const std::vector<GraphState> &path, const std::vector<bool> &entered) {
  detail::check_decode_inputs(scores, g);
  const detail::GraphWeights w(g, lm_weight);
  if (path.size() != scores.rows() || entered.size() != path.size())
    throw DecodeError("path length does not match frame count");
  auto cls = [&](const GraphState &s) { return g.hmms[s.phone].states[s.state].class_index; };
  if (path[0].state != 0 || !entered[0])
    throw DecodeError("path must start in a first state");
  double acc = w.start[path[0].phone] + scores(0, cls(path[0]));
  for (std::size_t t = 1; t < path.size(); ++t) {
    const GraphState a = path[t - 1], b = path[t];
    const auto &sa = g.hmms[a.phone].states;
    double trans;
    if (entered[t]) {
      if (a.state + 1 != sa.size() || b.state != 0)
        throw DecodeError("illegal phone entry at frame " + std::to_string(t));
      trans = w.entry[a.phone][b.phone];
    } else if (a == b) {
      trans = sa[a.state].self_loop;
    } else if (a.phone == b.phone && b.state == a.state + 1) {
      trans = sa[a.state].forward;
    } else {
      throw DecodeError("illegal transition at frame " + std::to_string(t));
    }
    acc = acc + trans + scores(t, cls(b));
  }
  if (path.back().state + 1 != g.hmms[path.back().phone].states.size())
    throw DecodeError("path must end in a last state");
  return acc;
}

/**
 * Exhaustive search over every legal path (guarded at 1e7 paths). Ties are
 * broken by the lexicographically smallest phone sequence, then the
 * smallest state path.
 */
inline DecodeResult brute_force_decode(const Matrix &scores, const DecodeGraph &g,
                                       double lm_weight, double max_paths = 1e7) {
  detail::check_decode_inputs(scores, g);
  const detail::GraphWeights w(g, lm_weight);
  const std::size_t P = g.hmms.size(), T = scores.rows();

  // Count paths first: counts[p][s] = number of partial paths ending there.
  std::vector<std::vector<double>> counts(P), next(P);
  for (std::size_t p = 0; p < P; ++p) {
    counts[p].assign(g.hmms[p].states.size(), 0.0);
    counts[p][0] = 1.0;
  }
  for (std::size_t t = 1; t < T; ++t) {
    double exits = 0.0;
    for (std::size_t q = 0; q < P; ++q)
      exits += counts[q].back();
    for (std::size_t p = 0; p < P; ++p) {
      next[p].assign(counts[p].size(), 0.0);
      for (std::size_t s = 0; s < counts[p].size(); ++s)
        next[p][s] = counts[p][s] + (s > 0 ? counts[p][s - 1] : exits);
    }
    std::swap(counts, next);
  }
  double total = 0.0;
  for (std::size_t p = 0; p < P; ++p)
    total += counts[p].back();
  if (total > max_paths)
    throw OracleError("brute_force_decode: " + std::to_string(total) + " paths exceed guard");

  auto cls = [&](const GraphState &s) { return g.hmms[s.phone].states[s.state].class_index; };
  DecodeResult best;
  bool found = false;
  std::vector<GraphState> path(T);
  std::vector<bool> entered(T);
  std::vector<std::size_t> phones;

  std::function<void(std::size_t, double)> walk = [&](std::size_t t, double acc) {
    const GraphState cur = path[t - 1];
    if (t == T) {
      if (cur.state + 1 != g.hmms[cur.phone].states.size())
        return;
      bool better = !found || acc > best.score;
      if (!better && acc == best.score) {
        if (phones != best.phones)
          better = phones < best.phones;
        else
          better = path < best.path;
      }
      if (better) {
        found = true;
        best.score = acc;
        best.phones = phones;
        best.path = path;
        best.entered = entered;
      }
      return;
    }
    const auto &sa = g.hmms[cur.phone].states;
    path[t] = cur;
    entered[t] = false;
    walk(t + 1, acc + sa[cur.state].self_loop + scores(t, cls(cur)));
    if (cur.state + 1 < sa.size()) {
      path[t] = {cur.phone, cur.state + 1};
      walk(t + 1, acc + sa[cur.state].forward + scores(t, cls(path[t])));
    } else {
      for (std::size_t p = 0; p < P; ++p) {
        path[t] = {p, 0};
        entered[t] = true;
        phones.push_back(p);
        walk(t + 1, acc + w.entry[cur.phone][p] + scores(t, cls(path[t])));
        phones.pop_back();
      }
    }
  };

  for (std::size_t p = 0; p < P; ++p) {
    path[0] = {p, 0};
    entered[0] = true;
    phones.assign(1, p);
    walk(1, w.start[p] + scores(0, cls(path[0])));
  }
  if (!found)
    throw DecodeError("no valid path through " + std::to_string(T) + " frames");
  return best;
}

inline PhoneSequence phone_symbols(const std::vector<std::size_t> &indices, const PhoneSet &ps) {
  PhoneSequence out;
  out.reserve(indices.size());
  for (auto i : indices)
    out.push_back(ps.phones.at(i));
  return out;
}

// ---------------------------------------------------------------------------
// Mapping and scoring
// ---------------------------------------------------------------------------

/**
 * Maps every symbol and merges adjacent outputs that became equal through
 * the mapping (distinct sources, same target).
 */
inline PhoneSequence map_phones(const PhoneSequence &seq, const PhoneSet &ps) {
  PhoneSequence out;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto it = ps.mapping.find(seq[i]);
    if (it == ps.mapping.end())
      throw MappingError("phone '" + seq[i] + "' has no mapping");
    if (i > 0 && !out.empty() && out.back() == it->second && seq[i - 1] != seq[i])
      continue;
    out.push_back(it->second);
  }
  return out;
}

struct PerResult {
  double per = 0.0; ///< percent
  std::size_t substitutions = 0;
  std::size_t deletions = 0;
  std::size_t insertions = 0;
  std::size_t reference_length = 0;

  std::size_t errors() const noexcept { return substitutions + deletions + insertions; }
};

/**
 * Unit-cost Levenshtein alignment. Counts come from the backtrace that
 * prefers a diagonal step (match or substitution), then deletion, then
 * insertion.
 */
inline PerResult per(const PhoneSequence &reference, const PhoneSequence &hypothesis) {
  if (reference.empty())
    throw ScoringError("empty reference");
  const std::size_t n = reference.size(), m = hypothesis.size();
  std::vector<std::vector<std::size_t>> d(n + 1, std::vector<std::size_t>(m + 1));
  for (std::size_t i = 0; i <= n; ++i)
    d[i][0] = i;
  for (std::size_t j = 0; j <= m; ++j)
    d[0][j] = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      d[i][j] = std::min({d[i - 1][j - 1] + (reference[i - 1] == hypothesis[j - 1] ? 0u : 1u),
                          d[i - 1][j] + 1, d[i][j - 1] + 1});
  PerResult r;
  r.reference_length = n;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0) {
      const std::size_t sub = reference[i - 1] == hypothesis[j - 1] ? 0 : 1;
      if (d[i][j] == d[i - 1][j - 1] + sub) {
        r.substitutions += sub;
        --i;
        --j;
        continue;
      }
    }
    if (i > 0 && d[i][j] == d[i - 1][j] + 1) {
      ++r.deletions;
      --i;
    } else {
      ++r.insertions;
      --j;
    }
  }
  r.per = 100.0 * static_cast<double>(r.errors()) / static_cast<double>(n);
  return r;
}

// ---------------------------------------------------------------------------
// Estimation
// ---------------------------------------------------------------------------

/// Add-one smoothed bigram and initial distributions.
inline BigramLm estimate_bigram(const std::vector<PhoneSequence> &transcripts,
                                const PhoneSet &ps) {
  std::size_t used = 0;
  for (const auto &t : transcripts)
    used += t.size();
  if (transcripts.empty() || used == 0)
    throw DataError("estimate_bigram: empty corpus");
  const std::size_t P = ps.size();
  std::vector<double> init(P, 1.0);
  Matrix pairs(P, P, 1.0);
  for (const auto &t : transcripts) {
    if (t.empty())
      continue;
    init[ps.index_of(t[0])] += 1.0;
    for (std::size_t k = 1; k < t.size(); ++k)
      pairs(ps.index_of(t[k - 1]), ps.index_of(t[k])) += 1.0;
  }
  BigramLm lm{Vector(P), Matrix(P, P)};
  const double init_total = std::accumulate(init.begin(), init.end(), 0.0);
  for (std::size_t j = 0; j < P; ++j)
    lm.initial[j] = std::log(init[j] / init_total);
  for (std::size_t i = 0; i < P; ++i) {
    const auto row = pairs.row(i);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t j = 0; j < P; ++j)
      lm.transition(i, j) = std::log(row[j] / total);
  }
  return lm;
}

/// Add-one smoothed class frequencies of frame labels.
inline ClassPrior estimate_priors(const std::vector<std::vector<std::size_t>> &labels,
                                  std::size_t num_classes) {
  std::vector<double> counts(num_classes, 1.0);
  std::size_t frames = 0;
  for (const auto &seq : labels)
    for (auto c : seq) {
      if (c >= num_classes)
        throw IndexError("estimate_priors: label " + std::to_string(c) + " out of range");
      counts[c] += 1.0;
      ++frames;
    }
  if (frames == 0)
    throw DataError("estimate_priors: empty corpus");
  const double total = std::accumulate(counts.begin(), counts.end(), 0.0);
  ClassPrior prior{Vector(num_classes)};
  for (std::size_t c = 0; c < num_classes; ++c)
    prior.log_prior[c] = std::log(counts[c] / total);
  return prior;
}

inline ClassPrior uniform_priors(std::size_t num_classes) {
  return {Vector(num_classes, -std::log(static_cast<double>(num_classes)))};
}

// ---------------------------------------------------------------------------
// Sidecar files
// ---------------------------------------------------------------------------

namespace detail {

template <typename F>
void for_each_record(const std::string &text, const std::string &source, F &&f) {
  const auto lines = split_lines(text);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    const auto toks = split_ws(strip_comment(lines[i]));
    if (toks.empty())
      continue;
    auto fail = [&](const std::string &msg) {
      return ParseError(source + ":" + std::to_string(i + 1) + ": " + msg);
    };
    f(toks, fail);
  }
}

} // namespace detail

inline std::string write_phone_list(const PhoneSet &ps) {
  std::string out;
  for (const auto &p : ps.phones)
    out += p + "\n";
  return out;
}

inline std::vector<std::string> parse_phone_list(const std::string &text,
                                                 const std::string &source = "phones.txt") {
  std::vector<std::string> phones;
  detail::for_each_record(text, source, [&](const auto &toks, auto fail) {
    if (toks.size() != 1)
      throw fail("expected one phone symbol per line");
    if (std::find(phones.begin(), phones.end(), toks[0]) != phones.end())
      throw fail("duplicate phone '" + std::string(toks[0]) + "'");
    phones.emplace_back(toks[0]);
  });
  return phones;
}

inline std::string write_phone_map(const PhoneSet &ps) {
  std::string out;
  for (const auto &p : ps.phones)
    out += p + " " + ps.mapping.at(p) + "\n";
  return out;
}

inline std::map<std::string, std::string> parse_phone_map(const std::string &text,
                                                          const std::string &source = "phonemap.txt") {
  std::map<std::string, std::string> m;
  detail::for_each_record(text, source, [&](const auto &toks, auto fail) {
    if (toks.size() != 2)
      throw fail("expected '<source> <target>'");
    m[std::string(toks[0])] = std::string(toks[1]);
  });
  return m;
}

inline std::string write_bigram(const BigramLm &lm, const PhoneSet &ps) {
  std::ostringstream os;
  for (std::size_t j = 0; j < ps.size(); ++j)
    os << "<s> " << ps.phones[j] << ' ' << format_double(lm.initial[j]) << '\n';
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < ps.size(); ++j)
      os << ps.phones[i] << ' ' << ps.phones[j] << ' ' << format_double(lm.transition(i, j))
         << '\n';
  return os.str();
}

/// Missing pairs get log-probability -inf.
inline BigramLm parse_bigram(const std::string &text, const PhoneSet &ps,
                             const std::string &source = "bigram.txt") {
  const std::size_t P = ps.size();
  BigramLm lm{Vector(P, kNegInf), Matrix(P, P, kNegInf)};
  detail::for_each_record(text, source, [&](const auto &toks, auto fail) {
    double lp = 0.0;
    if (toks.size() != 3 || !parse_double(toks[2], lp))
      throw fail("expected '<prev> <next> <logprob>'");
    try {
      const std::size_t j = ps.index_of(std::string(toks[1]));
      if (toks[0] == "<s>")
        lm.initial[j] = lp;
      else
        lm.transition(ps.index_of(std::string(toks[0])), j) = lp;
    } catch (const MappingError &e) {
      throw fail(e.what());
    }
  });
  return lm;
}

inline std::string write_hmms(const std::vector<PhoneHmm> &hmms, const PhoneSet &ps) {
  std::ostringstream os;
  for (std::size_t p = 0; p < hmms.size(); ++p)
    for (std::size_t s = 0; s < hmms[p].states.size(); ++s) {
      const auto &st = hmms[p].states[s];
      os << ps.phones[p] << ' ' << s << ' ' << st.class_index << ' '
         << format_double(st.self_loop) << ' ' << format_double(st.forward) << '\n';
    }
  return os.str();
}

inline std::vector<PhoneHmm> parse_hmms(const std::string &text, const PhoneSet &ps,
                                        const std::string &source = "hmm.txt") {
  std::vector<PhoneHmm> hmms(ps.size());
  detail::for_each_record(text, source, [&](const auto &toks, auto fail) {
    std::size_t state = 0;
    HmmState st;
    if (toks.size() != 5 || !parse_int(toks[1], state) || !parse_int(toks[2], st.class_index) ||
        !parse_double(toks[3], st.self_loop) || !parse_double(toks[4], st.forward))
      throw fail("expected '<phone> <state> <class> <selfloop-logprob> <forward-logprob>'");
    std::size_t p = 0;
    try {
      p = ps.index_of(std::string(toks[0]));
    } catch (const MappingError &e) {
      throw fail(e.what());
    }
    if (state != hmms[p].states.size())
      throw fail("states of a phone must be listed in order");
    hmms[p].states.push_back(st);
  });
  return hmms;
}

inline void save_decode_graph(const std::filesystem::path &dir, const DecodeGraph &g) {
  write_file_atomic(dir / "phones.txt", write_phone_list(g.phones));
  write_file_atomic(dir / "phonemap.txt", write_phone_map(g.phones));
  write_file_atomic(dir / "bigram.txt", write_bigram(g.lm, g.phones));
  write_file_atomic(dir / "hmm.txt", write_hmms(g.hmms, g.phones));
}

inline DecodeGraph load_decode_graph(const std::filesystem::path &dir) {
  DecodeGraph g;
  g.phones.phones = parse_phone_list(read_file(dir / "phones.txt"), (dir / "phones.txt").string());
  const auto map_path = dir / "phonemap.txt";
  if (std::filesystem::exists(map_path))
    g.phones.mapping = parse_phone_map(read_file(map_path), map_path.string());
  else
    g.phones = PhoneSet::with_identity_map(g.phones.phones);
  for (const auto &p : g.phones.phones)
    if (!g.phones.mapping.count(p))
      throw DataError("phone '" + p + "' missing from phone map");
  g.lm = parse_bigram(read_file(dir / "bigram.txt"), g.phones, (dir / "bigram.txt").string());
  g.hmms = parse_hmms(read_file(dir / "hmm.txt"), g.phones, (dir / "hmm.txt").string());
  validate_graph(g);
  return g;
}

} // namespace nnam

#endif // NNAM_DECODER_HPP
