// SPDX-License-Identifier: Apache-2.0
// Acceptance run: one PASS/FAIL line per criterion. Criterion 9 is
// informative and reports WARN instead of failing the run.

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "nnam/cells.hpp"
#include "nnam/experiment.hpp"
#include "nnam/gradcheck.hpp"

#ifndef NNAM_CLI_PATH
#error "NNAM_CLI_PATH must name the nnam executable"
#endif

using namespace nnam;
namespace fs = std::filesystem;

namespace {

enum class Verdict { pass, fail, warn };

struct Line {
  int id;
  std::string title;
  Verdict verdict;
  std::string detail;
};

std::vector<Line> g_lines;

void record(int id, const std::string &title, Verdict v, const std::string &detail) {
  g_lines.push_back({id, title, v, detail});
  std::cerr << "[criterion " << id << " done] " << detail << '\n';
}

Verdict gate(bool ok) { return ok ? Verdict::pass : Verdict::fail; }

class Timer {
public:
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

std::string fmt(const char *f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------
// 1. Gradients

void gradients() {
  Timer timer;
  double worst = 0.0;
  std::string where;
  for (CellKind kind : {CellKind::lstm, CellKind::gru, CellKind::zoneout_lstm,
                        CellKind::feedforward})
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto c = make_gradcheck_case(kind, seed);
      const auto r = gradient_check(c.net, c.frames, c.targets, c.masks);
      if (r.max_rel_error >= worst) {
        worst = r.max_rel_error;
        where = std::string(to_string(kind)) + " " + r.worst_parameter;
      }
    }
  const double t = timer.seconds();
  record(1, "gradient correctness (4 kinds x 20 seeds)", gate(worst < 1e-4 && t < 60.0),
         "max rel err " + fmt("%.2e", worst) + " (" + where + ") < 1e-4, " + fmt("%.1f", t) +
           " s < 60 s");
}

// ---------------------------------------------------------------------------
// 2. Cell equations against straight-line transcriptions

double sig(double v) { return 1.0 / (1.0 + std::exp(-v)); }

double dot_row(const Matrix &W, std::size_t r, const Vector &x) {
  double s = 0.0;
  for (std::size_t c = 0; c < W.cols(); ++c)
    s += W(r, c) * x[c];
  return s;
}

template <typename P> void randomize_biases(P &p, Rng &rng) {
  P::visit(p, [&](std::string_view, auto &t) {
    if constexpr (std::is_same_v<std::remove_cvref_t<decltype(t)>, Vector>)
      for (auto &v : t)
        v = rng.uniform(-1, 1);
  });
}

Vector random_vector(std::size_t n, Rng &rng, double scale) {
  Vector v(n);
  for (auto &x : v)
    x = rng.uniform(-scale, scale);
  return v;
}

void equations() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);
    const std::size_t D = rng.between(1, 5), H = rng.between(1, 5);
    auto lp = LstmParams::random(D, H, rng);
    randomize_biases(lp, rng);
    auto gp = GruParams::random(D, H, rng);
    randomize_biases(gp, rng);
    const Vector x = random_vector(D, rng, 1.5), h = random_vector(H, rng, 1.0),
                 c = random_vector(H, rng, 2.0);

    const LayerState ls = lstm_step(lp, x, {h, c});
    for (std::size_t k = 0; k < H; ++k) {
      const double i = sig(dot_row(lp.W_xi, k, x) + dot_row(lp.W_hi, k, h) + lp.b_i[k]);
      const double f = sig(dot_row(lp.W_xf, k, x) + dot_row(lp.W_hf, k, h) + lp.b_f[k]);
      const double o = sig(dot_row(lp.W_xo, k, x) + dot_row(lp.W_ho, k, h) + lp.b_o[k]);
      const double g = std::tanh(dot_row(lp.W_xc, k, x) + dot_row(lp.W_hc, k, h) + lp.b_c[k]);
      const double cn = f * c[k] + i * g;
      worst = std::max({worst, std::abs(ls.c[k] - cn), std::abs(ls.h[k] - o * std::tanh(cn))});
    }

    const Vector gh = gru_step(gp, x, h);
    Vector rh(H);
    std::vector<double> z(H);
    for (std::size_t k = 0; k < H; ++k) {
      const double r = sig(dot_row(gp.W_r, k, x) + dot_row(gp.U_r, k, h) + gp.b_r[k]);
      z[k] = sig(dot_row(gp.W_z, k, x) + dot_row(gp.U_z, k, h) + gp.b_z[k]);
      rh[k] = r * h[k];
    }
    for (std::size_t k = 0; k < H; ++k) {
      const double n = std::tanh(dot_row(gp.W, k, x) + dot_row(gp.U, k, rh) + gp.b_h[k]);
      worst = std::max(worst, std::abs(gh[k] - ((1.0 - z[k]) * h[k] + z[k] * n)));
    }
  }
  record(2, "cell equation fidelity (100 seeds)", gate(worst <= 1e-12),
         "max abs diff " + fmt("%.2e", worst) + " <= 1e-12");
}

// ---------------------------------------------------------------------------
// 3. Zoneout limits

void zoneout_limits() {
  bool d0_equal = true, d1_frozen = true;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    NetworkSpec spec;
    spec.kind = CellKind::lstm;
    spec.feature_dim = 3;
    spec.hidden = {5, 4};
    spec.num_classes = 6;
    Rng r1(seed), r2(seed);
    const RecurrentNetwork plain = make_network(spec, r1);
    spec.kind = CellKind::zoneout_lstm;
    spec.zoneout = {0.0, 0.0};
    RecurrentNetwork zoned = make_network(spec, r2);
    Rng xr(seed + 99);
    Matrix frames(9, 3);
    for (auto &v : frames.values())
      v = xr.normal();
    const Matrix yp = forward_eval(plain, frames), yz = forward_eval(zoned, frames);
    if (!std::ranges::equal(yp.values(), yz.values()))
      d0_equal = false;

    auto p = LstmParams::random(3, 4, xr);
    const LayerState st{random_vector(4, xr, 1.0), random_vector(4, xr, 2.0)};
    for (Mode mode : {Mode::train, Mode::eval}) {
      const LayerState out = zoneout_lstm_step(p, {1.0, 1.0}, random_vector(3, xr, 1.0), st, mode, xr);
      if (out.h != st.h || out.c != st.c)
        d1_frozen = false;
    }
  }

  Rng init(5);
  const auto p = LstmParams::random(3, 5, init);
  const ZoneoutConfig z{0.3, 0.6};
  const LayerState st{random_vector(5, init, 1.0), random_vector(5, init, 2.0)};
  const Vector x = random_vector(3, init, 1.0);
  Rng eval_rng(0);
  const LayerState expect = zoneout_lstm_step(p, z, x, st, Mode::eval, eval_rng);
  const std::size_t N = 100000;
  std::vector<double> sum(10, 0.0), sq(10, 0.0);
  Rng rng(17);
  for (std::size_t n = 0; n < N; ++n) {
    const LayerState s = zoneout_lstm_step(p, z, x, st, Mode::train, rng);
    for (std::size_t k = 0; k < 5; ++k) {
      sum[k] += s.h[k];
      sq[k] += s.h[k] * s.h[k];
      sum[5 + k] += s.c[k];
      sq[5 + k] += s.c[k] * s.c[k];
    }
  }
  double worst_z = 0.0;
  for (std::size_t k = 0; k < 10; ++k) {
    const double mean = sum[k] / N;
    const double var = std::max(sq[k] / N - mean * mean, 0.0) * N / (N - 1);
    const double se = std::sqrt(var / N);
    const double target = k < 5 ? expect.h[k] : expect.c[k - 5];
    const double dev = std::abs(mean - target);
    worst_z = std::max(worst_z, se > 0 ? dev / se : (dev == 0 ? 0.0 : INFINITY));
  }
  record(3, "zoneout limits", gate(d0_equal && d1_frozen && worst_z <= 3.0),
         std::string("d=0 bit-equal ") + (d0_equal ? "yes" : "NO") + ", d=1 frozen " +
           (d1_frozen ? "yes" : "NO") + ", eval vs 1e5-sample mean max " + fmt("%.2f", worst_z) +
           " SE <= 3");
}

// ---------------------------------------------------------------------------
// 4. Viterbi against brute force

DecodeGraph random_graph(Rng &rng, std::size_t &classes) {
  const std::size_t P = rng.between(1, 4);
  std::vector<std::string> names;
  for (std::size_t p = 0; p < P; ++p)
    names.push_back(std::string(1, static_cast<char>('a' + p)));
  DecodeGraph g;
  g.phones = PhoneSet::with_identity_map(names);
  classes = 0;
  g.hmms.resize(P);
  for (std::size_t p = 0; p < P; ++p)
    for (std::size_t s = 0, S = rng.between(1, 2); s < S; ++s) {
      const double stay = rng.uniform(0.05, 0.95);
      g.hmms[p].states.push_back({classes++, std::log(stay), std::log1p(-stay)});
    }
  auto dist = [&] {
    Vector v(P);
    for (auto &x : v)
      x = rng.normal();
    return log_softmax(v);
  };
  g.lm.initial = dist();
  g.lm.transition = Matrix(P, P);
  for (std::size_t i = 0; i < P; ++i) {
    const Vector row = dist();
    std::copy(row.begin(), row.end(), g.lm.transition.row(i).begin());
  }
  return g;
}

void decoder_exactness() {
  Timer timer;
  std::size_t compared = 0, mismatches = 0, skipped = 0;
  double worst = 0.0;
  for (std::uint64_t seed = 0; compared < 200; ++seed) {
    Rng rng(seed + 4242);
    std::size_t C = 0;
    const DecodeGraph g = random_graph(rng, C);
    Matrix scores(rng.between(1, 8), C);
    for (auto &v : scores.values())
      v = rng.uniform(-5.0, 0.0);
    const double w = rng.uniform(0.5, 2.0);
    DecodeResult v, b;
    try {
      v = viterbi_decode(scores, g, w);
    } catch (const DecodeError &) {
      ++skipped; // no complete path fits in T frames
      continue;
    }
    b = brute_force_decode(scores, g, w);
    ++compared;
    worst = std::max(worst, std::abs(v.score - b.score));
    if (v.phones != b.phones || std::abs(v.score - b.score) > 1e-9)
      ++mismatches;
  }
  const double t = timer.seconds();
  record(4, "Viterbi = brute force (200 instances)", gate(mismatches == 0 && t < 30.0),
         std::to_string(mismatches) + " mismatches in " + std::to_string(compared) +
           " (skipped " + std::to_string(skipped) + " without a path), max score diff " +
           fmt("%.1e", worst) + ", " + fmt("%.2f", t) + " s < 30 s");
}

// ---------------------------------------------------------------------------
// 5. PER

std::size_t edit_distance(const PhoneSequence &a, const PhoneSequence &b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j)
    prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j)
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] != b[j - 1])});
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

void scoring() {
  std::size_t bad = 0;
  for (std::uint64_t seed = 0; seed < 500; ++seed) {
    Rng rng(seed + 77);
    const std::size_t alpha = rng.between(1, 10);
    auto draw = [&](std::size_t min_len) {
      PhoneSequence s(rng.between(min_len, 20));
      for (auto &x : s)
        x = std::string(1, static_cast<char>('a' + rng.below(alpha)));
      return s;
    };
    const PhoneSequence ref = draw(1), hyp = draw(0);
    const PerResult r = per(ref, hyp);
    const double want = 100.0 * static_cast<double>(edit_distance(ref, hyp)) / ref.size();
    if (r.errors() != edit_distance(ref, hyp) || std::abs(r.per - want) > 1e-12 ||
        r.reference_length != ref.size() ||
        ref.size() - r.deletions - r.substitutions + r.substitutions + r.insertions != hyp.size())
      ++bad;
  }
  const double p0 = per({"a", "b", "c"}, {"a", "b", "c"}).per;
  const double p33 = per({"a", "b", "c"}, {"a", "x", "c"}).per;
  const double p200 = per({"a"}, {"b", "c"}).per;
  const bool hand = p0 == 0.0 && format_percent(p33) == "33.33" && p200 == 200.0;
  record(5, "PER vs DP oracle (500 pairs) and hand cases", gate(bad == 0 && hand),
         std::to_string(bad) + " mismatches; hand cases " + format_percent(p0) + "%, " +
           format_percent(p33) + "%, " + format_percent(p200) + "%");
}

// ---------------------------------------------------------------------------
// 8. End-to-end desk run

struct DeskRun {
  double master_per = 0.0;
  double baseline_per = 0.0;
  double seconds = 0.0;
};

DeskRun desk_run(const PipelineConfig &p) {
  Timer timer;
  Rng srng(p.synth_seed);
  const Corpus c = generate_synthetic(p.synth, srng);
  Rng trng(p.train_seed);
  const TrainResult tr = train_network(c, p, trng);
  std::vector<Matrix> logps, flat;
  for (const auto &u : c.test) {
    logps.push_back(forward_eval(tr.net, u.features));
    flat.push_back(uniform_log_posteriors(u.frames(), c.num_classes));
  }
  DeskRun r;
  const auto hyps = decode_utterances(c.test, logps, c.graph, decode_priors(c, p.decode), p.decode);
  r.master_per = score_hypotheses(c.test, hyps, c.graph.phones).per();
  DecodeOptions flat_opts = p.decode;
  flat_opts.use_priors = false;
  const auto base =
    decode_utterances(c.test, flat, c.graph, decode_priors(c, flat_opts), flat_opts);
  r.baseline_per = score_hypotheses(c.test, base, c.graph.phones).per();
  r.seconds = timer.seconds();
  return r;
}

void end_to_end() {
  const PipelineConfig p = resolve(Config{});
  const DeskRun noisy = desk_run(p);
  Config zero;
  zero.set("synth.noise", "0");
  const DeskRun clean = desk_run(resolve(zero));
  const double t = noisy.seconds + clean.seconds;
  const double ratio = noisy.master_per / noisy.baseline_per;
  record(8, "end-to-end desk run (LSTM master)",
         gate(ratio <= 0.5 && clean.master_per < 1.0 && t < 600.0),
         "test PER " + format_percent(noisy.master_per) + "% vs prior-only " +
           format_percent(noisy.baseline_per) + "% (ratio " + fmt("%.3f", ratio) +
           " <= 0.5); noise 0 PER " + format_percent(clean.master_per) + "% < 1%; " +
           fmt("%.0f", t) + " s < 600 s");
}

// ---------------------------------------------------------------------------
// 6, 7, 9. Ensembles

void rpl_and_ensembles() {
  // Identity post-layer leaves every scenario unchanged.
  double worst_identity = 0.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed + 300);
    const std::size_t C = rng.between(2, 8), T = rng.between(1, 6), K = rng.between(2, 5);
    auto random_logp = [&] {
      Matrix m(T, C);
      for (std::size_t t = 0; t < T; ++t) {
        Vector z(C);
        for (auto &v : z)
          v = 3.0 * rng.normal();
        const Vector lp = log_softmax(z);
        std::copy(lp.begin(), lp.end(), m.row(t).begin());
      }
      return m;
    };
    MemberOutputs m;
    m.master = random_logp();
    for (std::size_t k = 0; k < K; ++k)
      m.folds.push_back(random_logp());
    const std::optional<RplParams> id = RplParams::identity(C);
    for (auto [base, with] : {std::pair{Scenario::master, Scenario::master_rpl},
                              {Scenario::folds, Scenario::folds_rpl},
                              {Scenario::master_folds, Scenario::master_folds_rpl}}) {
      const Matrix a = scenario_posteriors(base, m, 0.5, id);
      const Matrix b = scenario_posteriors(with, m, 0.5, id);
      for (std::size_t i = 0; i < a.values().size(); ++i)
        worst_identity = std::max(worst_identity, std::abs(a.values()[i] - b.values()[i]));
    }
  }

  // Repeated desk runs of the full ensemble.
  Timer timer;
  const PipelineConfig p = resolve(Config{});
  Rng srng(p.synth_seed);
  const Corpus c = generate_synthetic(p.synth, srng);
  Rng base(p.train_seed);
  ExperimentReport rep;
  std::vector<RplResult> rpls;
  for (std::size_t r = 0; r < p.runs; ++r) {
    Rng run_rng = base.split();
    const EnsembleRun er = train_ensemble(c, p, run_rng);
    rpls.push_back(*er.rpl);
    rep.runs.push_back(evaluate_ensemble(er.ensemble, c, c.test, p.decode));
    std::cerr << "  ensemble run " << r + 1 << "/" << p.runs << " (" << fmt("%.0f", timer.seconds())
              << " s)\n";
  }

  bool never_worse = true;
  double worst_gap = -INFINITY;
  for (const auto &rr : rpls) {
    never_worse = never_worse && rr.heldaside_ce <= rr.identity_ce;
    worst_gap = std::max(worst_gap, rr.heldaside_ce - rr.identity_ce);
  }
  record(6, "RPL identity and never-worse", gate(worst_identity <= 1e-10 && never_worse),
         "identity max diff " + fmt("%.1e", worst_identity) +
           " <= 1e-10; trained - identity held-aside CE max " + fmt("%.2e", worst_gap) +
           " <= 0 over " + std::to_string(rpls.size()) + " runs");

  bool jensen = true;
  double worst_slack = -INFINITY;
  for (const auto &run : rep.runs) {
    jensen = jensen && run.jensen && run.jensen->holds(1e-12);
    if (run.jensen)
      worst_slack = std::max(worst_slack, run.jensen->ensemble_ce - run.jensen->mean_member_ce);
  }
  record(7, "Jensen bound on every run", gate(jensen),
         "max (folds-mean CE - mean member CE) " + fmt("%.4f", worst_slack) + " <= 1e-12 over " +
           std::to_string(rep.runs.size()) + " runs");

  const auto [mf, sf] = mean_std(scenario_pers(rep, Scenario::folds));
  const auto [mm, sm] = mean_std(scenario_pers(rep, Scenario::master));
  const auto [mmf, smf] = mean_std(scenario_pers(rep, Scenario::master_folds));
  record(9, "Folds vs Master (informative, R=" + std::to_string(p.runs) + ")",
         mf <= mm + 0.5 ? Verdict::pass : Verdict::warn,
         "Folds " + format_percent(mf) + " ± " + format_percent(sf) + " vs Master " +
           format_percent(mm) + " ± " + format_percent(sm) + " (+0.5 allowed); Master+Folds " +
           format_percent(mmf) + " ± " + format_percent(smf) + "; " + fmt("%.0f", timer.seconds()) +
           " s");
  std::cerr << format_report(rep);
}

// ---------------------------------------------------------------------------
// 10. CLI determinism

std::map<std::string, std::string> snapshot(const fs::path &root) {
  std::map<std::string, std::string> out;
  for (const auto &e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file())
      out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

void cli_determinism() {
  const fs::path tmp = fs::temp_directory_path() / ("nnam_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(tmp);
  const std::string cli = NNAM_CLI_PATH;
  const std::string tiny =
    " --set synth.train=12 --set synth.dev=4 --set synth.test=4 --set synth.min_frames=10"
    " --set synth.max_frames=20 --set net.hidden=6 --set net.layers=1 --set train.max_epochs=2"
    " --set train.scale_batches=1 --set train.stages=adam:4:0.01,sgd:4:0.001";
  const std::vector<std::pair<std::string, std::string>> commands{
    {"synth", "synth --seed 7" + tiny + " --out @/data"},
    {"synth-default", "synth --seed 7 --out @/data_default"},
    {"train-lstm", "train --data @/data --cell lstm --seed 3" + tiny + " --out @/lstm"},
    {"train-gru", "train --data @/data --cell gru --seed 3" + tiny + " --out @/gru"},
    {"train-zoneout", "train --data @/data --cell zoneout --seed 3" + tiny + " --out @/zoneout"},
    {"train-ff", "train --data @/data --cell ff --seed 3" + tiny + " --out @/ff"},
    {"train-ensemble",
     "train-ensemble --data @/data --folds 2 --master --rpl --seed 3" + tiny + " --out @/ens"},
    {"decode-ensemble",
     "decode --data @/data --ensemble @/ens/ensemble.txt --scenario master+folds --rpl --out @/dec"},
    {"decode-model", "decode --data @/data --model @/lstm/model.txt --out @/decm"},
    {"decode-truth", "decode --data @/data --truth --out @/dect"},
    {"score", "score --data @/data --hyp @/dec/hyp.txt --out @/score"},
    {"gradcheck", "gradcheck --seeds 2 --out @/gc"},
    {"experiment", "experiment --data @/data --runs 2 --seed 3" + tiny + " --out @/exp"},
  };
  std::size_t failures = 0, differing = 0, files = 0;
  std::string first_problem;
  for (const char *side : {"a", "b"}) {
    const fs::path dir = tmp / side;
    fs::create_directories(dir);
    for (const auto &[name, args] : commands) {
      std::string line = args;
      for (std::size_t pos; (pos = line.find('@')) != std::string::npos;)
        line.replace(pos, 1, dir.string());
      const std::string cmd = "\"" + cli + "\" " + line + " > \"" +
                              (dir / (name + ".stdout")).string() + "\" 2>/dev/null";
      if (std::system(cmd.c_str()) != 0) {
        ++failures;
        if (first_problem.empty())
          first_problem = name + " failed";
      }
    }
  }
  const auto a = snapshot(tmp / "a"), b = snapshot(tmp / "b");
  files = a.size();
  for (const auto &[rel, content] : a) {
    const auto it = b.find(rel);
    if (it == b.end() || it->second != content) {
      ++differing;
      if (first_problem.empty())
        first_problem = rel + " differs";
    }
  }
  differing += b.size() > a.size() ? b.size() - a.size() : 0;
  fs::remove_all(tmp);
  record(10, "CLI determinism", gate(failures == 0 && differing == 0 && files > 0),
         std::to_string(commands.size()) + " commands x 2: " + std::to_string(files) + " files, " +
           std::to_string(differing) + " differ, " + std::to_string(failures) + " failed" +
           (first_problem.empty() ? "" : " (" + first_problem + ")"));
}

void guarded(int id, const std::string &title, const std::function<void()> &f) {
  try {
    f();
  } catch (const std::exception &e) {
    record(id, title, Verdict::fail, std::string("exception: ") + e.what());
  }
}

} // namespace

int main() {
  guarded(1, "gradient correctness", gradients);
  guarded(2, "cell equation fidelity", equations);
  guarded(3, "zoneout limits", zoneout_limits);
  guarded(4, "Viterbi = brute force", decoder_exactness);
  guarded(5, "PER vs DP oracle", scoring);
  guarded(8, "end-to-end desk run", end_to_end);
  guarded(6, "ensembles", rpl_and_ensembles);
  guarded(10, "CLI determinism", cli_determinism);

  std::stable_sort(g_lines.begin(), g_lines.end(),
                   [](const Line &a, const Line &b) { return a.id < b.id; });
  bool ok = true;
  for (const auto &l : g_lines) {
    const char *tag = l.verdict == Verdict::pass ? "PASS" : l.verdict == Verdict::warn ? "WARN" : "FAIL";
    std::cout << "[" << tag << "] " << l.id << ". " << l.title << ": " << l.detail << '\n';
    ok = ok && l.verdict != Verdict::fail;
  }
  std::cout << (ok ? "acceptance: all hard criteria pass\n" : "acceptance: FAILED\n");
  return ok ? 0 : 1;
}
