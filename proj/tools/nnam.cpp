// SPDX-License-Identifier: Apache-2.0
// nnam: command-line driver for synthesis, training, ensembles, decoding,
// scoring, gradient checks and repeated-run experiments.
//
// Exit codes: 0 success, 1 runtime error, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nnam/config.hpp"
#include "nnam/corpus.hpp"
#include "nnam/ensemble.hpp"
#include "nnam/experiment.hpp"
#include "nnam/gradcheck.hpp"
#include "nnam/model_io.hpp"
#include "nnam/training.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::string config_file;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> sets;
};

/// defaults < --config file < --set / --seed / subcommand flags
nnam::Config build_config(const Globals &g, const std::vector<std::string> &extra) {
  nnam::Config c;
  if (!g.config_file.empty())
    c.load_file(g.config_file);
  for (const auto &s : g.sets)
    c.set_assignment(s);
  for (const auto &s : extra)
    c.set_assignment(s);
  if (g.seed) {
    c.set("synth.seed", std::to_string(*g.seed));
    c.set("train.seed", std::to_string(*g.seed));
  }
  return c;
}

const std::vector<nnam::Utterance> &pick_split(const nnam::Corpus &c, const std::string &name) {
  if (name == "train")
    return c.train;
  if (name == "dev")
    return c.dev;
  if (name == "test")
    return c.test;
  throw UsageError("--split must be train, dev or test");
}

fs::path require_out(const Globals &g, const char *cmd) {
  if (g.out.empty())
    throw UsageError(std::string(cmd) + ": --out is required");
  return g.out;
}

void log(const std::string &line) { std::cerr << line << '\n'; }

// ---------------------------------------------------------------------------

int cmd_synth(const Globals &g) {
  const fs::path out = require_out(g, "synth");
  const nnam::Config cfg = build_config(g, {});
  const nnam::PipelineConfig p = nnam::resolve(cfg);
  nnam::Rng rng(p.synth_seed);
  const auto [corpus, model] = nnam::synthesize(p.synth, rng);
  nnam::save_corpus(out, corpus);
  nnam::write_file_atomic(out / "truth.txt", nnam::write_truth({model.means, p.synth.noise}));
  nnam::write_file_atomic(out / "config.txt", cfg.dump());
  log("synth: " + std::to_string(corpus.train.size()) + "/" + std::to_string(corpus.dev.size()) +
      "/" + std::to_string(corpus.test.size()) + " utterances, " +
      std::to_string(corpus.num_classes) + " classes -> " + out.string());
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string cell;
};

int cmd_train(const Globals &g, const TrainArgs &a) {
  const fs::path out = require_out(g, "train");
  std::vector<std::string> extra;
  if (!a.cell.empty())
    extra.push_back("net.cell=" + a.cell);
  const nnam::Config cfg = build_config(g, extra);
  const nnam::PipelineConfig p = nnam::resolve(cfg);
  const nnam::Corpus corpus = nnam::load_corpus(a.data);
  nnam::Rng rng(p.train_seed);
  std::string epoch_log = "# stage epoch train_ce dev_ce p_dropout\n";
  const auto result = nnam::train_network(corpus, p, rng, [&](const nnam::EpochRecord &r) {
    const std::string line = nnam::format_epoch(r) + (r.rolled_back ? " rollback" : "");
    epoch_log += line + '\n';
    log(line);
  });
  nnam::save_model_file(out / "model.txt", result.net);
  nnam::write_file_atomic(out / "train.log", epoch_log);
  nnam::write_file_atomic(out / "config.txt", cfg.dump());
  log("train: dev CE " + nnam::format_double(result.stage_dev_ce.back()) + " -> " +
      (out / "model.txt").string());
  return 0;
}

struct EnsembleArgs {
  std::string data;
  std::optional<std::size_t> folds;
  std::optional<bool> master;
  std::optional<bool> rpl;
};

int cmd_train_ensemble(const Globals &g, const EnsembleArgs &a) {
  const fs::path out = require_out(g, "train-ensemble");
  std::vector<std::string> extra;
  if (a.folds)
    extra.push_back("ensemble.folds=" + std::to_string(*a.folds));
  if (a.master)
    extra.push_back(std::string("ensemble.master=") + (*a.master ? "1" : "0"));
  if (a.rpl)
    extra.push_back(std::string("ensemble.rpl=") + (*a.rpl ? "1" : "0"));
  const nnam::Config cfg = build_config(g, extra);
  const nnam::PipelineConfig p = nnam::resolve(cfg);
  const nnam::Corpus corpus = nnam::load_corpus(a.data);
  nnam::Rng rng(p.train_seed);
  const nnam::EnsembleRun run = nnam::train_ensemble(corpus, p, rng);
  const fs::path manifest = nnam::save_ensemble(out, run.ensemble);
  nnam::write_file_atomic(out / "config.txt", cfg.dump());
  if (run.rpl)
    log("train-ensemble: RPL held-aside CE " + nnam::format_double(run.rpl->heldaside_ce) +
        " (identity " + nnam::format_double(run.rpl->identity_ce) + ")");
  log("train-ensemble: manifest " + manifest.string());
  return 0;
}

struct DecodeArgs {
  std::string data;
  std::string model;
  std::string ensemble;
  std::string scenario = "master+folds";
  bool rpl = false;
  bool truth = false;
  bool uniform = false;
  std::string split = "test";
};

int cmd_decode(const Globals &g, const DecodeArgs &a) {
  const int sources = !a.model.empty() + !a.ensemble.empty() + a.truth + a.uniform;
  if (sources != 1)
    throw UsageError("decode: give exactly one of --model, --ensemble, --truth, --uniform");
  const nnam::PipelineConfig p = nnam::resolve(build_config(g, {}));
  const nnam::Corpus corpus = nnam::load_corpus(a.data);
  const auto &utts = pick_split(corpus, a.split);

  std::vector<nnam::Matrix> logps;
  if (!a.model.empty()) {
    const auto net = nnam::load_model_file(a.model);
    for (const auto &u : utts)
      logps.push_back(nnam::forward_eval(net, u.features));
  } else if (!a.ensemble.empty()) {
    const nnam::Ensemble e = nnam::load_ensemble(a.ensemble);
    nnam::Scenario s = nnam::parse_scenario(a.scenario);
    if (a.rpl)
      s = nnam::make_scenario(nnam::scenario_members(s), true);
    for (const auto &u : utts)
      logps.push_back(nnam::log_of(nnam::scenario_posteriors(
        s, nnam::member_outputs(e, u.features), e.master_weight, e.rpl)));
  } else if (a.truth) {
    const fs::path path = fs::path(a.data) / "truth.txt";
    const nnam::SynthTruth truth = nnam::parse_truth(nnam::read_file(path), path.string());
    for (const auto &u : utts)
      logps.push_back(nnam::gaussian_log_posteriors(u.features, truth));
  } else {
    for (const auto &u : utts)
      logps.push_back(nnam::uniform_log_posteriors(u.frames(), corpus.num_classes));
  }
  // A flat score matrix means no prior division either.
  nnam::DecodeOptions opts = p.decode;
  if (a.uniform)
    opts.use_priors = false;
  const auto hyps = nnam::decode_utterances(utts, logps, corpus.graph,
                                            nnam::decode_priors(corpus, opts), opts);
  const std::string text = nnam::write_hypotheses(hyps);
  if (g.out.empty())
    std::cout << text;
  else
    nnam::write_file_atomic(fs::path(g.out) / "hyp.txt", text);
  return 0;
}

struct ScoreArgs {
  std::string data;
  std::string hyp;
  std::string split = "test";
};

int cmd_score(const Globals &g, const ScoreArgs &a) {
  const nnam::Corpus corpus = nnam::load_corpus(a.data);
  const auto hyps = nnam::parse_hypotheses(nnam::read_file(a.hyp));
  const std::string line =
    nnam::format_score(nnam::score_hypotheses(pick_split(corpus, a.split), hyps,
                                              corpus.graph.phones));
  std::cout << line << '\n';
  if (!g.out.empty())
    nnam::write_file_atomic(fs::path(g.out) / "score.txt", line + '\n');
  return 0;
}

struct GradcheckArgs {
  std::string cell = "all";
  std::size_t seeds = 20;
  double tolerance = 1e-4;
  std::string corrupt;
};

int cmd_gradcheck(const Globals &g, const GradcheckArgs &a) {
  std::vector<nnam::CellKind> kinds;
  if (a.cell == "all")
    kinds = {nnam::CellKind::lstm, nnam::CellKind::gru, nnam::CellKind::zoneout_lstm,
             nnam::CellKind::feedforward};
  else
    kinds = {nnam::parse_cell_kind(a.cell)};
  const std::uint64_t base = g.seed.value_or(0);

  // Test hook: bump the first analytic gradient entry of the named tensor.
  bool corrupt_matched = a.corrupt.empty();
  auto tamper = [&](nnam::RecurrentNetwork &grad) {
    nnam::visit_parameters(grad, [&](const std::string &name, auto &t) {
      if (name == a.corrupt) {
        t.values()[0] += 1.0;
        corrupt_matched = true;
      }
    });
  };

  std::string report;
  bool all_pass = true;
  for (const auto kind : kinds) {
    nnam::GradcheckResult worst;
    for (std::size_t s = 0; s < a.seeds; ++s) {
      const auto c = nnam::make_gradcheck_case(kind, base + s);
      nnam::GradcheckResult r;
      if (a.corrupt.empty())
        r = nnam::gradient_check(c.net, c.frames, c.targets, c.masks);
      else
        r = nnam::gradient_check(c.net, c.frames, c.targets, c.masks, 1e-5, tamper);
      if (s == 0 || r.max_rel_error > worst.max_rel_error)
        worst = r;
    }
    const bool pass = worst.max_rel_error < a.tolerance;
    all_pass = all_pass && pass;
    char err[32];
    std::snprintf(err, sizeof err, "%.3e", worst.max_rel_error);
    report += std::string(nnam::to_string(kind)) + (pass ? " PASS" : " FAIL") +
              " max_rel_error " + err + " worst " + worst.worst_parameter + '\n';
  }
  if (!corrupt_matched)
    throw UsageError("gradcheck: --corrupt names no parameter tensor: " + a.corrupt);
  std::cout << report;
  if (!g.out.empty())
    nnam::write_file_atomic(fs::path(g.out) / "gradcheck.txt", report);
  return all_pass ? 0 : kExitRuntime;
}

struct ExperimentArgs {
  std::string data;
  std::optional<std::size_t> runs;
};

int cmd_experiment(const Globals &g, const ExperimentArgs &a) {
  std::vector<std::string> extra;
  if (a.runs)
    extra.push_back("experiment.runs=" + std::to_string(*a.runs));
  const nnam::Config cfg = build_config(g, extra);
  const nnam::PipelineConfig p = nnam::resolve(cfg);
  nnam::Corpus corpus;
  if (a.data.empty()) {
    nnam::Rng rng(p.synth_seed);
    corpus = nnam::generate_synthetic(p.synth, rng);
  } else {
    corpus = nnam::load_corpus(a.data);
  }
  const auto rep = nnam::run_experiment(corpus, p, [&](std::size_t r) {
    log("experiment: run " + std::to_string(r + 1) + "/" + std::to_string(p.runs) + " done");
  });
  const std::string text = nnam::format_report(rep);
  std::cout << text;
  if (!g.out.empty()) {
    nnam::write_file_atomic(fs::path(g.out) / "report.txt", text);
    nnam::write_file_atomic(fs::path(g.out) / "config.txt", cfg.dump());
  }
  return 0;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"nnam: recurrent acoustic models, ensembles and phone decoding"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--config", g.config_file, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--seed", g.seed, "seed for synthesis and training");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--set", g.sets, "config override key=value (repeatable)");

  auto *synth = app.add_subcommand("synth", "generate a synthetic corpus");

  TrainArgs ta;
  auto *train = app.add_subcommand("train", "train one network");
  train->add_option("--data", ta.data, "corpus directory")->required();
  train->add_option("--cell", ta.cell, "lstm | gru | zoneout | ff");

  EnsembleArgs ea;
  auto *tens = app.add_subcommand("train-ensemble", "train master, folds and RPL");
  tens->add_option("--data", ea.data, "corpus directory")->required();
  tens->add_option("--folds", ea.folds, "number of folds (0 or >= 2)");
  tens->add_flag("--master,!--no-master", ea.master, "train a master network");
  tens->add_flag("--rpl,!--no-rpl", ea.rpl, "train the post-layer");

  DecodeArgs da;
  auto *decode = app.add_subcommand("decode", "decode a corpus split to phone transcripts");
  decode->add_option("--data", da.data, "corpus directory")->required();
  decode->add_option("--model", da.model, "single model file");
  decode->add_option("--ensemble", da.ensemble, "ensemble manifest");
  decode->add_option("--scenario", da.scenario, "master | folds | master+folds (+rpl)");
  decode->add_flag("--rpl", da.rpl, "apply the ensemble's post-layer");
  decode->add_flag("--truth", da.truth, "use the generator's ground-truth acoustic model");
  decode->add_flag("--uniform", da.uniform, "uniform acoustic scores (prior-only baseline)");
  decode->add_option("--split", da.split, "train | dev | test");

  ScoreArgs sa;
  auto *score = app.add_subcommand("score", "phone error rate of a hypothesis file");
  score->add_option("--data", sa.data, "corpus directory")->required();
  score->add_option("--hyp", sa.hyp, "hypothesis file")->required();
  score->add_option("--split", sa.split, "train | dev | test");

  GradcheckArgs ga;
  auto *gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient check");
  gradcheck->add_option("--cell", ga.cell, "all | lstm | gru | zoneout | ff");
  gradcheck->add_option("--seeds", ga.seeds, "random cases per cell kind");
  gradcheck->add_option("--tolerance", ga.tolerance, "maximum relative error");
  gradcheck->add_option("--corrupt", ga.corrupt, "test hook: perturb this tensor's gradient");

  ExperimentArgs xa;
  auto *experiment = app.add_subcommand("experiment", "repeated ensemble runs, PER per scenario");
  experiment->add_option("--data", xa.data, "corpus directory (default: synthesize)");
  experiment->add_option("--runs", xa.runs, "repetitions");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError &e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(g);
    if (*train) return cmd_train(g, ta);
    if (*tens) return cmd_train_ensemble(g, ea);
    if (*decode) return cmd_decode(g, da);
    if (*score) return cmd_score(g, sa);
    if (*gradcheck) return cmd_gradcheck(g, ga);
    if (*experiment) return cmd_experiment(g, xa);
  } catch (const UsageError &e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nnam::ConfigError &e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
