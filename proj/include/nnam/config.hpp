// SPDX-License-Identifier: Apache-2.0
/**
 * @file   config.hpp
 * @brief  Flat key=value configuration with documented defaults, file and
 *         command-line overrides, and conversion into pipeline settings.
 */
#ifndef NNAM_CONFIG_HPP
#define NNAM_CONFIG_HPP

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "nnam/ensemble.hpp"
#include "nnam/io.hpp"
#include "nnam/training.hpp"

namespace nnam {

struct ConfigKey {
  std::string name;
  std::string default_value;
  std::string doc;
};

/// Every recognized key, in documentation order.
inline const std::vector<ConfigKey> &config_keys() {
  static const std::vector<ConfigKey> keys{
    {"synth.phones", "10", "phones in the synthetic inventory"},
    {"synth.states", "2", "HMM states per phone"},
    {"synth.dim", "12", "feature dimension"},
    {"synth.train", "120", "training utterances"},
    {"synth.dev", "20", "development utterances"},
    {"synth.test", "20", "test utterances"},
    {"synth.min_frames", "30", "shortest utterance in frames"},
    {"synth.max_frames", "80", "longest utterance in frames"},
    {"synth.noise", "1.5", "std of the additive feature noise"},
    {"synth.self_loop", "0.5", "HMM self-loop probability"},
    {"synth.lm_sharpness", "1.5", "std of the random bigram logits"},
    {"synth.seed", "7", "generator seed"},
    {"net.cell", "lstm", "lstm | gru | zoneout | ff"},
    {"net.layers", "2", "hidden layers"},
    {"net.hidden", "32", "units per hidden layer"},
    {"zoneout.dc", "0.5", "zoneout probability of the cell state"},
    {"zoneout.dh", "0.5", "zoneout probability of the hidden state"},
    {"dropout.kind", "constant", "constant | dynamic"},
    {"dropout.p", "0.2", "constant dropout probability"},
    {"dropout.peak", "0.15", "peak of the dynamic schedule"},
    {"dropout.total_epochs", "40", "epochs spanned by the dynamic schedule"},
    {"train.stages", "auto",
     "optimizer:batch:lr,... ; auto = adam:512:0.001,sgd:128:0.001,sgd:128:0.0001,sgd:128:0.00001 "
     "(recurrent) or sgd at train.lr with batches 256,1024,2048,2048 (ff)"},
    {"train.batch", "0", "if > 0, overrides every stage's batch size"},
    {"train.lr", "0.01", "initial learning rate of the feed-forward plan"},
    {"train.momentum", "0.9", "SGD momentum"},
    {"train.seed", "1", "training seed"},
    {"train.context", "11", "stacked input frames for feed-forward nets"},
    {"train.delay", "0", "output delay of recurrent nets in frames"},
    {"train.max_epochs", "100", "epoch cap per stage"},
    {"train.scale_batches", "0.0078125", "multiplier on stage batch sizes"},
    {"train.clip", "5", "global gradient-norm clip; 0 disables"},
    {"decode.use_priors", "1", "divide posteriors by class priors"},
    {"decode.acoustic_scale", "1", "acoustic score scale"},
    {"decode.lm_weight", "1", "bigram weight"},
    {"ensemble.folds", "5", "cross-validation folds"},
    {"ensemble.master_weight", "0.5", "master share in master+folds"},
    {"ensemble.master", "1", "train a master network"},
    {"ensemble.rpl", "1", "train the regularization post-layer"},
    {"experiment.runs", "5", "repeated runs of the experiment"},
  };
  return keys;
}

class Config {
public:
  Config() {
    for (const auto &k : config_keys())
      values_[k.name] = k.default_value;
  }

  /// Throws ConfigError for unknown keys.
  void set(const std::string &key, const std::string &value) {
    if (!values_.count(key))
      throw ConfigError("unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// "key=value"
  void set_assignment(std::string_view text) {
    const auto eq = text.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("expected key=value, got '" + std::string(text) + "'");
    set(trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }

  void load_text(const std::string &text, const std::string &source) {
    const auto lines = split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const std::string line = trim(strip_comment(lines[i]));
      if (line.empty())
        continue;
      try {
        set_assignment(line);
      } catch (const ConfigError &e) {
        throw ConfigError(source + ":" + std::to_string(i + 1) + ": " + e.what());
      }
    }
  }

  void load_file(const std::filesystem::path &path) { load_text(read_file(path), path.string()); }

  const std::string &get(const std::string &key) const {
    const auto it = values_.find(key);
    if (it == values_.end())
      throw ConfigError("unknown config key '" + key + "'");
    return it->second;
  }

  double get_double(const std::string &key) const {
    double v = 0.0;
    if (!parse_double(get(key), v))
      throw ConfigError(key + ": expected a number, got '" + get(key) + "'");
    return v;
  }

  std::uint64_t get_uint(const std::string &key) const {
    std::uint64_t v = 0;
    if (!parse_int(get(key), v))
      throw ConfigError(key + ": expected a non-negative integer, got '" + get(key) + "'");
    return v;
  }

  bool get_bool(const std::string &key) const {
    const std::string &v = get(key);
    if (v == "1" || v == "true" || v == "yes" || v == "on")
      return true;
    if (v == "0" || v == "false" || v == "no" || v == "off")
      return false;
    throw ConfigError(key + ": expected a boolean, got '" + v + "'");
  }

  /// Effective settings as a config file.
  std::string dump() const {
    std::string out;
    for (const auto &k : config_keys())
      out += k.name + " = " + values_.at(k.name) + "\n";
    return out;
  }

private:
  static std::string trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
      s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
      s.remove_suffix(1);
    return std::string(s);
  }

  std::map<std::string, std::string> values_;
};

// ---------------------------------------------------------------------------
// Typed views
// ---------------------------------------------------------------------------

struct DecodeOptions {
  bool use_priors = true;
  double acoustic_scale = 1.0;
  double lm_weight = 1.0;
};

struct EnsembleOptions {
  std::size_t folds = 5;
  double master_weight = 0.5;
  bool master = true;
  bool rpl = true;
};

/// Everything a pipeline run needs, resolved from a Config.
struct PipelineConfig {
  SynthSpec synth;
  std::uint64_t synth_seed = 7;
  CellKind cell = CellKind::lstm;
  std::vector<std::size_t> hidden;
  ZoneoutConfig zoneout{0.5, 0.5};
  std::size_t context = 11;
  std::size_t delay = 0;
  TrainOptions train;
  std::uint64_t train_seed = 1;
  DecodeOptions decode;
  EnsembleOptions ensemble;
  std::size_t runs = 5;

  /// Network topology for a corpus; context applies to feed-forward nets only.
  NetworkSpec network_spec(std::size_t feature_dim, std::size_t num_classes) const {
    NetworkSpec s;
    s.kind = cell;
    s.feature_dim = feature_dim;
    s.hidden = hidden;
    s.num_classes = num_classes;
    const bool ff = cell == CellKind::feedforward;
    s.output_delay = ff ? 0 : delay;
    s.context = ff ? context : 1;
    s.dropout = train.dropout ? train.dropout->p_const : 0.0;
    s.zoneout = zoneout;
    return s;
  }
};

inline PipelineConfig resolve(const Config &c) {
  PipelineConfig p;
  p.synth.phones = c.get_uint("synth.phones");
  p.synth.states = c.get_uint("synth.states");
  p.synth.feature_dim = c.get_uint("synth.dim");
  p.synth.train = c.get_uint("synth.train");
  p.synth.dev = c.get_uint("synth.dev");
  p.synth.test = c.get_uint("synth.test");
  p.synth.min_frames = c.get_uint("synth.min_frames");
  p.synth.max_frames = c.get_uint("synth.max_frames");
  p.synth.noise = c.get_double("synth.noise");
  p.synth.self_loop = c.get_double("synth.self_loop");
  p.synth.lm_sharpness = c.get_double("synth.lm_sharpness");
  p.synth.validate();
  p.synth_seed = c.get_uint("synth.seed");

  p.cell = parse_cell_kind(c.get("net.cell"));
  const std::size_t layers = c.get_uint("net.layers"), width = c.get_uint("net.hidden");
  if (layers < 1 || width < 1)
    throw ConfigError("net.layers and net.hidden must be >= 1");
  p.hidden.assign(layers, width);
  p.zoneout = {c.get_double("zoneout.dc"), c.get_double("zoneout.dh")};
  for (double d : {p.zoneout.d_c, p.zoneout.d_h})
    if (!(d >= 0.0 && d <= 1.0))
      throw ConfigError("zoneout probabilities must be in [0,1]");
  p.context = c.get_uint("train.context");
  if (p.context % 2 == 0)
    throw ConfigError("train.context must be odd");
  p.delay = c.get_uint("train.delay");

  DropoutSchedule ds;
  const std::string kind = c.get("dropout.kind");
  if (kind == "constant")
    ds.kind = DropoutSchedule::Kind::constant;
  else if (kind == "dynamic")
    ds.kind = DropoutSchedule::Kind::dynamic;
  else
    throw ConfigError("dropout.kind must be constant or dynamic");
  ds.p_const = c.get_double("dropout.p");
  ds.peak_p = c.get_double("dropout.peak");
  ds.total_epochs = c.get_uint("dropout.total_epochs");
  ds.validate();
  p.train.dropout = ds;

  const std::string stages = c.get("train.stages");
  if (stages == "auto")
    p.train.plan = p.cell == CellKind::feedforward
                     ? default_feedforward_plan(c.get_double("train.lr"))
                     : default_recurrent_plan();
  else
    p.train.plan = parse_stage_plan(stages);
  if (const auto batch = c.get_uint("train.batch"); batch > 0)
    for (auto &s : p.train.plan.stages)
      s.batch = batch;
  p.train.plan.validate();
  p.train.momentum = c.get_double("train.momentum");
  p.train.max_epochs = c.get_uint("train.max_epochs");
  p.train.batch_scale = c.get_double("train.scale_batches");
  if (!(p.train.batch_scale > 0.0))
    throw ConfigError("train.scale_batches must be positive");
  p.train.clip = c.get_double("train.clip");
  p.train_seed = c.get_uint("train.seed");

  p.decode.use_priors = c.get_bool("decode.use_priors");
  p.decode.acoustic_scale = c.get_double("decode.acoustic_scale");
  p.decode.lm_weight = c.get_double("decode.lm_weight");
  if (!(p.decode.acoustic_scale > 0.0))
    throw ConfigError("decode.acoustic_scale must be positive");

  p.ensemble.folds = c.get_uint("ensemble.folds");
  p.ensemble.master_weight = c.get_double("ensemble.master_weight");
  p.ensemble.master = c.get_bool("ensemble.master");
  p.ensemble.rpl = c.get_bool("ensemble.rpl");
  if (!(p.ensemble.master_weight >= 0.0 && p.ensemble.master_weight <= 1.0))
    throw ConfigError("ensemble.master_weight must be in [0,1]");
  p.runs = c.get_uint("experiment.runs");
  if (p.runs < 1)
    throw ConfigError("experiment.runs must be >= 1");
  return p;
}

} // namespace nnam

#endif // NNAM_CONFIG_HPP
