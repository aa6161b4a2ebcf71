#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "prod/errors.hpp"
#include "prod/io.hpp"
#include "prod/labelkit.hpp"
#include "prod/lengthdist.hpp"
#include "prod/predictor.hpp"

namespace prod::config {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

// Protocol constants for one experiment run; defaults follow the benchmark
// protocol (16 repeated generations, 20 bins, 8 trials, temperature noted as
// provenance only — nothing here ever invokes a model).
struct ExperimentConfig {
  std::string scenario = "synthetic-default";
  int r_train = 16;
  int r_test = 16;
  int k_bins = 20;
  labelkit::BinPolicy bin_policy = labelkit::BinPolicy::EqualWidth;
  std::string temperature_note = "0.8";
  int trials = 8;
  int budget_b = 0;  // 0 means "use every training prompt"
  std::vector<int> repeat_grid{1, 2, 3, 4, 6, 8, 12, 16};
  std::vector<uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8};
  double train_fraction = 0.8;
  int min_trainable = 32;
};

inline void validate(const ExperimentConfig& c) {
  if (c.r_train < 1) throw ConfigError("r_train must be >= 1");
  if (c.r_test < 1) throw ConfigError("r_test must be >= 1");
  if (c.k_bins < 2) throw ConfigError("k_bins must be >= 2");
  if (c.trials < 1) throw ConfigError("trials must be >= 1");
  if (c.budget_b < 0) throw ConfigError("budget_b must be >= 0");
  if (c.repeat_grid.empty()) throw ConfigError("repeat_grid must be non-empty");
  for (int k : c.repeat_grid)
    if (k < 1 || k > c.r_train)
      throw ConfigError("repeat_grid entries must lie in [1, r_train]; got " + std::to_string(k));
  if (c.seeds.empty()) throw ConfigError("seeds must be non-empty");
  if (c.train_fraction <= 0.0 || c.train_fraction >= 1.0)
    throw ConfigError("train_fraction must lie in (0,1)");
  if (c.min_trainable < 1) throw ConfigError("min_trainable must be >= 1");
}

struct AppConfig {
  int schema_version = kSchemaVersion;
  lengthdist::GeneratorConfig generator;
  ExperimentConfig experiment;
  predictor::TrainConfig train;
  json theory = json::object();  // free-form theory-suite overrides
};

// ---------------------------------------------------------------------------
// JSON binding with unknown-key rejection
// ---------------------------------------------------------------------------

namespace detail {

inline void check_keys(const json& j, const std::set<std::string>& known, const std::string& section) {
  for (const auto& [key, value] : j.items())
    if (!known.count(key)) throw ConfigError("unknown key '" + key + "' in section '" + section + "'");
}

inline labelkit::BinPolicy bin_policy_from(const std::string& s) {
  if (s == "equal-width") return labelkit::BinPolicy::EqualWidth;
  if (s == "quantile") return labelkit::BinPolicy::Quantile;
  throw ConfigError("bin_policy must be 'equal-width' or 'quantile', got '" + s + "'");
}

inline std::string to_string(labelkit::BinPolicy p) {
  return p == labelkit::BinPolicy::EqualWidth ? "equal-width" : "quantile";
}

inline predictor::TrainMode train_mode_from(const std::string& s) {
  if (s == "prod-m") return predictor::TrainMode::ProdM;
  if (s == "prod-d") return predictor::TrainMode::ProdD;
  if (s == "single-sample") return predictor::TrainMode::SingleSample;
  throw ConfigError("mode must be 'prod-m', 'prod-d', or 'single-sample', got '" + s + "'");
}

inline std::string to_string(predictor::TrainMode m) {
  switch (m) {
    case predictor::TrainMode::ProdM: return "prod-m";
    case predictor::TrainMode::ProdD: return "prod-d";
    case predictor::TrainMode::SingleSample: return "single-sample";
  }
  return "prod-m";
}

inline predictor::Optimizer optimizer_from(const std::string& s) {
  if (s == "sgd") return predictor::Optimizer::Sgd;
  if (s == "adam-style") return predictor::Optimizer::AdamStyle;
  throw ConfigError("optimizer must be 'sgd' or 'adam-style', got '" + s + "'");
}

inline std::string to_string(predictor::Optimizer o) {
  return o == predictor::Optimizer::Sgd ? "sgd" : "adam-style";
}

inline std::string to_string(lengthdist::LengthFamily f) {
  return f == lengthdist::LengthFamily::LognormalParetoMix ? "lognormal-pareto-mix" : "discrete-pmf";
}

inline lengthdist::LengthFamily family_from(const std::string& s) {
  if (s == "lognormal-pareto-mix") return lengthdist::LengthFamily::LognormalParetoMix;
  if (s == "discrete-pmf") return lengthdist::LengthFamily::DiscretePmf;
  throw ConfigError("family must be 'lognormal-pareto-mix' or 'discrete-pmf', got '" + s + "'");
}

}  // namespace detail

inline json to_json(const lengthdist::GeneratorConfig& g) {
  json j;
  j["d"] = g.d;
  j["n_prompts"] = g.n_prompts;
  j["family"] = detail::to_string(g.family);
  j["link_scale"] = g.link_scale;
  j["link_gain"] = g.link_gain;
  j["link_seed"] = g.link_seed;
  j["body_sigma"] = g.body_sigma;
  j["tail_weight"] = g.tail_weight;
  j["tail_alpha"] = g.tail_alpha;
  j["tail_xmin_ratio"] = g.tail_xmin_ratio;
  j["max_len"] = g.max_len;
  j["allow_infinite_mean"] = g.allow_infinite_mean;
  return j;
}

inline json to_json(const ExperimentConfig& e) {
  json j;
  j["scenario"] = e.scenario;
  j["r_train"] = e.r_train;
  j["r_test"] = e.r_test;
  j["k_bins"] = e.k_bins;
  j["bin_policy"] = detail::to_string(e.bin_policy);
  j["temperature_note"] = e.temperature_note;
  j["trials"] = e.trials;
  j["budget_b"] = e.budget_b;
  j["repeat_grid"] = e.repeat_grid;
  j["seeds"] = e.seeds;
  j["train_fraction"] = e.train_fraction;
  j["min_trainable"] = e.min_trainable;
  return j;
}

inline json to_json(const predictor::TrainConfig& t) {
  json j;
  j["mode"] = detail::to_string(t.mode);
  j["epochs"] = t.epochs;
  j["batch_size"] = t.batch_size;
  j["learning_rate"] = t.learning_rate;
  j["seed"] = t.seed;
  j["optimizer"] = detail::to_string(t.optimizer);
  j["hidden"] = t.hidden;
  return j;
}

inline json to_json(const AppConfig& c) {
  json j;
  j["schema_version"] = c.schema_version;
  j["generator"] = to_json(c.generator);
  j["experiment"] = to_json(c.experiment);
  j["train"] = to_json(c.train);
  if (!c.theory.empty()) j["theory"] = c.theory;
  return j;
}

inline AppConfig from_json(const json& j) {
  detail::check_keys(j, {"schema_version", "generator", "experiment", "train", "theory"}, "top-level");
  AppConfig cfg;
  cfg.schema_version = j.value("schema_version", kSchemaVersion);
  if (cfg.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(cfg.schema_version));

  if (j.contains("generator")) {
    const json& g = j["generator"];
    detail::check_keys(g,
                       {"d", "n_prompts", "family", "link_scale", "link_gain", "link_seed", "body_sigma",
                        "tail_weight", "tail_alpha", "tail_xmin_ratio", "max_len", "allow_infinite_mean"},
                       "generator");
    auto& cg = cfg.generator;
    cg.d = g.value("d", cg.d);
    cg.n_prompts = g.value("n_prompts", cg.n_prompts);
    if (g.contains("family")) cg.family = detail::family_from(g["family"].get<std::string>());
    cg.link_scale = g.value("link_scale", cg.link_scale);
    cg.link_gain = g.value("link_gain", cg.link_gain);
    cg.link_seed = g.value("link_seed", cg.link_seed);
    cg.body_sigma = g.value("body_sigma", cg.body_sigma);
    cg.tail_weight = g.value("tail_weight", cg.tail_weight);
    cg.tail_alpha = g.value("tail_alpha", cg.tail_alpha);
    cg.tail_xmin_ratio = g.value("tail_xmin_ratio", cg.tail_xmin_ratio);
    cg.max_len = g.value("max_len", cg.max_len);
    cg.allow_infinite_mean = g.value("allow_infinite_mean", cg.allow_infinite_mean);
  }

  if (j.contains("experiment")) {
    const json& e = j["experiment"];
    detail::check_keys(e,
                       {"scenario", "r_train", "r_test", "k_bins", "bin_policy", "temperature_note", "trials",
                        "budget_b", "repeat_grid", "seeds", "train_fraction", "min_trainable"},
                       "experiment");
    auto& ce = cfg.experiment;
    ce.scenario = e.value("scenario", ce.scenario);
    ce.r_train = e.value("r_train", ce.r_train);
    ce.r_test = e.value("r_test", ce.r_test);
    ce.k_bins = e.value("k_bins", ce.k_bins);
    if (e.contains("bin_policy")) ce.bin_policy = detail::bin_policy_from(e["bin_policy"].get<std::string>());
    ce.temperature_note = e.value("temperature_note", ce.temperature_note);
    ce.trials = e.value("trials", ce.trials);
    ce.budget_b = e.value("budget_b", ce.budget_b);
    if (e.contains("repeat_grid")) ce.repeat_grid = e["repeat_grid"].get<std::vector<int>>();
    if (e.contains("seeds")) ce.seeds = e["seeds"].get<std::vector<uint64_t>>();
    ce.train_fraction = e.value("train_fraction", ce.train_fraction);
    ce.min_trainable = e.value("min_trainable", ce.min_trainable);
  }

  if (j.contains("train")) {
    const json& t = j["train"];
    detail::check_keys(t, {"mode", "epochs", "batch_size", "learning_rate", "seed", "optimizer", "hidden"},
                       "train");
    auto& ct = cfg.train;
    if (t.contains("mode")) ct.mode = detail::train_mode_from(t["mode"].get<std::string>());
    ct.epochs = t.value("epochs", ct.epochs);
    ct.batch_size = t.value("batch_size", ct.batch_size);
    ct.learning_rate = t.value("learning_rate", ct.learning_rate);
    ct.seed = t.value("seed", ct.seed);
    if (t.contains("optimizer")) ct.optimizer = detail::optimizer_from(t["optimizer"].get<std::string>());
    ct.hidden = t.value("hidden", ct.hidden);
  }

  if (j.contains("theory")) {
    if (!j["theory"].is_object()) throw ConfigError("'theory' must be an object");
    cfg.theory = j["theory"];
  }

  lengthdist::validate(cfg.generator);
  validate(cfg.experiment);
  predictor::validate(cfg.train);
  return cfg;
}

inline AppConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("invalid config JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

inline std::string config_hash(const AppConfig& cfg) { return io::hash_of(to_json(cfg)); }

}  // namespace prod::config
