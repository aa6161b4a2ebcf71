// prodctl: dataset generation, trace ingestion, label building, training,
// evaluation, ablations, budget curves, theory checks, and plot-data emission
// for prompt-conditioned output-length prediction experiments.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "prod/config.hpp"
#include "prod/io.hpp"
#include "prod/pipeline.hpp"

namespace fs = std::filesystem;
using namespace prod;
using nlohmann::json;

namespace {

struct GlobalOpts {
  std::string config_path;
  uint64_t seed = 0;
  std::string out_dir = "out";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
};

config::AppConfig load_config(const GlobalOpts& g) {
  if (g.config_path.empty()) return config::AppConfig{};
  return config::load(g.config_path);
}

pipeline::Dataset resolve_dataset(const config::AppConfig& cfg, const GlobalOpts& g,
                                  const std::string& in_path) {
  if (!in_path.empty()) return pipeline::dataset_from_traces(io::ingest(in_path));
  return pipeline::make_synthetic_dataset(cfg.generator, g.seed);
}

int cmd_generate(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, g.seed);
  const auto records = pipeline::export_traces(ds, cfg.experiment.r_train, g.seed);
  fs::create_directories(g.out_dir);
  const fs::path path = fs::path(g.out_dir) / "traces.jsonl";
  io::write_traces(records, path);
  std::printf("generate: wrote %zu prompts x %d samples to %s (config %s)\n", records.size(),
              cfg.experiment.r_train, path.string().c_str(), config::config_hash(cfg).c_str());
  return 0;
}

int cmd_ingest(const std::string& in_path) {
  const auto records = io::ingest(in_path);
  size_t with_phi = 0;
  long total_lengths = 0;
  for (const auto& rec : records) {
    with_phi += rec.phi ? 1 : 0;
    total_lengths += static_cast<long>(rec.lengths.size());
  }
  std::printf("ingest: %zu records, %zu with phi, %ld total lengths, ok\n", records.size(), with_phi,
              total_lengths);
  return 0;
}

int cmd_label(const GlobalOpts& g, const std::string& in_path) {
  const auto cfg = load_config(g);
  const auto records = io::ingest(in_path);

  std::vector<int> all_lengths;
  for (const auto& rec : records) all_lengths.insert(all_lengths.end(), rec.lengths.begin(), rec.lengths.end());
  labelkit::GridBuildInfo info;
  const auto grid = labelkit::make_bin_grid(all_lengths, cfg.experiment.k_bins, cfg.experiment.bin_policy, &info);

  std::vector<labelkit::MedianLabel> medians;
  std::vector<labelkit::DistLabel> hists;
  for (const auto& rec : records) {
    lengthdist::SamplePool pool;
    pool.prompt_id = rec.prompt_id;
    pool.lengths = rec.lengths;
    medians.push_back(labelkit::make_median_label(pool, grid));
    hists.push_back(labelkit::project_histogram(pool, grid));
  }

  fs::create_directories(g.out_dir);
  io::write_labels(medians, hists, grid, fs::path(g.out_dir) / "labels.jsonl");
  io::write_text_file(fs::path(g.out_dir) / "grid.json", io::to_json(grid).dump(2) + "\n");
  std::printf("label: %zu prompts onto %d bins (requested %d) -> %s\n", records.size(), info.merged_bins,
              info.requested_bins, g.out_dir.c_str());
  return 0;
}

int cmd_train(const GlobalOpts& g, const std::string& in_path) {
  const auto cfg = load_config(g);
  const auto ds = pipeline::dataset_from_traces(io::ingest(in_path));

  const int r = cfg.train.mode == predictor::TrainMode::SingleSample ? 1 : cfg.experiment.r_train;
  const uint64_t pool_seed = rng::combine(g.seed, rng::hash_bytes("train-pools"));
  std::vector<lengthdist::SamplePool> pools;
  pools.reserve(ds.prompts.size());
  for (size_t i = 0; i < ds.prompts.size(); ++i) pools.push_back(pipeline::pool_for(ds, i, r, pool_seed));

  std::vector<int> all_lengths;
  for (const auto& pool : pools) all_lengths.insert(all_lengths.end(), pool.lengths.begin(), pool.lengths.end());
  const auto grid = labelkit::make_bin_grid(all_lengths, cfg.experiment.k_bins, cfg.experiment.bin_policy);

  std::vector<predictor::TrainExample> examples;
  examples.reserve(pools.size());
  for (size_t i = 0; i < pools.size(); ++i) {
    if (cfg.train.mode == predictor::TrainMode::ProdD)
      examples.push_back({ds.prompts[i].phi, labelkit::project_histogram(pools[i], grid).hist});
    else
      examples.push_back({ds.prompts[i].phi, labelkit::make_median_label(pools[i], grid).onehot});
  }

  predictor::TrainConfig tc = cfg.train;
  tc.seed = rng::combine(g.seed, tc.seed);
  const auto result = predictor::train(examples, tc);

  fs::create_directories(g.out_dir);
  const std::string mode = config::detail::to_string(cfg.train.mode);
  io::write_params(result.params, grid, mode, config::config_hash(cfg), fs::path(g.out_dir) / "params.json");
  io::Csv log({"epoch", "loss"}, "config_hash=" + config::config_hash(cfg));
  for (size_t e = 0; e < result.epoch_loss.size(); ++e)
    log.append_row({std::to_string(e), io::format_double(result.epoch_loss[e])});
  log.write(fs::path(g.out_dir) / "train_log.csv");
  std::printf("train: mode %s on %zu prompts, final loss %.6f -> %s\n", mode.c_str(), examples.size(),
              result.epoch_loss.back(), g.out_dir.c_str());
  return 0;
}

void write_eval_residuals(const json& report, const fs::path& path) {
  io::Csv residuals({"prompt_id", "prediction", "target", "abs_err"},
                    "config_hash=" + report.at("config_hash").get<std::string>() +
                        " params_hash=" + report.at("params_hash").get<std::string>());
  for (const auto& row : report.at("rows"))
    residuals.append_row({row.at("prompt_id").get<std::string>(),
                          io::format_double(row.at("prediction").get<double>()),
                          io::format_double(row.at("target").get<double>()),
                          io::format_double(row.at("abs_err").get<double>())});
  residuals.write(path);
}

int cmd_eval_model(const GlobalOpts& g, const std::string& in_path, const std::string& params_path) {
  const auto cfg = load_config(g);
  const auto loaded = io::load_params(params_path);
  const auto ds = pipeline::dataset_from_traces(io::ingest(in_path));

  const uint64_t pool_seed = rng::combine(g.seed, rng::hash_bytes("test-pools"));
  metrics::Scored predictions, targets;
  std::vector<double> target_values;
  double radius_sum = 0.0;
  std::string predictions_lines;
  for (size_t i = 0; i < ds.prompts.size(); ++i) {
    const int r = std::min<int>(cfg.experiment.r_test, static_cast<int>(ds.stored[i].size()));
    const auto pool = pipeline::pool_for(ds, i, r, pool_seed);
    const auto q = predictor::forward(loaded.params, ds.prompts[i].phi);
    const double decoded = predictor::decode_median(q, loaded.grid);
    predictions.emplace_back(ds.prompts[i].id, decoded);
    const double target = labelkit::sample_median(pool.lengths);
    targets.emplace_back(ds.prompts[i].id, target);
    target_values.push_back(target);
    radius_sum += metrics::noise_radius(pool);

    json line;
    line["prompt_id"] = ds.prompts[i].id;
    line["probs"] = q.probs;
    line["decoded_median"] = decoded;
    predictions_lines += line.dump() + "\n";
  }

  auto report = metrics::evaluate(predictions, targets);
  report.noise_radius = radius_sum / static_cast<double>(ds.prompts.size());
  report.baseline_mae = metrics::constant_median_baseline(target_values, target_values);
  report.config_hash = loaded.config_hash;

  fs::create_directories(g.out_dir);
  json j;
  j["kind"] = "eval-report";
  j["mae"] = report.mae;
  j["noise_radius"] = report.noise_radius;
  j["baseline_mae"] = report.baseline_mae;
  j["config_hash"] = config::config_hash(cfg);
  j["params_hash"] = loaded.config_hash;
  j["n_prompts"] = ds.prompts.size();
  for (const auto& row : report.per_prompt)
    j["rows"].push_back({{"prompt_id", row.prompt_id},
                         {"prediction", row.prediction},
                         {"target", row.target},
                         {"abs_err", row.abs_err}});
  io::write_text_file(fs::path(g.out_dir) / "report.json", j.dump(2) + "\n");

  write_eval_residuals(j, fs::path(g.out_dir) / "residuals.csv");
  io::write_text_file(fs::path(g.out_dir) / "predictions.jsonl", predictions_lines);

  std::printf("eval: MAE %.4f over %zu prompts (noise radius %.4f, baseline %.4f) -> %s\n", report.mae,
              ds.prompts.size(), report.noise_radius, report.baseline_mae, g.out_dir.c_str());
  return 0;
}

int cmd_eval_benchmark(const GlobalOpts& g, const std::string& in_path) {
  const auto cfg = load_config(g);
  const auto ds = resolve_dataset(cfg, g, in_path);
  const auto report = pipeline::run_benchmark(cfg, ds, g.seed, g.jobs);
  pipeline::write_report(pipeline::to_json(report), g.out_dir);
  pipeline::emit_plot_data(report, g.out_dir);
  std::printf("benchmark: scenario %s, %d train / %d test prompts, %d trials\n",
              cfg.experiment.scenario.c_str(), report.n_train, report.n_test, cfg.experiment.trials);
  for (const auto& [method, ms] : report.summary)
    std::printf("  %-16s mae %8.3f +- %.3f\n", method.c_str(), ms.mean, ms.std);
  std::printf("  %-16s %8.3f\n", "noise-radius", report.noise_radius_mean);
  return 0;
}

int cmd_ablate(const GlobalOpts& g, const std::string& in_path) {
  const auto cfg = load_config(g);
  const auto ds = resolve_dataset(cfg, g, in_path);
  const auto report = pipeline::run_single_sample_ablation(cfg, ds, g.seed, g.jobs);
  pipeline::write_report(pipeline::to_json(report), g.out_dir);
  pipeline::emit_plot_data(report, g.out_dir);
  std::printf("ablate-single: %zu trials\n", report.rows.size());
  std::printf("  single-label eval  mae %8.3f +- %.3f\n", report.single_eval.mean, report.single_eval.std);
  std::printf("  median-target eval mae %8.3f +- %.3f\n", report.median_eval.mean, report.median_eval.std);
  return 0;
}

int cmd_budget_curve(const GlobalOpts& g, const std::string& in_path) {
  const auto cfg = load_config(g);
  const auto ds = resolve_dataset(cfg, g, in_path);
  const auto report = pipeline::run_budget_curve(cfg, ds, g.seed, g.jobs);
  pipeline::write_report(pipeline::to_json(report), g.out_dir);
  pipeline::emit_plot_data(report, g.out_dir);
  std::printf("budget-curve: budget %ld over repeat grid of %zu points\n", report.budget_b,
              cfg.experiment.repeat_grid.size());
  for (const auto& [method, by_k] : report.summary)
    for (const auto& [k, ms] : by_k)
      std::printf("  %-8s k=%-3d mae %8.3f +- %.3f\n", method.c_str(), k, ms.mean, ms.std);
  for (const auto& note : report.notes) std::printf("  note: %s\n", note.c_str());
  return 0;
}

int cmd_theory(const GlobalOpts& g) {
  const auto cfg = load_config(g);
  const auto suite_cfg = pipeline::theory_suite_config_from_json(cfg.theory);
  const auto report = pipeline::run_theory_suite(suite_cfg, g.seed, g.jobs);
  pipeline::emit_plot_data(report, g.out_dir);

  for (const auto& check : report.checks)
    std::printf("  [%s] %-34s empirical %.6g vs bound %.6g (%s)\n", check.pass ? "pass" : "FAIL",
                check.name.c_str(), check.empirical_value, check.bound_value, check.tolerance_note.c_str());
  std::printf("  r* = 8 log(4N/delta) = %.3f\n", report.r_star);
  for (const auto& row : report.sweep)
    std::printf("  [%s] bound sweep r=%-3d violation fraction %.4f budget %.4f%s%s\n",
                row.pass ? "pass" : "FAIL", row.r, row.fraction, row.failure_budget,
                row.vacuous ? " (vacuous)" : "", row.in_regime ? " (2-delta regime)" : "");
  std::printf("theory: %s\n", report.all_pass ? "all checks passed" : "CHECKS FAILED");
  return report.all_pass ? 0 : 2;
}

int cmd_emit_plots(const std::string& in_path, const std::string& out_dir) {
  std::ifstream in(in_path);
  if (!in) throw IoError("cannot open report: " + in_path);
  json j;
  in >> j;
  const std::string kind = j.value("kind", "");
  std::vector<fs::path> files;
  if (kind == "benchmark-report") {
    files = pipeline::emit_plot_data(pipeline::benchmark_from_json(j), out_dir);
  } else if (kind == "ablation-report") {
    files = pipeline::emit_plot_data(pipeline::ablation_from_json(j), out_dir);
  } else if (kind == "curve-report") {
    files = pipeline::emit_plot_data(pipeline::curve_from_json(j), out_dir);
  } else if (kind == "eval-report") {
    fs::create_directories(out_dir);
    write_eval_residuals(j, fs::path(out_dir) / "residuals.csv");
    io::write_text_file(fs::path(out_dir) / "report.json", j.dump(2) + "\n");
    files = {fs::path(out_dir) / "residuals.csv", fs::path(out_dir) / "report.json"};
  } else if (kind == "theory-report") {
    fs::create_directories(out_dir);
    io::write_text_file(fs::path(out_dir) / "theory.json", j.dump(2) + "\n");
    files = {fs::path(out_dir) / "theory.json"};
  } else {
    throw IoError("unrecognized report kind '" + kind + "' in " + in_path);
  }
  std::printf("emit-plots: wrote %zu files to %s\n", files.size(), out_dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"prodctl: robust supervision targets and binned length predictors for "
               "prompt-conditioned output-length distributions"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "JSON config file (defaults apply when omitted)");
  app.add_option("--seed", g.seed, "base seed for dataset generation and fixed pools")->default_val(0);
  app.add_option("--out", g.out_dir, "output directory")->default_val("out");
  app.add_option("--jobs", g.jobs, "concurrent trials")->default_val(g.jobs);

  std::string in_path, params_path;

  auto* generate = app.add_subcommand("generate", "synthesize a dataset and export JSONL traces");
  auto* ingest = app.add_subcommand("ingest", "validate a JSONL trace file");
  ingest->add_option("--in", in_path, "trace file")->required();
  auto* label = app.add_subcommand("label", "build a bin grid and median/histogram labels from traces");
  label->add_option("--in", in_path, "trace file")->required();
  auto* train = app.add_subcommand("train", "train a predictor on traces per the configured mode");
  train->add_option("--in", in_path, "trace file")->required();
  auto* eval = app.add_subcommand(
      "eval", "without --params: run the benchmark protocol; with --params: score one model on traces");
  eval->add_option("--in", in_path, "trace file (defaults to a synthetic dataset)");
  eval->add_option("--params", params_path, "predictor params archive");
  auto* ablate = app.add_subcommand("ablate-single", "single-sample supervision ablation");
  ablate->add_option("--in", in_path, "trace file (defaults to a synthetic dataset)");
  auto* curve = app.add_subcommand("budget-curve", "fixed-budget repeat-sampling curve");
  curve->add_option("--in", in_path, "trace file (defaults to a synthetic dataset)");
  auto* theory = app.add_subcommand("theory", "run every theory check; exit 0 only if all pass");
  auto* emit = app.add_subcommand("emit-plots", "regenerate plot CSVs from a stored report.json");
  emit->add_option("--in", in_path, "report.json path")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (generate->parsed()) return cmd_generate(g);
    if (ingest->parsed()) return cmd_ingest(in_path);
    if (label->parsed()) return cmd_label(g, in_path);
    if (train->parsed()) return cmd_train(g, in_path);
    if (eval->parsed()) {
      if (!params_path.empty()) {
        if (in_path.empty()) throw ArgumentError("eval --params needs --in traces to score");
        return cmd_eval_model(g, in_path, params_path);
      }
      return cmd_eval_benchmark(g, in_path);
    }
    if (ablate->parsed()) return cmd_ablate(g, in_path);
    if (curve->parsed()) return cmd_budget_curve(g, in_path);
    if (theory->parsed()) return cmd_theory(g);
    if (emit->parsed()) return cmd_emit_plots(in_path, g.out_dir);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "prodctl: %s\n", e.what());
    return 1;
  }
  return 0;
}
