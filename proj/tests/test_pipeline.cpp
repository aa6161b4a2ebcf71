#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "prod/config.hpp"
#include "prod/io.hpp"
#include "prod/pipeline.hpp"

using namespace prod;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("prod-test-" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_lines(const fs::path& p, const std::vector<std::string>& lines) {
  std::ofstream out(p);
  for (const auto& line : lines) out << line << '\n';
}

// Small scenario that trains in well under a second.
config::AppConfig tiny_config() {
  config::AppConfig cfg;
  cfg.generator.d = 3;
  cfg.generator.n_prompts = 60;
  cfg.generator.link_scale = 120.0;
  cfg.experiment.scenario = "tiny";
  cfg.experiment.k_bins = 6;
  cfg.experiment.trials = 2;
  cfg.experiment.min_trainable = 4;
  cfg.train.epochs = 12;
  cfg.train.hidden = 16;
  cfg.train.batch_size = 16;
  return cfg;
}

}  // namespace

TEST_CASE("budget plan: ceil arithmetic and sample accounting") {
  CHECK(pipeline::plan_budget(7473, 7).unique_prompts == 1068);
  for (int k = 1; k <= 16; ++k) {
    const auto plan = pipeline::plan_budget(7473, k);
    CHECK(plan.unique_prompts == (7473 + k - 1) / k);
    CHECK(plan.total_samples >= 7473);
    CHECK(plan.total_samples <= 7473 + k - 1);
    CHECK(plan.total_samples == static_cast<long>(k) * plan.unique_prompts);
  }
  CHECK(pipeline::plan_budget(10, 1).unique_prompts == 10);
  CHECK_THROWS_AS(pipeline::plan_budget(0, 1), ArgumentError);
}

TEST_CASE("hashed-id split is exact, deterministic, and order-independent") {
  lengthdist::GeneratorConfig gen;
  gen.n_prompts = 2500;
  gen.d = 4;
  auto prompts = lengthdist::make_dataset(gen, 3);

  const auto split = pipeline::split_by_hashed_id(prompts, 0.8);
  CHECK(split.train.size() == 2000);
  CHECK(split.test.size() == 500);

  // membership depends only on ids, not on input order
  std::vector<std::string> train_ids;
  for (size_t i : split.train) train_ids.push_back(prompts[i].id);
  std::reverse(prompts.begin(), prompts.end());
  const auto again = pipeline::split_by_hashed_id(prompts, 0.8);
  std::vector<std::string> train_ids_again;
  for (size_t i : again.train) train_ids_again.push_back(prompts[i].id);
  std::sort(train_ids.begin(), train_ids.end());
  std::sort(train_ids_again.begin(), train_ids_again.end());
  CHECK(train_ids == train_ids_again);
}

TEST_CASE("ingest validates records all-or-nothing") {
  const fs::path dir = temp_dir("ingest");

  write_lines(dir / "good.jsonl",
              {R"({"prompt_id":"a","phi":[0.1,0.2],"lengths":[5,6,7]})",
               R"({"prompt_id":"b","phi":[0.3,0.4],"lengths":[9],"meta":{"note":"x"}})",
               R"({"prompt_id":"c","phi":[0.0,1.0],"lengths":[1,2]})"});
  const auto records = io::ingest(dir / "good.jsonl");
  REQUIRE(records.size() == 3);
  CHECK(records[1].meta.at("note") == "x");

  write_lines(dir / "empty-lengths.jsonl",
              {R"({"prompt_id":"a","lengths":[1]})", R"({"prompt_id":"b","lengths":[]})"});
  CHECK_THROWS_WITH_AS(io::ingest(dir / "empty-lengths.jsonl"), doctest::Contains("line 2"), IoError);

  write_lines(dir / "mixed-dim.jsonl",
              {R"({"prompt_id":"a","phi":[1,0,0,0],"lengths":[1]})",
               R"({"prompt_id":"b","phi":[1,0,0,0,0],"lengths":[2]})"});
  CHECK_THROWS_WITH_AS(io::ingest(dir / "mixed-dim.jsonl"), doctest::Contains("dimension"), IoError);

  write_lines(dir / "bad-length.jsonl", {R"({"prompt_id":"a","lengths":[1.5]})"});
  CHECK_THROWS_AS(io::ingest(dir / "bad-length.jsonl"), IoError);

  write_lines(dir / "dup.jsonl",
              {R"({"prompt_id":"a","lengths":[1]})", R"({"prompt_id":"a","lengths":[2]})"});
  CHECK_THROWS_WITH_AS(io::ingest(dir / "dup.jsonl"), doctest::Contains("duplicate"), IoError);

  write_lines(dir / "not-json.jsonl", {"{nope"});
  CHECK_THROWS_AS(io::ingest(dir / "not-json.jsonl"), IoError);
}

TEST_CASE("trace export round-trips through ingest") {
  auto cfg = tiny_config();
  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, 5);
  const auto records = pipeline::export_traces(ds, 8, 5);

  const fs::path dir = temp_dir("roundtrip");
  io::write_traces(records, dir / "traces.jsonl");
  const auto back = io::ingest(dir / "traces.jsonl");
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].prompt_id == records[i].prompt_id);
    CHECK(back[i].lengths == records[i].lengths);
    CHECK(*back[i].phi == *records[i].phi);
  }

  const auto ingested = pipeline::dataset_from_traces(back);
  CHECK_FALSE(ingested.synthetic);
  CHECK(ingested.prompts.size() == ds.prompts.size());

  // stored pools subsample without replacement and respect r
  const auto pool = pipeline::pool_for(ingested, 0, 8, 99);
  CHECK(pool.lengths.size() == 8);
  std::vector<int> sorted_pool = pool.lengths, sorted_stored = ingested.stored[0];
  std::sort(sorted_pool.begin(), sorted_pool.end());
  std::sort(sorted_stored.begin(), sorted_stored.end());
  CHECK(sorted_pool == sorted_stored);
  CHECK_THROWS_AS(pipeline::pool_for(ingested, 0, 9, 99), ProtocolError);

  io::TraceRecord no_phi;
  no_phi.prompt_id = "x";
  no_phi.lengths = {1};
  CHECK_THROWS_AS(pipeline::dataset_from_traces({no_phi}), ProtocolError);
}

TEST_CASE("config round-trips and rejects unknown keys") {
  auto cfg = tiny_config();
  cfg.experiment.bin_policy = labelkit::BinPolicy::Quantile;
  cfg.train.mode = predictor::TrainMode::ProdD;
  cfg.train.optimizer = predictor::Optimizer::Sgd;

  const auto j = config::to_json(cfg);
  const auto back = config::from_json(j);
  CHECK(config::to_json(back) == j);
  CHECK(config::config_hash(back) == config::config_hash(cfg));

  auto bad = j;
  bad["experiment"]["r_tain"] = 16;
  CHECK_THROWS_WITH_AS(config::from_json(bad), doctest::Contains("r_tain"), ConfigError);

  auto bad_mode = j;
  bad_mode["train"]["mode"] = "prod-x";
  CHECK_THROWS_AS(config::from_json(bad_mode), ConfigError);

  auto bad_grid = j;
  bad_grid["experiment"]["repeat_grid"] = {0};
  CHECK_THROWS_AS(config::from_json(bad_grid), ConfigError);

  const fs::path dir = temp_dir("config");
  io::write_text_file(dir / "config.json", j.dump(2));
  const auto loaded = config::load(dir / "config.json");
  CHECK(config::config_hash(loaded) == config::config_hash(cfg));
}

TEST_CASE("benchmark produces per-trial rows and deterministic emission") {
  const auto cfg = tiny_config();
  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, 5);

  const auto report = pipeline::run_benchmark(cfg, ds, 5, 2);
  CHECK(report.n_train + report.n_test == cfg.generator.n_prompts);
  CHECK(report.rows.size() == 3u * cfg.experiment.trials);
  CHECK(report.summary.count("prod-m"));
  CHECK(report.summary.count("prod-d"));
  CHECK(report.summary.count("constant-median"));
  CHECK(report.noise_radius_mean > 0.0);
  CHECK(report.train_samples_per_trial == static_cast<long>(report.n_train) * cfg.experiment.r_train);

  // identical (config, seed) -> identical report rows, regardless of jobs
  const auto again = pipeline::run_benchmark(cfg, ds, 5, 1);
  REQUIRE(again.rows.size() == report.rows.size());
  for (size_t i = 0; i < report.rows.size(); ++i) {
    CHECK(report.rows[i].method == again.rows[i].method);
    CHECK(report.rows[i].mae == again.rows[i].mae);
  }

  const fs::path out_a = temp_dir("emit-a");
  const fs::path out_b = temp_dir("emit-b");
  pipeline::emit_plot_data(report, out_a);
  pipeline::emit_plot_data(again, out_b);
  for (const char* name : {"mae.csv", "noise_radius.csv", "config.json"})
    CHECK(slurp(out_a / name) == slurp(out_b / name));
}

TEST_CASE("single-sample ablation reports both evaluation targets") {
  const auto cfg = tiny_config();
  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, 7);

  const auto report = pipeline::run_single_sample_ablation(cfg, ds, 7, 2);
  REQUIRE(report.rows.size() == 2);
  for (const auto& row : report.rows) {
    CHECK(row.mae_single_eval > 0.0);
    CHECK(row.mae_median_eval > 0.0);
  }
  CHECK(report.single_eval.mean > 0.0);

  const fs::path out = temp_dir("ablation");
  pipeline::emit_plot_data(report, out);
  CHECK(fs::exists(out / "ablation.csv"));

  auto excluded = cfg;
  excluded.train.mode = predictor::TrainMode::ProdD;
  CHECK_THROWS_WITH_AS(pipeline::run_single_sample_ablation(excluded, ds, 7),
                       doctest::Contains("distribution target"), ProtocolError);

  auto too_few = cfg;
  too_few.experiment.trials = 1;
  CHECK_THROWS_AS(pipeline::run_single_sample_ablation(too_few, ds, 7), ProtocolError);
}

TEST_CASE("budget curve nests subsets and accounts for every sample") {
  auto cfg = tiny_config();
  cfg.experiment.budget_b = 40;
  cfg.experiment.repeat_grid = {1, 2, 4};
  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, 9);

  const auto report = pipeline::run_budget_curve(cfg, ds, 9, 2);
  CHECK(report.budget_b == 40);
  for (const auto& row : report.rows) {
    const auto plan = pipeline::plan_budget(40, row.k);
    CHECK(row.unique_prompts == plan.unique_prompts);
    CHECK(row.total_samples == plan.total_samples);
    if (row.k == 1) CHECK(row.method == "prod-m");  // prod-d skipped at k=1
  }
  REQUIRE(!report.notes.empty());
  CHECK(report.notes.front().find("k=1") != std::string::npos);
  CHECK(report.summary.at("prod-m").size() == 3);
  CHECK(report.summary.at("prod-d").size() == 2);

  const fs::path out = temp_dir("curve");
  pipeline::emit_plot_data(report, out);
  CHECK(fs::exists(out / "curve.csv"));

  auto too_big = cfg;
  too_big.experiment.budget_b = 100000;
  CHECK_THROWS_AS(pipeline::run_budget_curve(too_big, ds, 9), ProtocolError);

  auto below_floor = cfg;
  below_floor.experiment.min_trainable = 30;
  CHECK_THROWS_WITH_AS(pipeline::run_budget_curve(below_floor, ds, 9), doctest::Contains("floor"),
                       ProtocolError);
}

TEST_CASE("easy scenario: trained prod-m beats the constant-median baseline") {
  config::AppConfig cfg;
  cfg.generator.d = 3;
  cfg.generator.n_prompts = 250;
  cfg.generator.tail_weight = 0.0;  // tame labels, informative features
  cfg.generator.body_sigma = 0.15;
  cfg.generator.link_gain = 0.8;
  cfg.experiment.scenario = "easy";
  cfg.experiment.k_bins = 10;
  cfg.experiment.trials = 2;
  cfg.train.epochs = 60;
  cfg.train.hidden = 32;
  cfg.train.batch_size = 32;

  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, 13);
  const auto report = pipeline::run_benchmark(cfg, ds, 13, 2);
  CHECK(report.summary.at("prod-m").mean <= report.summary.at("constant-median").mean);
  CHECK(report.summary.at("prod-d").mean <= report.summary.at("constant-median").mean);
}

TEST_CASE("without tails and with tiny noise the supervision gap vanishes") {
  config::AppConfig cfg;
  cfg.generator.d = 3;
  cfg.generator.n_prompts = 250;
  cfg.generator.tail_weight = 0.0;
  cfg.generator.body_sigma = 0.01;  // noise radius shrinks to ~a token
  cfg.generator.link_gain = 0.8;
  cfg.experiment.scenario = "noiseless";
  cfg.experiment.k_bins = 10;
  cfg.experiment.trials = 4;
  cfg.train.epochs = 60;
  cfg.train.hidden = 32;
  cfg.train.batch_size = 32;

  const auto ds = pipeline::make_synthetic_dataset(cfg.generator, 17);
  const auto bench = pipeline::run_benchmark(cfg, ds, 17, 2);
  const auto ablation = pipeline::run_single_sample_ablation(cfg, ds, 17, 2);

  const auto median_arm = bench.summary.at("prod-m");
  const auto single_arm = ablation.median_eval;
  const double pooled_std =
      std::sqrt((median_arm.std * median_arm.std + single_arm.std * single_arm.std) / 2.0);
  CHECK(std::abs(single_arm.mean - median_arm.mean) < pooled_std);
}

TEST_CASE("theory suite passes and flags the vacuous regime") {
  pipeline::TheorySuiteConfig cfg;
  cfg.bound_trials = 200;
  cfg.mc_trials = 20000;
  const auto report = pipeline::run_theory_suite(cfg, 11, 2);

  CHECK(report.r_star == doctest::Approx(55.262042231857095).epsilon(1e-12));
  CHECK(report.all_pass);
  REQUIRE(report.sweep.size() == 5);
  for (const auto& row : report.sweep) {
    if (row.r <= 32) CHECK(row.vacuous);  // 4*50*e^{-r/8} >= 1 up to r = 32
    if (row.r == 64) {
      CHECK_FALSE(row.vacuous);
      CHECK(row.in_regime);
      CHECK(row.fraction <= 2.0 * cfg.delta);
    }
  }

  const fs::path out = temp_dir("theory");
  pipeline::emit_plot_data(report, out);
  CHECK(fs::exists(out / "theory.json"));
}

TEST_CASE("label files carry the documented record fields") {
  labelkit::BinGrid grid;
  grid.edges = {0.0, 10.0, 20.0};
  grid.open_last = true;

  lengthdist::SamplePool pool;
  pool.prompt_id = "p1";
  pool.lengths = {4, 12, 15};
  const std::vector<labelkit::MedianLabel> medians{labelkit::make_median_label(pool, grid)};
  const std::vector<labelkit::DistLabel> hists{labelkit::project_histogram(pool, grid)};

  const fs::path dir = temp_dir("labels");
  io::write_labels(medians, hists, grid, dir / "labels.jsonl");

  std::ifstream in(dir / "labels.jsonl");
  std::string line;
  REQUIRE(std::getline(in, line));
  const auto j = nlohmann::json::parse(line);
  CHECK(j.at("prompt_id") == "p1");
  CHECK(j.at("median") == 12.0);
  CHECK(j.at("hist").size() == 2);
  CHECK(j.at("grid_id") == io::grid_id(grid));

  const auto grid_back = io::grid_from_json(io::to_json(grid));
  CHECK(grid_back.edges == grid.edges);
  CHECK(grid_back.open_last == grid.open_last);
}

TEST_CASE("predictor params archive round-trips") {
  const auto params = predictor::PredictorParams::init(3, 4, 77, 8);
  labelkit::BinGrid grid;
  grid.edges = {0.0, 10.0, 20.0, 30.0, 40.0};
  grid.open_last = true;

  const fs::path dir = temp_dir("params");
  io::write_params(params, grid, "prod-m", "deadbeef", dir / "params.json");
  const auto loaded = io::load_params(dir / "params.json");
  CHECK(loaded.params.w1 == params.w1);
  CHECK(loaded.params.b2 == params.b2);
  CHECK(loaded.grid.edges == grid.edges);
  CHECK(loaded.train_mode == "prod-m");
  CHECK(loaded.config_hash == "deadbeef");

  const auto q = predictor::forward(loaded.params, {0.1, 0.2, 0.3});
  const auto q0 = predictor::forward(params, {0.1, 0.2, 0.3});
  CHECK(q.probs == q0.probs);
}
