#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "prod/config.hpp"
#include "prod/errors.hpp"
#include "prod/io.hpp"
#include "prod/labelkit.hpp"
#include "prod/lengthdist.hpp"
#include "prod/metrics.hpp"
#include "prod/predictor.hpp"
#include "prod/rng.hpp"
#include "prod/surrogate.hpp"
#include "prod/theorycheck.hpp"

namespace prod::pipeline {

using config::AppConfig;
using lengthdist::PromptInstance;
using lengthdist::SamplePool;
using linalg::Vec;

// ---------------------------------------------------------------------------
// Datasets: synthetic prompts or ingested traces behind one pool interface
// ---------------------------------------------------------------------------

struct Dataset {
  bool synthetic = true;
  std::vector<PromptInstance> prompts;       // phi present for every prompt
  std::vector<std::vector<int>> stored;      // ingested per-prompt lengths
};

inline Dataset make_synthetic_dataset(const lengthdist::GeneratorConfig& gen, uint64_t base_seed) {
  Dataset ds;
  ds.synthetic = true;
  ds.prompts = lengthdist::make_dataset(gen, base_seed);
  return ds;
}

inline Dataset dataset_from_traces(const std::vector<io::TraceRecord>& traces) {
  Dataset ds;
  ds.synthetic = false;
  ds.prompts.reserve(traces.size());
  ds.stored.reserve(traces.size());
  for (const auto& rec : traces) {
    if (!rec.phi)
      throw ProtocolError("trace '" + rec.prompt_id + "' carries no phi vector; training needs features");
    PromptInstance p;
    p.id = rec.prompt_id;
    p.phi = *rec.phi;
    ds.prompts.push_back(std::move(p));
    ds.stored.push_back(rec.lengths);
  }
  return ds;
}

struct Split {
  std::vector<size_t> train, test;
};

/// Deterministic split by hashed prompt id: prompts ranked by hash, the first
/// round(fraction * n) are train. Independent of input order.
inline Split split_by_hashed_id(const std::vector<PromptInstance>& prompts, double train_fraction) {
  if (prompts.size() < 2) throw ProtocolError("need at least 2 prompts to split");
  std::vector<std::pair<uint64_t, size_t>> ranked(prompts.size());
  for (size_t i = 0; i < prompts.size(); ++i) ranked[i] = {rng::hash_bytes(prompts[i].id), i};
  std::sort(ranked.begin(), ranked.end());

  const size_t n_train = std::clamp<size_t>(
      static_cast<size_t>(std::llround(train_fraction * static_cast<double>(prompts.size()))), 1,
      prompts.size() - 1);
  Split split;
  for (size_t i = 0; i < ranked.size(); ++i)
    (i < n_train ? split.train : split.test).push_back(ranked[i].second);
  return split;
}

/// r lengths for one prompt: synthetic prompts sample their distribution;
/// ingested prompts subsample their stored lengths without replacement.
inline SamplePool pool_for(const Dataset& ds, size_t idx, int r, uint64_t seed) {
  if (ds.synthetic) return lengthdist::sample_lengths(ds.prompts[idx], r, seed);

  const auto& stored = ds.stored[idx];
  if (static_cast<int>(stored.size()) < r)
    throw ProtocolError("prompt '" + ds.prompts[idx].id + "' has " + std::to_string(stored.size()) +
                        " stored lengths; protocol needs " + std::to_string(r));
  SamplePool pool;
  pool.prompt_id = ds.prompts[idx].id;
  pool.seed = seed;
  std::vector<size_t> order(stored.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  rng::Stream s = rng::Stream::root(seed).fork(rng::hash_bytes(pool.prompt_id));
  for (int j = 0; j < r; ++j) {
    const size_t pick = j + s.below(order.size() - j);
    std::swap(order[j], order[pick]);
    pool.lengths.push_back(stored[order[j]]);
  }
  return pool;
}

// ---------------------------------------------------------------------------
// Deterministic trial parallelism
// ---------------------------------------------------------------------------

inline void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
  jobs = std::max(1, std::min(jobs, n));
  if (jobs == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> workers;
  std::vector<std::exception_ptr> errors(jobs);
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&, w] {
      try {
        for (int i = w; i < n; i += jobs) fn(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : workers) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

// ---------------------------------------------------------------------------
// Shared statistics
// ---------------------------------------------------------------------------

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd ms;
  if (xs.empty()) return ms;
  for (double x : xs) ms.mean += x;
  ms.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - ms.mean) * (x - ms.mean);
    ms.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return ms;
}

inline uint64_t trial_seed(const config::ExperimentConfig& e, uint64_t base_seed, int trial) {
  const uint64_t listed = e.seeds[trial % e.seeds.size()];
  return rng::combine(rng::combine(base_seed, listed), static_cast<uint64_t>(trial));
}

namespace detail {

struct TestSide {
  std::vector<size_t> idx;
  metrics::Scored median_targets;          // per test prompt
  std::vector<std::pair<std::string, double>> noise_radius;  // per test prompt
  double noise_radius_mean = 0.0;
};

inline TestSide build_test_side(const Dataset& ds, const Split& split, int r_test, uint64_t base_seed) {
  TestSide side;
  side.idx = split.test;
  const uint64_t pool_seed = rng::combine(base_seed, rng::hash_bytes("test-pools"));
  double radius_sum = 0.0;
  for (size_t idx : split.test) {
    const SamplePool pool = pool_for(ds, idx, r_test, pool_seed);
    side.median_targets.emplace_back(ds.prompts[idx].id, labelkit::sample_median(pool.lengths));
    const double radius = metrics::noise_radius(pool);
    side.noise_radius.emplace_back(ds.prompts[idx].id, radius);
    radius_sum += radius;
  }
  side.noise_radius_mean = radius_sum / static_cast<double>(split.test.size());
  return side;
}

inline std::vector<int> pooled_lengths(const std::vector<SamplePool>& pools) {
  std::vector<int> all;
  for (const auto& pool : pools) all.insert(all.end(), pool.lengths.begin(), pool.lengths.end());
  return all;
}

inline metrics::Scored predict_all(const predictor::PredictorParams& params, const labelkit::BinGrid& grid,
                                   const Dataset& ds, const std::vector<size_t>& idx) {
  metrics::Scored out;
  out.reserve(idx.size());
  for (size_t i : idx) {
    const auto q = predictor::forward(params, ds.prompts[i].phi);
    out.emplace_back(ds.prompts[i].id, predictor::decode_median(q, grid));
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Benchmark: ProD-M and ProD-D against the repeated-sampling median target
// ---------------------------------------------------------------------------

struct TrialRow {
  std::string method;
  int trial = 0;
  double mae = 0.0;
};

struct BenchmarkReport {
  AppConfig cfg;
  std::string config_hash;
  uint64_t base_seed = 0;
  int n_train = 0;
  int n_test = 0;
  long train_samples_per_trial = 0;  // sum over prompts of draws
  double noise_radius_mean = 0.0;
  std::vector<std::pair<std::string, double>> test_noise_radius;
  std::vector<TrialRow> rows;
  std::map<std::string, MeanStd> summary;  // per method over trials
};

inline BenchmarkReport run_benchmark(const AppConfig& cfg, const Dataset& ds, uint64_t base_seed,
                                     int jobs = 1) {
  config::validate(cfg.experiment);
  predictor::validate(cfg.train);
  const auto& e = cfg.experiment;

  const Split split = split_by_hashed_id(ds.prompts, e.train_fraction);
  const auto test_side = detail::build_test_side(ds, split, e.r_test, base_seed);

  BenchmarkReport report;
  report.cfg = cfg;
  report.config_hash = config::config_hash(cfg);
  report.base_seed = base_seed;
  report.n_train = static_cast<int>(split.train.size());
  report.n_test = static_cast<int>(split.test.size());
  report.train_samples_per_trial = static_cast<long>(split.train.size()) * e.r_train;
  report.noise_radius_mean = test_side.noise_radius_mean;
  report.test_noise_radius = test_side.noise_radius;
  std::sort(report.test_noise_radius.begin(), report.test_noise_radius.end());

  struct TrialOut {
    double prod_m = 0.0, prod_d = 0.0, baseline = 0.0;
  };
  std::vector<TrialOut> outs(e.trials);

  parallel_for(e.trials, jobs, [&](int t) {
    const uint64_t ts = trial_seed(e, base_seed, t);
    const uint64_t pool_seed = rng::combine(ts, rng::hash_bytes("train-pools"));

    std::vector<SamplePool> pools;
    pools.reserve(split.train.size());
    for (size_t idx : split.train) pools.push_back(pool_for(ds, idx, e.r_train, pool_seed));

    const labelkit::BinGrid grid = labelkit::make_bin_grid(detail::pooled_lengths(pools), e.k_bins, e.bin_policy);

    std::vector<predictor::TrainExample> median_examples, dist_examples;
    std::vector<double> train_medians;
    median_examples.reserve(pools.size());
    dist_examples.reserve(pools.size());
    for (size_t i = 0; i < pools.size(); ++i) {
      const auto& phi = ds.prompts[split.train[i]].phi;
      const auto med = labelkit::make_median_label(pools[i], grid);
      const auto hist = labelkit::project_histogram(pools[i], grid);
      median_examples.push_back({phi, med.onehot});
      dist_examples.push_back({phi, hist.hist});
      train_medians.push_back(med.median_length);
    }

    predictor::TrainConfig tm = cfg.train;
    tm.mode = predictor::TrainMode::ProdM;
    tm.seed = rng::combine(ts, rng::hash_bytes("prod-m"));
    const auto model_m = predictor::train(median_examples, tm);

    predictor::TrainConfig td = cfg.train;
    td.mode = predictor::TrainMode::ProdD;
    td.seed = rng::combine(ts, rng::hash_bytes("prod-d"));
    const auto model_d = predictor::train(dist_examples, td);

    TrialOut out;
    out.prod_m = metrics::evaluate(detail::predict_all(model_m.params, grid, ds, split.test),
                                   test_side.median_targets)
                     .mae;
    out.prod_d = metrics::evaluate(detail::predict_all(model_d.params, grid, ds, split.test),
                                   test_side.median_targets)
                     .mae;

    std::vector<double> test_targets;
    for (const auto& [id, v] : test_side.median_targets) test_targets.push_back(v);
    out.baseline = metrics::constant_median_baseline(train_medians, test_targets);
    outs[t] = out;
  });

  std::map<std::string, std::vector<double>> by_method;
  for (int t = 0; t < e.trials; ++t) {
    report.rows.push_back({"prod-m", t, outs[t].prod_m});
    report.rows.push_back({"prod-d", t, outs[t].prod_d});
    report.rows.push_back({"constant-median", t, outs[t].baseline});
    by_method["prod-m"].push_back(outs[t].prod_m);
    by_method["prod-d"].push_back(outs[t].prod_d);
    by_method["constant-median"].push_back(outs[t].baseline);
  }
  for (const auto& [method, maes] : by_method) report.summary[method] = mean_std(maes);
  return report;
}

// ---------------------------------------------------------------------------
// Single-sample supervision ablation
// ---------------------------------------------------------------------------

struct AblationRow {
  int trial = 0;
  double mae_single_eval = 0.0;  // against one fresh test draw per prompt
  double mae_median_eval = 0.0;  // against the repeated-sampling median target
};

struct AblationReport {
  AppConfig cfg;
  std::string config_hash;
  uint64_t base_seed = 0;
  int n_train = 0;
  int n_test = 0;
  std::vector<AblationRow> rows;
  MeanStd single_eval;
  MeanStd median_eval;
};

inline AblationReport run_single_sample_ablation(const AppConfig& cfg, const Dataset& ds, uint64_t base_seed,
                                                 int jobs = 1) {
  config::validate(cfg.experiment);
  const auto& e = cfg.experiment;
  if (cfg.train.mode == predictor::TrainMode::ProdD)
    throw ProtocolError(
        "prod-d is excluded from the single-sample ablation: one length per prompt "
        "cannot induce a non-degenerate distribution target; train prod-m instead");
  if (e.trials < 2) throw ProtocolError("single-sample ablation needs trials >= 2");

  const Split split = split_by_hashed_id(ds.prompts, e.train_fraction);
  const auto test_side = detail::build_test_side(ds, split, e.r_test, base_seed);

  AblationReport report;
  report.cfg = cfg;
  report.config_hash = config::config_hash(cfg);
  report.base_seed = base_seed;
  report.n_train = static_cast<int>(split.train.size());
  report.n_test = static_cast<int>(split.test.size());
  report.rows.resize(e.trials);

  parallel_for(e.trials, jobs, [&](int t) {
    const uint64_t ts = trial_seed(e, base_seed, t);

    std::vector<SamplePool> pools;
    pools.reserve(split.train.size());
    const uint64_t pool_seed = rng::combine(ts, rng::hash_bytes("single-train"));
    for (size_t idx : split.train) pools.push_back(pool_for(ds, idx, 1, pool_seed));

    const labelkit::BinGrid grid = labelkit::make_bin_grid(detail::pooled_lengths(pools), e.k_bins, e.bin_policy);

    std::vector<predictor::TrainExample> examples;
    examples.reserve(pools.size());
    for (size_t i = 0; i < pools.size(); ++i) {
      Vec onehot(grid.bins(), 0.0);
      onehot[grid.bin_index(pools[i].lengths.front())] = 1.0;
      examples.push_back({ds.prompts[split.train[i]].phi, std::move(onehot)});
    }

    predictor::TrainConfig tc = cfg.train;
    tc.mode = predictor::TrainMode::SingleSample;
    tc.seed = rng::combine(ts, rng::hash_bytes("single-sample"));
    const auto model = predictor::train(examples, tc);

    const auto predictions = detail::predict_all(model.params, grid, ds, split.test);

    metrics::Scored single_targets;
    const uint64_t test_seed = rng::combine(ts, rng::hash_bytes("single-test"));
    for (size_t idx : split.test) {
      const SamplePool pool = pool_for(ds, idx, 1, test_seed);
      single_targets.emplace_back(ds.prompts[idx].id, static_cast<double>(pool.lengths.front()));
    }

    AblationRow row;
    row.trial = t;
    row.mae_single_eval = metrics::evaluate(predictions, single_targets).mae;
    row.mae_median_eval = metrics::evaluate(predictions, test_side.median_targets).mae;
    report.rows[t] = row;
  });

  std::vector<double> single, median;
  for (const auto& row : report.rows) {
    single.push_back(row.mae_single_eval);
    median.push_back(row.mae_median_eval);
  }
  report.single_eval = mean_std(single);
  report.median_eval = mean_std(median);
  return report;
}

// ---------------------------------------------------------------------------
// Budget-fairness repeat curve
// ---------------------------------------------------------------------------

struct BudgetPlan {
  int unique_prompts = 0;
  long total_samples = 0;
};

/// Retains ceil(B/k) unique prompts at repeat number k.
inline BudgetPlan plan_budget(long budget_b, int k) {
  if (budget_b < 1 || k < 1) throw ArgumentError("budget and k must be >= 1");
  const long unique = (budget_b + k - 1) / k;
  return {static_cast<int>(unique), static_cast<long>(k) * unique};
}

struct CurveRow {
  std::string method;
  int k = 0;
  int trial = 0;
  int unique_prompts = 0;
  long total_samples = 0;
  double mae = 0.0;
};

struct CurveReport {
  AppConfig cfg;
  std::string config_hash;
  uint64_t base_seed = 0;
  long budget_b = 0;
  int n_test = 0;
  std::vector<CurveRow> rows;
  std::map<std::string, std::map<int, MeanStd>> summary;  // method -> k -> stats
  std::vector<std::string> notes;
};

inline CurveReport run_budget_curve(const AppConfig& cfg, const Dataset& ds, uint64_t base_seed,
                                    int jobs = 1) {
  config::validate(cfg.experiment);
  const auto& e = cfg.experiment;

  const Split split = split_by_hashed_id(ds.prompts, e.train_fraction);
  const long budget = e.budget_b > 0 ? e.budget_b : static_cast<long>(split.train.size());
  if (budget > static_cast<long>(split.train.size()))
    throw ProtocolError("budget_b " + std::to_string(budget) + " exceeds the " +
                        std::to_string(split.train.size()) + " unique training prompts available");
  for (int k : e.repeat_grid) {
    const BudgetPlan plan = plan_budget(budget, k);
    if (plan.unique_prompts < e.min_trainable)
      throw ProtocolError("k=" + std::to_string(k) + " retains " + std::to_string(plan.unique_prompts) +
                          " prompts, below the trainable floor " + std::to_string(e.min_trainable));
  }

  const auto test_side = detail::build_test_side(ds, split, e.r_test, base_seed);

  // One fixed shuffle; prefixes make larger-k subsets nest inside smaller-k.
  std::vector<size_t> shuffled = split.train;
  rng::Stream bs = rng::Stream::root(base_seed).fork("budget-shuffle");
  for (size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[bs.below(i)]);

  CurveReport report;
  report.cfg = cfg;
  report.config_hash = config::config_hash(cfg);
  report.base_seed = base_seed;
  report.budget_b = budget;
  report.n_test = static_cast<int>(split.test.size());

  struct Job {
    int k = 0;
    int trial = 0;
  };
  std::vector<Job> jobs_list;
  for (int k : e.repeat_grid)
    for (int t = 0; t < e.trials; ++t) jobs_list.push_back({k, t});

  struct JobOut {
    double prod_m = 0.0;
    double prod_d = -1.0;  // negative marks "not trained" (k = 1)
  };
  std::vector<JobOut> outs(jobs_list.size());

  parallel_for(static_cast<int>(jobs_list.size()), jobs, [&](int j) {
    const auto [k, t] = jobs_list[j];
    const BudgetPlan plan = plan_budget(budget, k);
    const uint64_t ts = rng::combine(trial_seed(e, base_seed, t), static_cast<uint64_t>(k));
    const uint64_t pool_seed = rng::combine(ts, rng::hash_bytes("curve-pools"));

    std::vector<SamplePool> pools;
    pools.reserve(plan.unique_prompts);
    for (int i = 0; i < plan.unique_prompts; ++i) pools.push_back(pool_for(ds, shuffled[i], k, pool_seed));

    const labelkit::BinGrid grid = labelkit::make_bin_grid(detail::pooled_lengths(pools), e.k_bins, e.bin_policy);

    std::vector<predictor::TrainExample> median_examples, dist_examples;
    for (int i = 0; i < plan.unique_prompts; ++i) {
      const auto& phi = ds.prompts[shuffled[i]].phi;
      median_examples.push_back({phi, labelkit::make_median_label(pools[i], grid).onehot});
      if (k >= 2) dist_examples.push_back({phi, labelkit::project_histogram(pools[i], grid).hist});
    }

    predictor::TrainConfig tm = cfg.train;
    tm.mode = predictor::TrainMode::ProdM;
    tm.seed = rng::combine(ts, rng::hash_bytes("prod-m"));
    const auto model_m = predictor::train(median_examples, tm);
    outs[j].prod_m = metrics::evaluate(detail::predict_all(model_m.params, grid, ds, split.test),
                                       test_side.median_targets)
                         .mae;

    if (k >= 2) {
      predictor::TrainConfig td = cfg.train;
      td.mode = predictor::TrainMode::ProdD;
      td.seed = rng::combine(ts, rng::hash_bytes("prod-d"));
      const auto model_d = predictor::train(dist_examples, td);
      outs[j].prod_d = metrics::evaluate(detail::predict_all(model_d.params, grid, ds, split.test),
                                         test_side.median_targets)
                           .mae;
    }
  });

  std::map<std::string, std::map<int, std::vector<double>>> grouped;
  for (size_t j = 0; j < jobs_list.size(); ++j) {
    const auto [k, t] = jobs_list[j];
    const BudgetPlan plan = plan_budget(budget, k);
    report.rows.push_back({"prod-m", k, t, plan.unique_prompts, plan.total_samples, outs[j].prod_m});
    grouped["prod-m"][k].push_back(outs[j].prod_m);
    if (outs[j].prod_d >= 0.0) {
      report.rows.push_back({"prod-d", k, t, plan.unique_prompts, plan.total_samples, outs[j].prod_d});
      grouped["prod-d"][k].push_back(outs[j].prod_d);
    }
  }
  for (const auto& [method, by_k] : grouped)
    for (const auto& [k, maes] : by_k) report.summary[method][k] = mean_std(maes);

  for (int k : e.repeat_grid)
    if (k == 1)
      report.notes.push_back(
          "prod-d skipped at k=1: a single length per prompt cannot form a distribution target");
  return report;
}

// ---------------------------------------------------------------------------
// Theory suite: every lemma check plus the bound-validity sweep over r
// ---------------------------------------------------------------------------

struct TheorySuiteConfig {
  int n = 50;           // prompts per trial in the bound sweep
  int d = 5;
  double delta = 0.2;
  double lambda = 1.0;
  double S = 1.0;
  int probes = 64;
  long bound_trials = 1000;
  std::vector<int> r_sweep{4, 8, 16, 32, 64};
  long mc_trials = 100000;  // per lemma Monte Carlo check
  long concentration_trials = 1000;
};

inline TheorySuiteConfig theory_suite_config_from_json(const nlohmann::json& j) {
  TheorySuiteConfig cfg;
  if (j.empty()) return cfg;
  config::detail::check_keys(j,
                             {"n", "d", "delta", "lambda", "s", "probes", "bound_trials", "r_sweep",
                              "mc_trials", "concentration_trials"},
                             "theory");
  cfg.n = j.value("n", cfg.n);
  cfg.d = j.value("d", cfg.d);
  cfg.delta = j.value("delta", cfg.delta);
  cfg.lambda = j.value("lambda", cfg.lambda);
  cfg.S = j.value("s", cfg.S);
  cfg.probes = j.value("probes", cfg.probes);
  cfg.bound_trials = j.value("bound_trials", cfg.bound_trials);
  if (j.contains("r_sweep")) cfg.r_sweep = j["r_sweep"].get<std::vector<int>>();
  cfg.mc_trials = j.value("mc_trials", cfg.mc_trials);
  cfg.concentration_trials = j.value("concentration_trials", cfg.concentration_trials);
  return cfg;
}

struct BoundSweepRow {
  int r = 0;
  long trials = 0;
  long violating_trials = 0;
  double fraction = 0.0;
  double failure_budget = 0.0;  // delta + 4N e^{-r/8}
  bool vacuous = false;         // budget >= 1
  bool in_regime = false;       // r >= 8 log(4N/delta)
  bool pass = false;
};

struct TheoryReport {
  TheorySuiteConfig cfg;
  uint64_t seed = 0;
  double r_star = 0.0;  // 8 log(4N/delta)
  std::vector<theorycheck::CheckResult> checks;
  std::vector<BoundSweepRow> sweep;
  bool all_pass = false;
};

inline TheoryReport run_theory_suite(const TheorySuiteConfig& cfg, uint64_t seed, int jobs = 1) {
  if (cfg.n < 1 || cfg.d < 1) throw ArgumentError("n and d must be >= 1");
  if (cfg.delta <= 0.0 || cfg.delta >= 1.0) throw ArgumentError("delta must lie in (0,1)");

  TheoryReport report;
  report.cfg = cfg;
  report.seed = seed;
  report.r_star = surrogate::repeat_threshold(cfg.n, cfg.delta);

  const auto uniform = lengthdist::uniform_noise();
  const auto student = lengthdist::student_t_noise();
  const auto pareto = lengthdist::two_sided_pareto_noise();

  for (int r : {1, 5, 16}) {
    report.checks.push_back(theorycheck::check_median_moment(uniform, r, cfg.mc_trials, rng::combine(seed, 100 + r)));
    report.checks.push_back(theorycheck::check_median_moment(student, r, cfg.mc_trials, rng::combine(seed, 200 + r)));
    report.checks.push_back(theorycheck::check_median_moment(pareto, r, cfg.mc_trials, rng::combine(seed, 300 + r)));
  }
  for (int r : {8, 16, 32})
    report.checks.push_back(theorycheck::check_median_tail(uniform, 0.5, r, cfg.mc_trials, rng::combine(seed, 400 + r)));

  {
    rng::Stream s = rng::Stream::root(seed).fork("potential-streams");
    for (int rep = 0; rep < 20; ++rep) {
      const int d = 1 + static_cast<int>(s.below(8));
      const int n = 10 + static_cast<int>(s.below(491));
      std::vector<Vec> phis(n);
      for (auto& phi : phis) phi = surrogate::sample_feature(d, s);
      const double lambda = 0.5 + 3.5 * s.next_double();
      report.checks.push_back(theorycheck::check_potential(phis, lambda));
    }
  }

  theorycheck::ConcentrationConfig cc;
  cc.n = 20;
  cc.r = 64;
  cc.delta = cfg.delta;
  cc.trials = cfg.concentration_trials;
  cc.noise = uniform;
  report.checks.push_back(theorycheck::check_concentration(theorycheck::ConcentrationKind::Linear, cc,
                                                           rng::combine(seed, 500)));
  report.checks.push_back(theorycheck::check_concentration(theorycheck::ConcentrationKind::Quadratic, cc,
                                                           rng::combine(seed, 501)));

  // Bound-validity sweep: fraction of trials with any probe outside the width.
  for (int r : cfg.r_sweep) {
    surrogate::TrialConfig tc;
    tc.d = cfg.d;
    tc.n = cfg.n;
    tc.r = r;
    tc.lambda = cfg.lambda;
    tc.delta = cfg.delta;
    tc.S = cfg.S;
    tc.probes = cfg.probes;
    tc.noise = uniform;

    std::vector<char> violated(cfg.bound_trials, 0);
    parallel_for(static_cast<int>(cfg.bound_trials), jobs, [&](int t) {
      const auto rec = surrogate::surrogate_trial(tc, rng::combine(rng::combine(seed, 600 + r), t));
      violated[t] = rec.any_violation ? 1 : 0;
    });

    BoundSweepRow row;
    row.r = r;
    row.trials = cfg.bound_trials;
    for (char v : violated) row.violating_trials += v;
    row.fraction = static_cast<double>(row.violating_trials) / static_cast<double>(cfg.bound_trials);
    row.failure_budget = cfg.delta + surrogate::repeat_failure_term(cfg.n, r);
    row.vacuous = row.failure_budget >= 1.0;
    row.in_regime = static_cast<double>(r) >= report.r_star;
    if (row.vacuous) {
      row.pass = true;  // flagged, not failed
    } else {
      const double cap = row.in_regime ? 2.0 * cfg.delta : row.failure_budget;
      const double se = std::sqrt(cap * (1.0 - cap) / static_cast<double>(cfg.bound_trials));
      row.pass = row.fraction <= cap + 3.0 * se;
    }
    report.sweep.push_back(row);
  }

  report.all_pass = true;
  for (const auto& c : report.checks) report.all_pass &= c.pass;
  for (const auto& row : report.sweep) report.all_pass &= row.pass;
  return report;
}

// ---------------------------------------------------------------------------
// Plot-data emission: tidy CSV files plus a config snapshot
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::json run_header(const AppConfig& cfg, const std::string& hash, uint64_t base_seed) {
  nlohmann::json j;
  j["config"] = config::to_json(cfg);
  j["config_hash"] = hash;
  j["base_seed"] = base_seed;
  j["seeds"] = cfg.experiment.seeds;
  return j;
}

inline std::string provenance(const AppConfig& cfg, const std::string& hash, uint64_t base_seed) {
  std::string s = "config_hash=" + hash + " base_seed=" + std::to_string(base_seed) + " seeds=";
  for (size_t i = 0; i < cfg.experiment.seeds.size(); ++i)
    s += (i ? "," : "") + std::to_string(cfg.experiment.seeds[i]);
  return s;
}

}  // namespace detail

inline std::vector<std::filesystem::path> emit_plot_data(const BenchmarkReport& report,
                                                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  const std::string prov = detail::provenance(report.cfg, report.config_hash, report.base_seed);
  io::Csv mae({"method", "scenario", "trial", "mae"}, prov);
  std::vector<TrialRow> rows = report.rows;
  std::sort(rows.begin(), rows.end(), [](const TrialRow& a, const TrialRow& b) {
    return std::tie(a.method, a.trial) < std::tie(b.method, b.trial);
  });
  for (const auto& row : rows)
    mae.append_row({row.method, report.cfg.experiment.scenario, std::to_string(row.trial),
                    io::format_double(row.mae)});
  mae.write(out_dir / "mae.csv");

  io::Csv radius({"scenario", "prompt_id", "noise_radius"}, prov);
  for (const auto& [id, r] : report.test_noise_radius)
    radius.append_row({report.cfg.experiment.scenario, id, io::format_double(r)});
  radius.write(out_dir / "noise_radius.csv");

  nlohmann::json j = detail::run_header(report.cfg, report.config_hash, report.base_seed);
  j["n_train"] = report.n_train;
  j["n_test"] = report.n_test;
  j["train_samples_per_trial"] = report.train_samples_per_trial;
  j["noise_radius_mean"] = report.noise_radius_mean;
  for (const auto& [method, ms] : report.summary) {
    j["summary"][method]["mean_mae"] = ms.mean;
    j["summary"][method]["std_mae"] = ms.std;
  }
  io::write_text_file(out_dir / "config.json", j.dump(2) + "\n");
  return {out_dir / "mae.csv", out_dir / "noise_radius.csv", out_dir / "config.json"};
}

inline std::vector<std::filesystem::path> emit_plot_data(const AblationReport& report,
                                                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  io::Csv csv({"scenario", "trial", "eval_target", "mae"},
              detail::provenance(report.cfg, report.config_hash, report.base_seed));
  for (const auto& row : report.rows)
    csv.append_row({report.cfg.experiment.scenario, std::to_string(row.trial), "single-label",
                    io::format_double(row.mae_single_eval)});
  for (const auto& row : report.rows)
    csv.append_row({report.cfg.experiment.scenario, std::to_string(row.trial), "median-target",
                    io::format_double(row.mae_median_eval)});
  csv.write(out_dir / "ablation.csv");

  nlohmann::json j = detail::run_header(report.cfg, report.config_hash, report.base_seed);
  j["n_train"] = report.n_train;
  j["n_test"] = report.n_test;
  j["summary"]["single-label"]["mean_mae"] = report.single_eval.mean;
  j["summary"]["single-label"]["std_mae"] = report.single_eval.std;
  j["summary"]["median-target"]["mean_mae"] = report.median_eval.mean;
  j["summary"]["median-target"]["std_mae"] = report.median_eval.std;
  io::write_text_file(out_dir / "config.json", j.dump(2) + "\n");
  return {out_dir / "ablation.csv", out_dir / "config.json"};
}

inline std::vector<std::filesystem::path> emit_plot_data(const CurveReport& report,
                                                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);

  io::Csv csv({"method", "scenario", "k", "trial", "unique_prompts", "total_samples", "mae"},
              detail::provenance(report.cfg, report.config_hash, report.base_seed));
  std::vector<CurveRow> rows = report.rows;
  std::sort(rows.begin(), rows.end(), [](const CurveRow& a, const CurveRow& b) {
    return std::tie(a.method, a.k, a.trial) < std::tie(b.method, b.k, b.trial);
  });
  for (const auto& row : rows)
    csv.append_row({row.method, report.cfg.experiment.scenario, std::to_string(row.k),
                    std::to_string(row.trial), std::to_string(row.unique_prompts),
                    std::to_string(row.total_samples), io::format_double(row.mae)});
  csv.write(out_dir / "curve.csv");

  nlohmann::json j = detail::run_header(report.cfg, report.config_hash, report.base_seed);
  j["budget_b"] = report.budget_b;
  j["n_test"] = report.n_test;
  j["notes"] = report.notes;
  for (const auto& [method, by_k] : report.summary)
    for (const auto& [k, ms] : by_k) {
      j["summary"][method][std::to_string(k)]["mean_mae"] = ms.mean;
      j["summary"][method][std::to_string(k)]["std_mae"] = ms.std;
    }
  io::write_text_file(out_dir / "config.json", j.dump(2) + "\n");
  return {out_dir / "curve.csv", out_dir / "config.json"};
}

inline nlohmann::json to_json(const theorycheck::CheckResult& c) {
  nlohmann::json j;
  j["name"] = c.name;
  j["trials"] = c.trials;
  j["violations"] = c.violations;
  j["bound_value"] = c.bound_value;
  j["empirical_value"] = c.empirical_value;
  j["pass"] = c.pass;
  j["tolerance_note"] = c.tolerance_note;
  return j;
}

inline std::vector<std::filesystem::path> emit_plot_data(const TheoryReport& report,
                                                         const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  nlohmann::json j;
  j["seed"] = report.seed;
  j["r_star"] = report.r_star;
  j["all_pass"] = report.all_pass;
  j["config"]["n"] = report.cfg.n;
  j["config"]["d"] = report.cfg.d;
  j["config"]["delta"] = report.cfg.delta;
  j["config"]["lambda"] = report.cfg.lambda;
  j["config"]["S"] = report.cfg.S;
  j["config"]["probes"] = report.cfg.probes;
  j["config"]["bound_trials"] = report.cfg.bound_trials;
  j["config"]["r_sweep"] = report.cfg.r_sweep;
  j["config"]["mc_trials"] = report.cfg.mc_trials;
  for (const auto& c : report.checks) j["checks"].push_back(to_json(c));
  for (const auto& row : report.sweep) {
    nlohmann::json r;
    r["r"] = row.r;
    r["trials"] = row.trials;
    r["violating_trials"] = row.violating_trials;
    r["fraction"] = row.fraction;
    r["failure_budget"] = row.failure_budget;
    r["vacuous"] = row.vacuous;
    r["in_regime"] = row.in_regime;
    r["pass"] = row.pass;
    j["bound_sweep"].push_back(r);
  }
  io::write_text_file(out_dir / "theory.json", j.dump(2) + "\n");
  return {out_dir / "theory.json"};
}

// ---------------------------------------------------------------------------
// Report serialization: report.json is the canonical re-emittable artifact
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const BenchmarkReport& r) {
  nlohmann::json j = detail::run_header(r.cfg, r.config_hash, r.base_seed);
  j["kind"] = "benchmark-report";
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  j["train_samples_per_trial"] = r.train_samples_per_trial;
  j["noise_radius_mean"] = r.noise_radius_mean;
  for (const auto& [id, v] : r.test_noise_radius)
    j["test_noise_radius"].push_back({{"prompt_id", id}, {"noise_radius", v}});
  for (const auto& row : r.rows)
    j["rows"].push_back({{"method", row.method}, {"trial", row.trial}, {"mae", row.mae}});
  for (const auto& [method, ms] : r.summary) {
    j["summary"][method]["mean_mae"] = ms.mean;
    j["summary"][method]["std_mae"] = ms.std;
  }
  return j;
}

inline BenchmarkReport benchmark_from_json(const nlohmann::json& j) {
  BenchmarkReport r;
  r.cfg = config::from_json(j.at("config"));
  r.config_hash = j.at("config_hash").get<std::string>();
  r.base_seed = j.at("base_seed").get<uint64_t>();
  r.n_train = j.at("n_train").get<int>();
  r.n_test = j.at("n_test").get<int>();
  r.train_samples_per_trial = j.at("train_samples_per_trial").get<long>();
  r.noise_radius_mean = j.at("noise_radius_mean").get<double>();
  for (const auto& e : j.at("test_noise_radius"))
    r.test_noise_radius.emplace_back(e.at("prompt_id").get<std::string>(), e.at("noise_radius").get<double>());
  for (const auto& e : j.at("rows"))
    r.rows.push_back({e.at("method").get<std::string>(), e.at("trial").get<int>(), e.at("mae").get<double>()});
  for (const auto& [method, s] : j.at("summary").items())
    r.summary[method] = {s.at("mean_mae").get<double>(), s.at("std_mae").get<double>()};
  return r;
}

inline nlohmann::json to_json(const AblationReport& r) {
  nlohmann::json j = detail::run_header(r.cfg, r.config_hash, r.base_seed);
  j["kind"] = "ablation-report";
  j["n_train"] = r.n_train;
  j["n_test"] = r.n_test;
  for (const auto& row : r.rows)
    j["rows"].push_back({{"trial", row.trial},
                         {"mae_single_eval", row.mae_single_eval},
                         {"mae_median_eval", row.mae_median_eval}});
  j["summary"]["single-label"] = {{"mean_mae", r.single_eval.mean}, {"std_mae", r.single_eval.std}};
  j["summary"]["median-target"] = {{"mean_mae", r.median_eval.mean}, {"std_mae", r.median_eval.std}};
  return j;
}

inline AblationReport ablation_from_json(const nlohmann::json& j) {
  AblationReport r;
  r.cfg = config::from_json(j.at("config"));
  r.config_hash = j.at("config_hash").get<std::string>();
  r.base_seed = j.at("base_seed").get<uint64_t>();
  r.n_train = j.at("n_train").get<int>();
  r.n_test = j.at("n_test").get<int>();
  for (const auto& e : j.at("rows"))
    r.rows.push_back({e.at("trial").get<int>(), e.at("mae_single_eval").get<double>(),
                      e.at("mae_median_eval").get<double>()});
  r.single_eval = {j.at("summary").at("single-label").at("mean_mae").get<double>(),
                   j.at("summary").at("single-label").at("std_mae").get<double>()};
  r.median_eval = {j.at("summary").at("median-target").at("mean_mae").get<double>(),
                   j.at("summary").at("median-target").at("std_mae").get<double>()};
  return r;
}

inline nlohmann::json to_json(const CurveReport& r) {
  nlohmann::json j = detail::run_header(r.cfg, r.config_hash, r.base_seed);
  j["kind"] = "curve-report";
  j["budget_b"] = r.budget_b;
  j["n_test"] = r.n_test;
  j["notes"] = r.notes;
  for (const auto& row : r.rows)
    j["rows"].push_back({{"method", row.method},
                         {"k", row.k},
                         {"trial", row.trial},
                         {"unique_prompts", row.unique_prompts},
                         {"total_samples", row.total_samples},
                         {"mae", row.mae}});
  for (const auto& [method, by_k] : r.summary)
    for (const auto& [k, ms] : by_k) {
      j["summary"][method][std::to_string(k)]["mean_mae"] = ms.mean;
      j["summary"][method][std::to_string(k)]["std_mae"] = ms.std;
    }
  return j;
}

inline CurveReport curve_from_json(const nlohmann::json& j) {
  CurveReport r;
  r.cfg = config::from_json(j.at("config"));
  r.config_hash = j.at("config_hash").get<std::string>();
  r.base_seed = j.at("base_seed").get<uint64_t>();
  r.budget_b = j.at("budget_b").get<long>();
  r.n_test = j.at("n_test").get<int>();
  r.notes = j.at("notes").get<std::vector<std::string>>();
  for (const auto& e : j.at("rows"))
    r.rows.push_back({e.at("method").get<std::string>(), e.at("k").get<int>(), e.at("trial").get<int>(),
                      e.at("unique_prompts").get<int>(), e.at("total_samples").get<long>(),
                      e.at("mae").get<double>()});
  for (const auto& [method, by_k] : j.at("summary").items())
    for (const auto& [k, ms] : by_k.items())
      r.summary[method][std::stoi(k)] = {ms.at("mean_mae").get<double>(), ms.at("std_mae").get<double>()};
  return r;
}

inline void write_report(const nlohmann::json& j, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  io::write_text_file(out_dir / "report.json", j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// Trace export for synthetic datasets
// ---------------------------------------------------------------------------

inline std::vector<io::TraceRecord> export_traces(const Dataset& ds, int r, uint64_t base_seed) {
  std::vector<io::TraceRecord> records;
  records.reserve(ds.prompts.size());
  const uint64_t pool_seed = rng::combine(base_seed, rng::hash_bytes("trace-export"));
  for (size_t i = 0; i < ds.prompts.size(); ++i) {
    const SamplePool pool = pool_for(ds, i, r, pool_seed);
    io::TraceRecord rec;
    rec.prompt_id = ds.prompts[i].id;
    rec.phi = ds.prompts[i].phi;
    rec.lengths = pool.lengths;
    if (ds.synthetic) {
      rec.meta["body_median"] = io::format_double(ds.prompts[i].dist->body_median);
      rec.meta["clamped"] = std::to_string(pool.clamped_count);
    }
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace prod::pipeline
