#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "prod/errors.hpp"
#include "prod/labelkit.hpp"
#include "prod/lengthdist.hpp"

namespace prod::metrics {

using lengthdist::SamplePool;

// Finite-support pmf over integer lengths, kept sorted by value.
struct DiscretePmf {
  std::vector<std::pair<int, double>> entries;

  static DiscretePmf from(std::vector<std::pair<int, double>> e) {
    DiscretePmf pmf;
    pmf.entries = std::move(e);
    std::sort(pmf.entries.begin(), pmf.entries.end());
    double sum = 0.0;
    for (auto& [value, p] : pmf.entries) {
      if (p < 0.0) throw ArgumentError("pmf probabilities must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ArgumentError("pmf must sum to 1");
    return pmf;
  }

  int min_support() const { return entries.front().first; }
  int max_support() const { return entries.back().first; }

  double cdf(int a) const {
    double c = 0.0;
    for (const auto& [value, p] : entries) {
      if (value > a) break;
      c += p;
    }
    return c;
  }
};

// ---------------------------------------------------------------------------
// Conditional point risk and the discrete median identities
// ---------------------------------------------------------------------------

/// E|L - a| over the pmf support, exact.
inline double point_risk(const DiscretePmf& pmf, int a) {
  double risk = 0.0;
  for (const auto& [value, p] : pmf.entries) risk += p * std::abs(static_cast<double>(value - a));
  return risk;
}

struct RiskDifference {
  double lhs = 0.0;  // R(a+1) - R(a)
  double rhs = 0.0;  // 2 P(L <= a) - 1
};

inline RiskDifference risk_difference_check(const DiscretePmf& pmf, int a) {
  return {point_risk(pmf, a + 1) - point_risk(pmf, a), 2.0 * pmf.cdf(a) - 1.0};
}

/// Brute-force minimizers of point_risk over the support's integer hull.
inline std::vector<int> bayes_median_oracle(const DiscretePmf& pmf) {
  const int lo = pmf.min_support();
  const int hi = pmf.max_support();
  double best = std::numeric_limits<double>::infinity();
  std::vector<double> risks(hi - lo + 1);
  for (int a = lo; a <= hi; ++a) {
    risks[a - lo] = point_risk(pmf, a);
    best = std::min(best, risks[a - lo]);
  }
  std::vector<int> minimizers;
  const double tol = 1e-12 * (1.0 + best);
  for (int a = lo; a <= hi; ++a)
    if (risks[a - lo] <= best + tol) minimizers.push_back(a);
  return minimizers;
}

/// The interval of conditional medians computed from the CDF directly:
/// [min{a : P(L<=a) >= 1/2}, max{a : P(L>=a) >= 1/2}].
inline std::pair<int, int> median_interval(const DiscretePmf& pmf) {
  const int lo = pmf.min_support();
  const int hi = pmf.max_support();
  int m_lo = hi, m_hi = lo;
  for (int a = lo; a <= hi; ++a) {
    if (pmf.cdf(a) >= 0.5 - 1e-15) {
      m_lo = a;
      break;
    }
  }
  for (int a = hi; a >= lo; --a) {
    const double upper_tail = 1.0 - (a > lo ? pmf.cdf(a - 1) : 0.0);
    if (upper_tail >= 0.5 - 1e-15) {
      m_hi = a;
      break;
    }
  }
  return {m_lo, m_hi};
}

// ---------------------------------------------------------------------------
// Pool diagnostics
// ---------------------------------------------------------------------------

/// Mean absolute deviation of the pool from its sample median.
inline double noise_radius(const SamplePool& pool) {
  if (pool.lengths.empty()) throw ArgumentError("noise_radius needs a non-empty pool");
  const double m = labelkit::sample_median(pool.lengths);
  double sum = 0.0;
  for (int L : pool.lengths) sum += std::abs(static_cast<double>(L) - m);
  return sum / static_cast<double>(pool.lengths.size());
}

inline double max_to_median(const SamplePool& pool) {
  if (pool.lengths.empty()) throw ArgumentError("max_to_median needs a non-empty pool");
  const double m = labelkit::sample_median(pool.lengths);
  if (m <= 0.0) throw ArgumentError("max_to_median undefined: sample median is zero");
  return static_cast<double>(*std::max_element(pool.lengths.begin(), pool.lengths.end())) / m;
}

/// MAE of the train-split median used as a constant prediction.
inline double constant_median_baseline(const std::vector<double>& train_targets,
                                       const std::vector<double>& test_targets) {
  if (train_targets.empty() || test_targets.empty())
    throw ArgumentError("constant_median_baseline needs non-empty target lists");
  const double pred = labelkit::sample_median_real(train_targets);
  double sum = 0.0;
  for (double t : test_targets) sum += std::abs(t - pred);
  return sum / static_cast<double>(test_targets.size());
}

// ---------------------------------------------------------------------------
// Evaluation reports
// ---------------------------------------------------------------------------

struct PerPrompt {
  std::string prompt_id;
  double prediction = 0.0;
  double target = 0.0;
  double abs_err = 0.0;
};

struct EvalReport {
  double mae = 0.0;            // tokens
  double noise_radius = 0.0;   // tokens, filled by the caller when pools exist
  double baseline_mae = 0.0;   // constant-median baseline, filled by the caller
  std::vector<PerPrompt> per_prompt;
  std::string config_hash;
};

using Scored = std::vector<std::pair<std::string, double>>;  // (prompt_id, value)

/// Joins predictions and targets on prompt id and reports MAE plus residuals.
inline EvalReport evaluate(const Scored& predictions, const Scored& targets) {
  if (predictions.empty()) throw ArgumentError("evaluate needs predictions");
  std::map<std::string, double> target_by_id(targets.begin(), targets.end());
  std::string missing;
  for (const auto& [id, pred] : predictions)
    if (!target_by_id.count(id)) missing += (missing.empty() ? "" : ", ") + id;
  if (predictions.size() != targets.size() || !missing.empty())
    throw AlignmentError("prediction/target ids do not align" +
                         (missing.empty() ? std::string(" (count mismatch)") : ": missing targets for " + missing));

  EvalReport report;
  report.per_prompt.reserve(predictions.size());
  double sum = 0.0;
  for (const auto& [id, pred] : predictions) {
    const double target = target_by_id.at(id);
    const double err = std::abs(pred - target);
    report.per_prompt.push_back({id, pred, target, err});
    sum += err;
  }
  report.mae = sum / static_cast<double>(report.per_prompt.size());
  return report;
}

}  // namespace prod::metrics
