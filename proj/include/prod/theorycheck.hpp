#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "prod/errors.hpp"
#include "prod/labelkit.hpp"
#include "prod/lengthdist.hpp"
#include "prod/linalg.hpp"
#include "prod/rng.hpp"
#include "prod/surrogate.hpp"

namespace prod::theorycheck {

using lengthdist::SurrogateNoiseModel;
using linalg::Vec;

struct CheckResult {
  std::string name;
  long trials = 0;
  long violations = 0;
  double bound_value = 0.0;
  double empirical_value = 0.0;
  bool pass = false;
  std::string tolerance_note;
};

namespace detail {

inline double median_of_noises(const SurrogateNoiseModel& noise, int r, rng::Stream& s) {
  std::vector<double> draws(r);
  for (int j = 0; j < r; ++j) draws[j] = lengthdist::sample_noise_one(noise, s);
  return labelkit::sample_median_real(std::move(draws));
}

inline double proportion_se(double p_hat, long n) {
  return std::sqrt(std::max(0.0, p_hat * (1.0 - p_hat)) / static_cast<double>(n));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Median moment: E|median of r draws|^{1+eps} <= 2v
// ---------------------------------------------------------------------------

inline CheckResult check_median_moment(const SurrogateNoiseModel& noise, int r, long n_trials, uint64_t seed) {
  if (r < 1) throw ArgumentError("r must be >= 1");
  if (n_trials < 10000) throw ArgumentError("n_trials must be >= 10^4");

  rng::Stream s = rng::Stream::root(seed).fork("median-moment");
  const double power = 1.0 + noise.epsilon;
  double sum = 0.0, sumsq = 0.0;
  for (long t = 0; t < n_trials; ++t) {
    const double y = std::pow(std::abs(detail::median_of_noises(noise, r, s)), power);
    sum += y;
    sumsq += y * y;
  }
  const double mean = sum / static_cast<double>(n_trials);
  const double se = std::sqrt(std::max(0.0, sumsq / n_trials - mean * mean) / static_cast<double>(n_trials));

  CheckResult res;
  res.name = "median-moment r=" + std::to_string(r);
  res.trials = n_trials;
  res.empirical_value = mean;
  res.bound_value = 2.0 * noise.v;
  res.pass = mean <= res.bound_value + 3.0 * se;
  res.tolerance_note = "one-sided, +3*SE(" + std::to_string(se) + ")";
  return res;
}

// ---------------------------------------------------------------------------
// Median tail: P(median of r > u) <= e^{-r/8} when P(X > u) <= 1/4
// ---------------------------------------------------------------------------

inline CheckResult check_median_tail(const SurrogateNoiseModel& noise, double u, int r, long n_trials,
                                     uint64_t seed) {
  if (r < 1) throw ArgumentError("r must be >= 1");
  if (n_trials < 1000) throw ArgumentError("n_trials must be >= 1000");

  // Verify the per-sample tail precondition by Monte Carlo first.
  rng::Stream ps = rng::Stream::root(seed).fork("per-sample-tail");
  const long probe_n = std::max<long>(n_trials, 100000);
  long above = 0;
  for (long t = 0; t < probe_n; ++t)
    if (lengthdist::sample_noise_one(noise, ps) > u) ++above;
  const double tail_hat = static_cast<double>(above) / static_cast<double>(probe_n);
  if (tail_hat > 0.25 + 3.0 * detail::proportion_se(tail_hat, probe_n))
    throw PreconditionError("per-sample tail P(X > u) measured at " + std::to_string(tail_hat) +
                            ", above the required 1/4");

  rng::Stream s = rng::Stream::root(seed).fork("median-tail");
  long hits = 0;
  for (long t = 0; t < n_trials; ++t)
    if (detail::median_of_noises(noise, r, s) > u) ++hits;
  const double freq = static_cast<double>(hits) / static_cast<double>(n_trials);
  const double se = detail::proportion_se(freq, n_trials);

  CheckResult res;
  res.name = "median-tail r=" + std::to_string(r);
  res.trials = n_trials;
  res.violations = hits;
  res.empirical_value = freq;
  res.bound_value = std::exp(-static_cast<double>(r) / 8.0);
  res.pass = freq <= res.bound_value + 3.0 * se;
  res.tolerance_note = "one-sided, +3*SE(" + std::to_string(se) + ")";
  return res;
}

// ---------------------------------------------------------------------------
// Potential: sum ||phi_i||^2_{V_{i-1}^{-1}} <= 2 log det(V_N)/det(lambda I)
//            <= 2 d log(1 + N/(lambda d))
// ---------------------------------------------------------------------------

inline CheckResult check_potential(const std::vector<Vec>& phis, double lambda) {
  if (phis.empty()) throw ArgumentError("check_potential needs a feature stream");
  if (lambda <= 0.0) throw ArgumentError("lambda must be positive");
  const size_t d = phis.front().size();
  for (const Vec& phi : phis) {
    if (phi.size() != d) throw ArgumentError("feature dimension mismatch");
    if (linalg::norm2(phi) > 1.0 + 1e-12)
      throw PreconditionError("feature norm exceeds 1: " + std::to_string(linalg::norm2(phi)));
  }

  linalg::SymMatrix v(d, lambda);
  double lhs = 0.0;
  for (const Vec& phi : phis) {
    const linalg::Cholesky chol(v);
    lhs += chol.inv_quad(phi);
    v.add_outer(phi);
  }
  const double logdet_ratio = linalg::Cholesky(v).log_det() - static_cast<double>(d) * std::log(lambda);
  const double middle = 2.0 * logdet_ratio;
  const double n = static_cast<double>(phis.size());
  const double rhs = 2.0 * static_cast<double>(d) * std::log(1.0 + n / (lambda * static_cast<double>(d)));

  CheckResult res;
  res.name = "potential d=" + std::to_string(d) + " n=" + std::to_string(phis.size());
  res.trials = static_cast<long>(phis.size());
  res.empirical_value = lhs;
  res.bound_value = rhs;
  const double tol = 1e-9;
  res.pass = (lhs <= middle + tol) && (middle <= rhs + tol);
  res.tolerance_note = "chain lhs <= 2*logdet(" + std::to_string(logdet_ratio) + ") <= rhs, tol 1e-9";
  return res;
}

// ---------------------------------------------------------------------------
// Concentration lemmas for fixed coefficients and median noise
// ---------------------------------------------------------------------------

enum class ConcentrationKind { Linear, Quadratic };

struct ConcentrationConfig {
  int n = 20;   // dataset size (coefficient count)
  int r = 64;   // repeats per median
  double delta = 0.2;
  long trials = 1000;
  Vec coeffs;   // fixed coefficients; empty means seeded uniform defaults
  SurrogateNoiseModel noise;
};

/// Linear: P(sum a_i median_i > rho ||a||_{1+eps}) within delta/2 + 2N e^{-r/8}.
/// Quadratic: same budget for sum b_i^2 median_i^2 > C rho ||b||^2_{1+eps}.
inline CheckResult check_concentration(ConcentrationKind kind, const ConcentrationConfig& cfg, uint64_t seed) {
  if (cfg.n < 1 || cfg.r < 1) throw ArgumentError("n and r must be >= 1");
  if (cfg.trials < 1000) throw ArgumentError("trials must be >= 1000");
  if (cfg.delta <= 0.0 || cfg.delta >= 1.0) throw ArgumentError("delta must lie in (0,1)");

  Vec coeffs = cfg.coeffs;
  if (coeffs.empty()) {
    rng::Stream cs = rng::Stream::root(seed).fork("coeffs");
    coeffs.resize(cfg.n);
    for (auto& c : coeffs)
      c = (kind == ConcentrationKind::Linear) ? cs.uniform(-1.0, 1.0) : cs.uniform(0.0, 1.0);
  }
  if (static_cast<int>(coeffs.size()) != cfg.n) throw ArgumentError("coefficient count must equal n");
  if (kind == ConcentrationKind::Quadratic)
    for (double c : coeffs)
      if (c < 0.0) throw ArgumentError("quadratic coefficients must be nonnegative");

  const double power = 1.0 + cfg.noise.epsilon;
  double norm_pow = 0.0;
  for (double c : coeffs) norm_pow += std::pow(std::abs(c), power);
  const double holder_norm = std::pow(norm_pow, 1.0 / power);

  const double c_const = surrogate::compute_c(cfg.noise.v, cfg.noise.epsilon);
  const double rho = surrogate::compute_rho(cfg.noise.v, cfg.noise.epsilon, cfg.n, cfg.delta);
  const double threshold = (kind == ConcentrationKind::Linear) ? rho * holder_norm
                                                               : c_const * rho * holder_norm * holder_norm;

  rng::Stream s = rng::Stream::root(seed).fork("concentration");
  long violations = 0;
  for (long t = 0; t < cfg.trials; ++t) {
    rng::Stream ts = s.fork(static_cast<uint64_t>(t));
    double lhs = 0.0;
    for (int i = 0; i < cfg.n; ++i) {
      const double med = detail::median_of_noises(cfg.noise, cfg.r, ts);
      lhs += (kind == ConcentrationKind::Linear) ? coeffs[i] * med : coeffs[i] * coeffs[i] * med * med;
    }
    if (lhs > threshold) ++violations;
  }

  const double freq = static_cast<double>(violations) / static_cast<double>(cfg.trials);
  const double budget =
      cfg.delta / 2.0 + 2.0 * static_cast<double>(cfg.n) * std::exp(-static_cast<double>(cfg.r) / 8.0);
  const double se = detail::proportion_se(std::max(freq, budget), cfg.trials);

  CheckResult res;
  res.name = (kind == ConcentrationKind::Linear ? "concentration-linear" : "concentration-quadratic");
  res.trials = cfg.trials;
  res.violations = violations;
  res.empirical_value = freq;
  res.bound_value = budget;
  if (budget >= 1.0) {
    res.pass = true;
    res.tolerance_note = "vacuous: failure budget " + std::to_string(budget) + " >= 1";
  } else {
    res.pass = freq <= budget + 3.0 * se;
    res.tolerance_note = "one-sided, +3*binomial SE(" + std::to_string(se) + ")";
  }
  return res;
}

}  // namespace prod::theorycheck
