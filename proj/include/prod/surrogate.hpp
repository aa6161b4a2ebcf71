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

namespace prod::surrogate {

using lengthdist::SurrogateNoiseModel;
using linalg::SymMatrix;
using linalg::Vec;

// ---------------------------------------------------------------------------
// Ridge estimator
// ---------------------------------------------------------------------------

struct RidgeEstimate {
  double lambda = 1.0;
  SymMatrix V;     // lambda*I + sum phi phi^T
  Vec theta_hat;   // V^{-1} sum label*phi
  int n = 0;       // prompts used
};

/// Minimizes lambda*||theta||^2 + sum (phi.theta - label)^2 via Cholesky
/// factorization with one refinement step; no explicit inverse is formed.
inline RidgeEstimate ridge_fit(const std::vector<Vec>& phis, const Vec& labels, double lambda) {
  if (phis.empty() || phis.size() != labels.size())
    throw ArgumentError("ridge_fit needs equal, non-empty feature and label lists");
  if (lambda <= 0.0) throw ArgumentError("lambda must be positive");
  const size_t d = phis.front().size();
  for (const Vec& phi : phis)
    if (phi.size() != d) throw ArgumentError("feature dimension mismatch");

  RidgeEstimate est;
  est.lambda = lambda;
  est.n = static_cast<int>(phis.size());
  est.V = SymMatrix(d, lambda);
  Vec rhs(d, 0.0);
  for (size_t i = 0; i < phis.size(); ++i) {
    est.V.add_outer(phis[i]);
    linalg::axpy(labels[i], phis[i], rhs);
  }
  est.theta_hat = linalg::spd_solve(est.V, rhs);

  // Closed-form consistency guard: ||V theta - rhs|| <= 1e-10 (1 + ||rhs||).
  const Vec vt = est.V.matvec(est.theta_hat);
  double res = 0.0;
  for (size_t i = 0; i < d; ++i) res += (vt[i] - rhs[i]) * (vt[i] - rhs[i]);
  if (std::sqrt(res) > 1e-10 * (1.0 + linalg::norm2(rhs)))
    throw NumericalError("ridge solve residual exceeds tolerance");
  return est;
}

/// Self-normalized uncertainty sqrt(phi^T V^{-1} phi).
inline double uncertainty(const RidgeEstimate& est, const Vec& phi) {
  if (phi.size() != est.V.dim()) throw ArgumentError("feature dimension mismatch");
  const linalg::Cholesky chol(est.V);
  return std::sqrt(std::max(0.0, chol.inv_quad(phi)));
}

// ---------------------------------------------------------------------------
// Confidence width
// ---------------------------------------------------------------------------

struct BoundParams {
  double epsilon = 1.0;  // in (0,1]
  double v = 1.0 / 3.0;  // noise moment bound
  double delta = 0.2;    // in (0,1)
  double S = 1.0;        // ||theta*||_2 bound
  int d = 1;
  int n = 1;  // prompts
  int r = 1;  // repeats per prompt
};

inline void validate(const BoundParams& p) {
  if (p.epsilon <= 0.0 || p.epsilon > 1.0) throw ArgumentError("epsilon must lie in (0,1]");
  if (p.v <= 0.0) throw ArgumentError("v must be positive");
  if (p.delta <= 0.0 || p.delta >= 1.0) throw ArgumentError("delta must lie in (0,1)");
  if (p.S <= 0.0) throw ArgumentError("S must be positive");
  if (p.d < 1 || p.n < 1 || p.r < 1) throw ArgumentError("d, n, r must be >= 1");
}

inline double compute_c(double v, double epsilon) { return std::pow(4.0 * v, 1.0 / (1.0 + epsilon)); }

inline double compute_rho(double v, double epsilon, int n, double delta) {
  const double c = compute_c(v, epsilon);
  return 2.0 * c * std::log(8.0 * static_cast<double>(n) / delta) + 4.0 * std::pow(c, -epsilon) * v;
}

/// Confidence width multiplying ||phi||_{V^{-1}}:
/// sqrt(rho^2 N^{(1-eps)/(1+eps)} + 2 C rho d N^{(1-eps)/(1+eps)} log(1+N/(lambda d)))
/// + sqrt(lambda) S.
inline double beta_n(const BoundParams& p, double lambda) {
  validate(p);
  if (lambda <= 0.0) throw ArgumentError("lambda must be positive");
  const double c = compute_c(p.v, p.epsilon);
  const double rho = compute_rho(p.v, p.epsilon, p.n, p.delta);
  const double n = static_cast<double>(p.n);
  const double d = static_cast<double>(p.d);
  const double n_pow = std::pow(n, (1.0 - p.epsilon) / (1.0 + p.epsilon));
  const double inside = rho * rho * n_pow + 2.0 * c * rho * d * n_pow * std::log(1.0 + n / (lambda * d));
  return std::sqrt(inside) + std::sqrt(lambda) * p.S;
}

/// Failure-probability surcharge of median supervision; the bound is vacuous
/// once delta + this exceeds 1.
inline double repeat_failure_term(int n, int r) {
  return 4.0 * static_cast<double>(n) * std::exp(-static_cast<double>(r) / 8.0);
}

/// Smallest r making the surcharge fold into the main confidence level.
inline double repeat_threshold(int n, double delta) {
  return 8.0 * std::log(4.0 * static_cast<double>(n) / delta);
}

// ---------------------------------------------------------------------------
// Trial harness
// ---------------------------------------------------------------------------

struct TrialConfig {
  int d = 5;
  int n = 50;
  int r = 16;
  double lambda = 1.0;
  double delta = 0.2;
  double S = 1.0;
  int probes = 64;
  SurrogateNoiseModel noise;  // defaults to uniform(-1,1)
};

struct ProbeOutcome {
  double err = 0.0;    // |phi.theta* - phi.theta_hat|
  double bound = 0.0;  // beta_N ||phi||_{V^{-1}}
  bool violated = false;
};

struct TrialRecord {
  uint64_t seed = 0;
  int n = 0;
  int r = 0;
  double lambda = 0.0;
  double beta = 0.0;
  std::vector<ProbeOutcome> probes;
  bool any_violation = false;
  double max_err = 0.0;
  double mean_err = 0.0;
};

inline Vec sample_feature(int d, rng::Stream& s) {
  Vec phi(d);
  for (auto& x : phi) x = s.uniform(-1.0, 1.0);
  linalg::clamp_to_unit_ball(phi);
  return phi;
}

inline Vec seeded_direction(int d, double scale, uint64_t seed) {
  rng::Stream s = rng::Stream::root(seed).fork("theta");
  Vec u(d);
  for (auto& x : u) x = s.normal();
  const double n = linalg::norm2(u);
  for (auto& x : u) x = (n > 0.0 ? scale * x / n : 0.0);
  return u;
}

/// One synthetic run of the linear model length = phi.theta* + eta: draws N
/// prompts, r noises each, takes per-prompt medians as labels, fits ridge, and
/// scores fresh probe features against the confidence width.
inline TrialRecord surrogate_trial(const TrialConfig& cfg, uint64_t seed) {
  if (cfg.d < 1 || cfg.n < 1 || cfg.r < 1 || cfg.probes < 1)
    throw ArgumentError("d, n, r, probes must be >= 1");
  if (cfg.lambda <= 0.0) throw ArgumentError("lambda must be positive");

  const Vec theta_star = seeded_direction(cfg.d, cfg.S, seed);
  rng::Stream base = rng::Stream::root(seed).fork("trial");

  std::vector<Vec> phis(cfg.n);
  Vec labels(cfg.n);
  for (int i = 0; i < cfg.n; ++i) {
    rng::Stream sp = base.fork("prompt").fork(static_cast<uint64_t>(i));
    phis[i] = sample_feature(cfg.d, sp);
    std::vector<double> noisy(cfg.r);
    const double truth = linalg::dot(phis[i], theta_star);
    for (int j = 0; j < cfg.r; ++j) {
      rng::Stream sd = sp.fork("draw").fork(static_cast<uint64_t>(j));
      noisy[j] = truth + lengthdist::sample_noise_one(cfg.noise, sd);
    }
    labels[i] = labelkit::sample_median_real(std::move(noisy));
  }

  const RidgeEstimate est = ridge_fit(phis, labels, cfg.lambda);

  BoundParams bp;
  bp.epsilon = cfg.noise.epsilon;
  bp.v = cfg.noise.v;
  bp.delta = cfg.delta;
  bp.S = cfg.S;
  bp.d = cfg.d;
  bp.n = cfg.n;
  bp.r = cfg.r;
  const double beta = beta_n(bp, cfg.lambda);

  TrialRecord rec;
  rec.seed = seed;
  rec.n = cfg.n;
  rec.r = cfg.r;
  rec.lambda = cfg.lambda;
  rec.beta = beta;
  rec.probes.reserve(cfg.probes);
  const linalg::Cholesky chol(est.V);
  double err_sum = 0.0;
  for (int k = 0; k < cfg.probes; ++k) {
    rng::Stream sq = base.fork("probe").fork(static_cast<uint64_t>(k));
    const Vec phi = sample_feature(cfg.d, sq);
    ProbeOutcome probe;
    probe.err = std::abs(linalg::dot(phi, theta_star) - linalg::dot(phi, est.theta_hat));
    probe.bound = beta * std::sqrt(std::max(0.0, chol.inv_quad(phi)));
    probe.violated = probe.err > probe.bound;
    rec.any_violation |= probe.violated;
    rec.max_err = std::max(rec.max_err, probe.err);
    err_sum += probe.err;
    rec.probes.push_back(probe);
  }
  rec.mean_err = err_sum / static_cast<double>(cfg.probes);
  return rec;
}

}  // namespace prod::surrogate
