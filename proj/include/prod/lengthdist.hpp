#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "prod/errors.hpp"
#include "prod/linalg.hpp"
#include "prod/rng.hpp"

namespace prod::lengthdist {

using linalg::Vec;

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

enum class LengthFamily { LognormalParetoMix, DiscretePmf };

struct ConditionalLengthDist {
  LengthFamily family = LengthFamily::LognormalParetoMix;
  double body_median = 100.0;  // tokens
  double body_sigma = 0.3;     // log-scale sd of the body
  double tail_weight = 0.0;    // mixture weight in [0,1]
  double tail_alpha = 1.6;     // Pareto shape
  double tail_xmin = 100.0;    // tokens
  int max_len = 8192;          // truncation cap
  Vec pmf;                     // DiscretePmf family: probabilities over {0..max_len}
};

struct PromptInstance {
  std::string id;
  Vec phi;  // ||phi||_2 <= 1, enforced at construction
  std::optional<ConditionalLengthDist> dist;
};

struct SamplePool {
  std::string prompt_id;
  std::vector<int> lengths;  // nonnegative integers, tokens
  uint64_t seed = 0;
  int clamped_count = 0;  // draws that hit the [1, max_len] clamp
};

enum class NoiseShape { Uniform, StudentTSymmetrized, TwoSidedPareto };

// Symmetric noise with a bounded (1+epsilon)-th absolute moment. Samples are
// sign * |base draw|, so symmetry holds by construction.
struct SurrogateNoiseModel {
  NoiseShape shape = NoiseShape::Uniform;
  double epsilon = 1.0;  // in (0,1]
  double v = 1.0 / 3.0;  // moment bound: E|eta|^{1+epsilon} <= v
  // shape-specific parameters
  double half_width = 1.0;  // Uniform
  int nu = 3;               // StudentTSymmetrized degrees of freedom
  double alpha = 1.5;       // TwoSidedPareto shape
  double xmin = 0.1;        // TwoSidedPareto scale
};

struct GeneratorConfig {
  int d = 8;
  int n_prompts = 2500;
  LengthFamily family = LengthFamily::LognormalParetoMix;
  double link_scale = 200.0;  // body_median = link_scale * exp(link_gain * w.phi)
  double link_gain = 0.6;
  uint64_t link_seed = 0xC0FFEE;  // seeds the fixed unit link vector w
  double body_sigma = 0.35;
  double tail_weight = 0.15;
  double tail_alpha = 1.6;
  double tail_xmin_ratio = 0.15;  // tail_xmin = ratio * body_median
  int max_len = 8192;
  bool allow_infinite_mean = false;
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline void validate(const GeneratorConfig& c) {
  if (c.d < 1) throw ConfigError("d must be >= 1");
  if (c.n_prompts < 1) throw ConfigError("n_prompts must be >= 1");
  if (c.link_scale <= 0.0) throw ConfigError("link_scale must be positive");
  if (c.body_sigma <= 0.0) throw ConfigError("body_sigma must be positive");
  if (c.tail_weight < 0.0 || c.tail_weight > 1.0) throw ConfigError("tail_weight must lie in [0,1]");
  if (c.tail_weight > 0.0 && c.tail_alpha <= 1.0 && !c.allow_infinite_mean)
    throw ConfigError("tail_alpha must exceed 1 unless allow_infinite_mean is set");
  if (c.tail_xmin_ratio <= 0.0) throw ConfigError("tail_xmin_ratio must be positive");
  if (c.max_len < 1) throw ConfigError("max_len must be >= 1");
}

inline void validate(const ConditionalLengthDist& d) {
  if (d.max_len < 1) throw ConfigError("max_len must be >= 1");
  if (d.family == LengthFamily::DiscretePmf) {
    if (d.pmf.size() != static_cast<size_t>(d.max_len) + 1)
      throw ConfigError("pmf must cover {0..max_len}");
    double sum = 0.0;
    for (double p : d.pmf) {
      if (p < 0.0) throw ConfigError("pmf entries must be nonnegative");
      sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-12) throw ConfigError("pmf must sum to 1 within 1e-12");
  } else {
    if (d.body_median <= 0.0) throw ConfigError("body_median must be positive");
    if (d.body_sigma <= 0.0) throw ConfigError("body_sigma must be positive");
    if (d.tail_weight < 0.0 || d.tail_weight > 1.0) throw ConfigError("tail_weight must lie in [0,1]");
    if (d.tail_weight > 0.0 && (d.tail_alpha <= 0.0 || d.tail_xmin <= 0.0))
      throw ConfigError("tail_alpha and tail_xmin must be positive");
  }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

inline double sample_raw_length(const ConditionalLengthDist& d, rng::Stream& s) {
  if (d.family == LengthFamily::DiscretePmf) {
    const double u = s.next_double();
    double cum = 0.0;
    for (size_t k = 0; k < d.pmf.size(); ++k) {
      cum += d.pmf[k];
      if (u < cum) return static_cast<double>(k);
    }
    return static_cast<double>(d.pmf.size() - 1);
  }
  if (s.next_double() < d.tail_weight) {
    // Pareto tail: xmin * U^{-1/alpha}
    return d.tail_xmin * std::pow(s.next_open_double(), -1.0 / d.tail_alpha);
  }
  // Lognormal body with median body_median and log-sd body_sigma.
  return d.body_median * std::exp(d.body_sigma * s.normal());
}

inline int clamp_length(double raw, int max_len, int* clamped) {
  long long v = std::llround(raw);
  if (v < 1) {
    v = 1;
    if (clamped) ++*clamped;
  } else if (v > max_len) {
    v = max_len;
    if (clamped) ++*clamped;
  }
  return static_cast<int>(v);
}

/// r i.i.d. draws from p.dist, clamped to [1, max_len] and rounded to integer.
/// Deterministic under (p.id, seed); draw j uses its own derived stream.
inline SamplePool sample_lengths(const PromptInstance& p, int r, uint64_t seed) {
  if (!p.dist)
    throw UnsupportedError("prompt '" + p.id + "' carries no synthetic distribution; use the ingestion path");
  if (r < 1) throw ArgumentError("r must be >= 1");
  validate(*p.dist);

  SamplePool pool;
  pool.prompt_id = p.id;
  pool.seed = seed;
  pool.lengths.reserve(r);
  const rng::Stream base = rng::Stream::root(seed).fork(rng::hash_bytes(p.id)).fork("lengths");
  for (int j = 0; j < r; ++j) {
    rng::Stream draw = base.fork(static_cast<uint64_t>(j));
    pool.lengths.push_back(clamp_length(sample_raw_length(*p.dist, draw), p.dist->max_len, &pool.clamped_count));
  }
  return pool;
}

inline double sample_noise_one(const SurrogateNoiseModel& m, rng::Stream& s) {
  double magnitude = 0.0;
  switch (m.shape) {
    case NoiseShape::Uniform:
      magnitude = m.half_width * s.next_double();
      break;
    case NoiseShape::StudentTSymmetrized: {
      const double z = s.normal();
      double chi2 = 0.0;
      for (int i = 0; i < m.nu; ++i) {
        const double g = s.normal();
        chi2 += g * g;
      }
      magnitude = std::abs(z / std::sqrt(chi2 / static_cast<double>(m.nu)));
      break;
    }
    case NoiseShape::TwoSidedPareto:
      magnitude = m.xmin * std::pow(s.next_open_double(), -1.0 / m.alpha);
      break;
  }
  return s.sign() * magnitude;
}

/// n i.i.d. symmetric draws, deterministic under (m, n, seed).
inline Vec sample_noise(const SurrogateNoiseModel& m, int n, uint64_t seed) {
  if (n < 1) throw ArgumentError("n must be >= 1");
  Vec out(n);
  rng::Stream s = rng::Stream::root(seed).fork("noise");
  for (int i = 0; i < n; ++i) out[i] = sample_noise_one(m, s);
  return out;
}

struct MomentEstimate {
  double mean = 0.0;
  double se = 0.0;
};

inline MomentEstimate empirical_abs_moment(const SurrogateNoiseModel& m, double power, int n, uint64_t seed) {
  rng::Stream s = rng::Stream::root(seed).fork("moment");
  double sum = 0.0, sumsq = 0.0;
  for (int i = 0; i < n; ++i) {
    const double y = std::pow(std::abs(sample_noise_one(m, s)), power);
    sum += y;
    sumsq += y * y;
  }
  const double mean = sum / n;
  const double var = std::max(0.0, sumsq / n - mean * mean);
  return {mean, std::sqrt(var / n)};
}

/// Builds a noise model and Monte Carlo checks E|eta|^{1+eps} <= v within
/// 3 standard errors; rejects models whose configured bound is not met.
inline SurrogateNoiseModel make_noise_model(SurrogateNoiseModel m, int verify_n = 100000, uint64_t verify_seed = 17) {
  if (m.epsilon <= 0.0 || m.epsilon > 1.0) throw ConfigError("epsilon must lie in (0,1]");
  if (m.v <= 0.0) throw ConfigError("v must be positive");
  if (m.shape == NoiseShape::Uniform && m.half_width <= 0.0) throw ConfigError("half_width must be positive");
  if (m.shape == NoiseShape::StudentTSymmetrized) {
    if (m.nu < 1) throw ConfigError("nu must be >= 1");
    if (1.0 + m.epsilon >= static_cast<double>(m.nu))
      throw ConfigError("nu must exceed 1+epsilon for a finite moment");
  }
  if (m.shape == NoiseShape::TwoSidedPareto) {
    if (m.alpha <= 0.0 || m.xmin <= 0.0) throw ConfigError("alpha and xmin must be positive");
    if (1.0 + m.epsilon >= m.alpha) throw ConfigError("alpha must exceed 1+epsilon for a finite moment");
  }
  const MomentEstimate est = empirical_abs_moment(m, 1.0 + m.epsilon, verify_n, verify_seed);
  if (est.mean > m.v + 3.0 * est.se)
    throw ConfigError("moment check failed: E|eta|^{1+epsilon} estimate " + std::to_string(est.mean) +
                      " exceeds v=" + std::to_string(m.v) + " + 3*SE");
  return m;
}

// Canonical noise models used by the theory checks.
inline SurrogateNoiseModel uniform_noise(double half_width = 1.0) {
  SurrogateNoiseModel m;
  m.shape = NoiseShape::Uniform;
  m.half_width = half_width;
  m.epsilon = 1.0;
  m.v = half_width * half_width / 3.0;  // exact second moment
  return m;
}

inline SurrogateNoiseModel student_t_noise(int nu = 3, double epsilon = 0.5, double v = 1.65) {
  SurrogateNoiseModel m;
  m.shape = NoiseShape::StudentTSymmetrized;
  m.nu = nu;
  m.epsilon = epsilon;
  m.v = v;  // analytic E|t_3|^{1.5} ~= 1.612 for the defaults
  return m;
}

inline SurrogateNoiseModel two_sided_pareto_noise(double alpha = 1.5, double xmin = 0.1, double epsilon = 0.4) {
  SurrogateNoiseModel m;
  m.shape = NoiseShape::TwoSidedPareto;
  m.alpha = alpha;
  m.xmin = xmin;
  m.epsilon = epsilon;
  // exact Pareto moment: alpha*xmin^p/(alpha-p) with p = 1+epsilon
  const double p = 1.0 + epsilon;
  m.v = alpha * std::pow(xmin, p) / (alpha - p);
  return m;
}

// ---------------------------------------------------------------------------
// Dataset generation
// ---------------------------------------------------------------------------

inline Vec link_vector(int d, uint64_t link_seed) {
  rng::Stream s = rng::Stream::root(link_seed).fork("link");
  Vec w(d);
  for (auto& x : w) x = s.normal();
  const double n = linalg::norm2(w);
  if (n > 0.0)
    for (auto& x : w) x /= n;
  else
    w[0] = 1.0;
  return w;
}

/// N prompts with i.i.d. features projected onto the unit ball and a
/// per-prompt length distribution whose body median follows
/// link_scale * exp(link_gain * w.phi). Bit-identical under (config, seed).
inline std::vector<PromptInstance> make_dataset(const GeneratorConfig& cfg, uint64_t seed) {
  validate(cfg);
  const Vec w = link_vector(cfg.d, cfg.link_seed);

  std::vector<PromptInstance> prompts;
  prompts.reserve(cfg.n_prompts);
  const rng::Stream base = rng::Stream::root(seed).fork("dataset");
  for (int i = 0; i < cfg.n_prompts; ++i) {
    rng::Stream s = base.fork(static_cast<uint64_t>(i));
    PromptInstance p;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "p%06d", i);
    p.id = buf;
    p.phi.resize(cfg.d);
    for (auto& x : p.phi) x = s.uniform(-1.0, 1.0);
    linalg::clamp_to_unit_ball(p.phi);

    ConditionalLengthDist d;
    d.family = cfg.family;
    d.body_median = cfg.link_scale * std::exp(cfg.link_gain * linalg::dot(w, p.phi));
    d.body_sigma = cfg.body_sigma;
    d.tail_weight = cfg.tail_weight;
    d.tail_alpha = cfg.tail_alpha;
    d.tail_xmin = cfg.tail_xmin_ratio * d.body_median;
    d.max_len = cfg.max_len;
    p.dist = d;
    prompts.push_back(std::move(p));
  }
  return prompts;
}

}  // namespace prod::lengthdist
