#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "prod/errors.hpp"
#include "prod/labelkit.hpp"
#include "prod/linalg.hpp"
#include "prod/rng.hpp"

namespace prod::predictor {

using labelkit::BinGrid;
using linalg::Vec;

// ---------------------------------------------------------------------------
// Parameters and configuration
// ---------------------------------------------------------------------------

// Two-layer perceptron: d -> hidden (ReLU) -> K logits -> softmax.
struct PredictorParams {
  int d = 0;
  int hidden = 512;
  int k = 0;
  Vec w1;  // hidden x d, row-major
  Vec b1;  // hidden
  Vec w2;  // k x hidden, row-major
  Vec b2;  // k

  static PredictorParams zeros(int d, int k, int hidden = 512) {
    PredictorParams p;
    p.d = d;
    p.hidden = hidden;
    p.k = k;
    p.w1.assign(static_cast<size_t>(hidden) * d, 0.0);
    p.b1.assign(hidden, 0.0);
    p.w2.assign(static_cast<size_t>(k) * hidden, 0.0);
    p.b2.assign(k, 0.0);
    return p;
  }

  // Seeded uniform init in [-1/sqrt(fan_in), +1/sqrt(fan_in)].
  static PredictorParams init(int d, int k, uint64_t seed, int hidden = 512) {
    PredictorParams p = zeros(d, k, hidden);
    rng::Stream s = rng::Stream::root(seed).fork("init");
    const double a1 = 1.0 / std::sqrt(static_cast<double>(d));
    for (auto& w : p.w1) w = s.uniform(-a1, a1);
    for (auto& b : p.b1) b = s.uniform(-a1, a1);
    const double a2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    for (auto& w : p.w2) w = s.uniform(-a2, a2);
    for (auto& b : p.b2) b = s.uniform(-a2, a2);
    return p;
  }

  size_t size() const { return w1.size() + b1.size() + w2.size() + b2.size(); }
};

struct PredictiveDistribution {
  Vec probs;  // strictly positive, sums to 1 within 1e-9
};

enum class TrainMode { ProdM, ProdD, SingleSample };
enum class Optimizer { Sgd, AdamStyle };

struct TrainConfig {
  TrainMode mode = TrainMode::ProdM;
  int epochs = 200;
  int batch_size = 128;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  Optimizer optimizer = Optimizer::AdamStyle;
  int hidden = 512;
};

inline void validate(const TrainConfig& cfg) {
  if (cfg.epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (cfg.batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (cfg.learning_rate <= 0.0) throw ArgumentError("learning_rate must be positive");
  if (cfg.hidden < 1) throw ArgumentError("hidden must be >= 1");
}

struct TrainExample {
  Vec phi;
  Vec target;  // K-simplex vector; one-hot for hard targets
};

// ---------------------------------------------------------------------------
// Forward pass and losses
// ---------------------------------------------------------------------------

namespace detail {

inline void affine_relu(const PredictorParams& p, const Vec& phi, Vec& pre, Vec& h) {
  pre.resize(p.hidden);
  h.resize(p.hidden);
  for (int i = 0; i < p.hidden; ++i) {
    const double* row = &p.w1[static_cast<size_t>(i) * p.d];
    double s = p.b1[i];
    for (int j = 0; j < p.d; ++j) s += row[j] * phi[j];
    pre[i] = s;
    h[i] = s > 0.0 ? s : 0.0;
  }
}

inline void logits_of(const PredictorParams& p, const Vec& h, Vec& logits) {
  logits.resize(p.k);
  for (int i = 0; i < p.k; ++i) {
    const double* row = &p.w2[static_cast<size_t>(i) * p.hidden];
    double s = p.b2[i];
    for (int j = 0; j < p.hidden; ++j) s += row[j] * h[j];
    logits[i] = s;
  }
}

inline void softmax_inplace(Vec& z) {
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (double& x : z) {
    x = std::exp(x - zmax);
    sum += x;
  }
  for (double& x : z) x /= sum;
}

}  // namespace detail

inline PredictiveDistribution forward(const PredictorParams& p, const Vec& phi) {
  if (static_cast<int>(phi.size()) != p.d) throw ArgumentError("feature dimension mismatch");
  for (double x : phi)
    if (!std::isfinite(x)) throw ArgumentError("non-finite feature value");
  Vec pre, h, logits;
  detail::affine_relu(p, phi, pre, h);
  detail::logits_of(p, h, logits);
  detail::softmax_inplace(logits);
  return {std::move(logits)};
}

/// Hard cross-entropy against a one-hot target.
inline double loss_hard(const PredictiveDistribution& q, const Vec& onehot) {
  if (q.probs.size() != onehot.size()) throw ArgumentError("target dimension mismatch");
  double loss = 0.0;
  for (size_t k = 0; k < onehot.size(); ++k)
    if (onehot[k] != 0.0) loss -= onehot[k] * std::log(q.probs[k]);
  return loss;
}

/// Soft cross-entropy against a histogram target; minimized at q = hist with
/// value entropy(hist).
inline double loss_soft(const PredictiveDistribution& q, const Vec& hist) {
  if (q.probs.size() != hist.size()) throw ArgumentError("target dimension mismatch");
  double loss = 0.0;
  for (size_t k = 0; k < hist.size(); ++k)
    if (hist[k] != 0.0) loss -= hist[k] * std::log(q.probs[k]);
  return loss;
}

inline double entropy(const Vec& p) {
  double h = 0.0;
  for (double x : p)
    if (x > 0.0) h -= x * std::log(x);
  return h;
}

// ---------------------------------------------------------------------------
// Gradients
// ---------------------------------------------------------------------------

struct Gradients {
  Vec w1, b1, w2, b2;

  static Gradients zeros(const PredictorParams& p) {
    Gradients g;
    g.w1.assign(p.w1.size(), 0.0);
    g.b1.assign(p.b1.size(), 0.0);
    g.w2.assign(p.w2.size(), 0.0);
    g.b2.assign(p.b2.size(), 0.0);
    return g;
  }

  void scale(double c) {
    for (auto* v : {&w1, &b1, &w2, &b2})
      for (double& x : *v) x *= c;
  }
};

namespace detail {

// Cross-entropy backprop for one example; both losses share dlogits = q - target.
inline double accumulate_gradients(const PredictorParams& p, const Vec& phi, const Vec& target, Gradients& g) {
  Vec pre, h, q;
  affine_relu(p, phi, pre, h);
  logits_of(p, h, q);
  softmax_inplace(q);

  double loss = 0.0;
  for (int k = 0; k < p.k; ++k)
    if (target[k] != 0.0) loss -= target[k] * std::log(q[k]);

  Vec dlogits(p.k);
  for (int k = 0; k < p.k; ++k) dlogits[k] = q[k] - target[k];

  Vec dh(p.hidden, 0.0);
  for (int i = 0; i < p.k; ++i) {
    const double di = dlogits[i];
    double* gw2 = &g.w2[static_cast<size_t>(i) * p.hidden];
    const double* w2row = &p.w2[static_cast<size_t>(i) * p.hidden];
    for (int j = 0; j < p.hidden; ++j) {
      gw2[j] += di * h[j];
      dh[j] += di * w2row[j];
    }
    g.b2[i] += di;
  }
  for (int i = 0; i < p.hidden; ++i) {
    if (pre[i] <= 0.0) continue;
    const double di = dh[i];
    double* gw1 = &g.w1[static_cast<size_t>(i) * p.d];
    for (int j = 0; j < p.d; ++j) gw1[j] += di * phi[j];
    g.b1[i] += di;
  }
  return loss;
}

}  // namespace detail

/// Exact analytic gradients of the selected loss for one example.
inline Gradients gradients(const PredictorParams& p, const Vec& phi, const Vec& target) {
  if (static_cast<int>(phi.size()) != p.d || static_cast<int>(target.size()) != p.k)
    throw ArgumentError("shape mismatch");
  Gradients g = Gradients::zeros(p);
  detail::accumulate_gradients(p, phi, target, g);
  return g;
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

struct TrainResult {
  PredictorParams params;
  Vec epoch_loss;  // mean training loss per epoch
};

namespace detail {

struct AdamState {
  Vec m, v;
  int t = 0;

  explicit AdamState(size_t n) : m(n, 0.0), v(n, 0.0) {}

  void step(Vec& params, const Vec& grad, double lr) {
    ++t;
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    const double c1 = 1.0 - std::pow(b1, t);
    const double c2 = 1.0 - std::pow(b2, t);
    for (size_t i = 0; i < params.size(); ++i) {
      m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
      v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
      params[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
  }
};

}  // namespace detail

/// Mini-batch training, deterministic under cfg.seed: seeded shuffling and a
/// fixed parameter update order (w1, b1, w2, b2).
inline TrainResult train(const std::vector<TrainExample>& dataset, const TrainConfig& cfg) {
  validate(cfg);
  if (dataset.empty()) throw ArgumentError("train needs a non-empty dataset");
  const int d = static_cast<int>(dataset.front().phi.size());
  const int k = static_cast<int>(dataset.front().target.size());
  for (const auto& ex : dataset) {
    if (static_cast<int>(ex.phi.size()) != d || static_cast<int>(ex.target.size()) != k)
      throw ArgumentError("dataset shapes are inconsistent");
    if (cfg.mode != TrainMode::ProdD) {
      int ones = 0;
      for (double t : ex.target) ones += (t == 1.0) ? 1 : 0;
      if (ones != 1) throw ArgumentError("hard-target modes need one-hot targets");
    }
  }

  TrainResult result;
  result.params = PredictorParams::init(d, k, cfg.seed, cfg.hidden);
  PredictorParams& p = result.params;

  detail::AdamState adam_w1(p.w1.size()), adam_b1(p.b1.size()), adam_w2(p.w2.size()), adam_b2(p.b2.size());
  rng::Stream shuffle_stream = rng::Stream::root(cfg.seed).fork("shuffle");

  std::vector<size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), size_t{0});
  result.epoch_loss.reserve(cfg.epochs);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng::Stream es = shuffle_stream.fork(static_cast<uint64_t>(epoch));
    for (size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[es.below(i)]);

    double epoch_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      Gradients g = Gradients::zeros(p);
      double batch_loss = 0.0;
      for (size_t i = start; i < end; ++i) {
        const TrainExample& ex = dataset[order[i]];
        batch_loss += detail::accumulate_gradients(p, ex.phi, ex.target, g);
      }
      const double inv = 1.0 / static_cast<double>(end - start);
      g.scale(inv);
      epoch_sum += batch_loss;
      if (cfg.optimizer == Optimizer::AdamStyle) {
        adam_w1.step(p.w1, g.w1, cfg.learning_rate);
        adam_b1.step(p.b1, g.b1, cfg.learning_rate);
        adam_w2.step(p.w2, g.w2, cfg.learning_rate);
        adam_b2.step(p.b2, g.b2, cfg.learning_rate);
      } else {
        linalg::axpy(-cfg.learning_rate, g.w1, p.w1);
        linalg::axpy(-cfg.learning_rate, g.b1, p.b1);
        linalg::axpy(-cfg.learning_rate, g.w2, p.w2);
        linalg::axpy(-cfg.learning_rate, g.b2, p.b2);
      }
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(dataset.size()));
  }
  return result;
}

// ---------------------------------------------------------------------------
// Median decoding
// ---------------------------------------------------------------------------

/// Locates the first bin where cumulative mass reaches 0.5 and interpolates
/// linearly inside it. The open last bin decodes with a finite borrowed width.
inline double decode_median(const Vec& probs, const BinGrid& grid) {
  if (static_cast<int>(probs.size()) != grid.bins()) throw ArgumentError("probs/grid size mismatch");
  double cum = 0.0;
  for (int k = 0; k < grid.bins(); ++k) {
    const double next = cum + probs[k];
    if (next >= 0.5) {
      return grid.left(k) + (0.5 - cum) / probs[k] * grid.decode_width(k);
    }
    cum = next;
  }
  // Mass sums to 1, so the loop exits above; guard for degenerate rounding.
  const int last = grid.bins() - 1;
  return grid.left(last) + grid.decode_width(last);
}

inline double decode_median(const PredictiveDistribution& q, const BinGrid& grid) {
  return decode_median(q.probs, grid);
}

}  // namespace prod::predictor
