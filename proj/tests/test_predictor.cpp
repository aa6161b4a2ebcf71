#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "prod/predictor.hpp"
#include "prod/rng.hpp"

using namespace prod;
using labelkit::BinGrid;
using linalg::Vec;
using predictor::PredictorParams;
using predictor::PredictiveDistribution;
using predictor::TrainConfig;
using predictor::TrainExample;

namespace {

BinGrid grid_of(std::vector<double> edges, bool open_last = false) {
  BinGrid g;
  g.edges = std::move(edges);
  g.open_last = open_last;
  return g;
}

Vec random_simplex(int k, rng::Stream& s) {
  Vec p(k);
  double sum = 0.0;
  for (auto& x : p) {
    x = 0.05 + s.next_double();
    sum += x;
  }
  for (auto& x : p) x /= sum;
  return p;
}

// Central finite differences over every parameter of the selected loss.
bool gradients_match_fd(const PredictorParams& params, const Vec& phi, const Vec& target) {
  const auto g = predictor::gradients(params, phi, target);
  const double h = 1e-5;

  auto loss_at = [&](const PredictorParams& p) {
    return predictor::loss_soft(predictor::forward(p, phi), target);
  };
  auto check_block = [&](const Vec& analytic, Vec PredictorParams::*block) {
    for (size_t i = 0; i < analytic.size(); ++i) {
      PredictorParams plus = params, minus = params;
      (plus.*block)[i] += h;
      (minus.*block)[i] -= h;
      const double fd = (loss_at(plus) - loss_at(minus)) / (2.0 * h);
      const double scale = std::max(std::abs(fd), std::abs(analytic[i]));
      if (scale <= 1e-7) continue;
      if (std::abs(fd - analytic[i]) > 1e-4 * scale) return false;
    }
    return true;
  };
  return check_block(g.w1, &PredictorParams::w1) && check_block(g.b1, &PredictorParams::b1) &&
         check_block(g.w2, &PredictorParams::w2) && check_block(g.b2, &PredictorParams::b2);
}

}  // namespace

TEST_CASE("forward of all-zero parameters is uniform") {
  const auto p = PredictorParams::zeros(3, 4);
  const auto q = predictor::forward(p, {0.1, -0.2, 0.3});
  for (double x : q.probs) CHECK(x == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("forward is invariant to constant logit shifts") {
  auto p = PredictorParams::init(4, 5, 7);
  const Vec phi{0.3, -0.1, 0.2, 0.4};
  const auto q0 = predictor::forward(p, phi);
  for (auto& b : p.b2) b += 3.7;
  const auto q1 = predictor::forward(p, phi);
  for (size_t k = 0; k < q0.probs.size(); ++k) CHECK(q0.probs[k] == doctest::Approx(q1.probs[k]).epsilon(1e-12));
}

TEST_CASE("crafted logits produce the closed-form softmax") {
  auto p = PredictorParams::zeros(2, 2);
  p.b2 = {0.0, std::log(3.0)};
  const auto q = predictor::forward(p, {0.0, 0.0});
  CHECK(q.probs[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q.probs[1] == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("forward output is a strictly positive distribution") {
  rng::Stream s = rng::Stream::root(55);
  for (int rep = 0; rep < 30; ++rep) {
    const auto p = PredictorParams::init(6, 10, s.next_u64());
    Vec phi(6);
    for (auto& x : phi) x = s.uniform(-1.0, 1.0);
    const auto q = predictor::forward(p, phi);
    double sum = 0.0;
    for (double x : q.probs) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
  CHECK_THROWS_AS(predictor::forward(PredictorParams::zeros(2, 2), {std::nan(""), 0.0}), ArgumentError);
}

TEST_CASE("cross-entropy losses at reference points") {
  PredictiveDistribution uniform{{0.25, 0.25, 0.25, 0.25}};
  CHECK(predictor::loss_hard(uniform, {0.0, 1.0, 0.0, 0.0}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

  PredictiveDistribution smoothed{{0.9, 0.1 / 3, 0.1 / 3, 0.1 / 3}};
  CHECK(predictor::loss_hard(smoothed, {1.0, 0.0, 0.0, 0.0}) == doctest::Approx(-std::log(0.9)).epsilon(1e-12));

  PredictiveDistribution q{{0.9, 0.1}};
  CHECK(predictor::loss_soft(q, {0.5, 0.5}) == doctest::Approx(1.203972804325936).epsilon(1e-12));

  // soft loss at the target equals the target's entropy
  PredictiveDistribution at_target{{0.3, 0.2, 0.5}};
  CHECK(predictor::loss_soft(at_target, at_target.probs) ==
        doctest::Approx(predictor::entropy(at_target.probs)).epsilon(1e-12));

  // one-hot histogram reduces soft loss to the hard loss
  CHECK(predictor::loss_soft(q, {0.0, 1.0}) == doctest::Approx(predictor::loss_hard(q, {0.0, 1.0})).epsilon(1e-15));
}

TEST_CASE("KL non-negativity: soft loss dominates the target entropy") {
  rng::Stream s = rng::Stream::root(59);
  for (int rep = 0; rep < 300; ++rep) {
    const int k = 2 + static_cast<int>(s.below(10));
    const Vec q = random_simplex(k, s);
    const Vec p = random_simplex(k, s);
    CHECK(predictor::loss_soft({q}, p) + 1e-12 >= predictor::entropy(p));
  }
}

TEST_CASE("softmax cross-entropy gradient identity at zero parameters") {
  const auto p = PredictorParams::zeros(3, 4);
  const Vec phi{0.2, 0.1, -0.3};
  const Vec onehot{0.0, 0.0, 1.0, 0.0};
  const auto g = predictor::gradients(p, phi, onehot);
  for (int k = 0; k < 4; ++k) CHECK(g.b2[k] == doctest::Approx(0.25 - onehot[k]).epsilon(1e-12));
}

TEST_CASE("soft-loss gradient vanishes when the model already matches the target") {
  auto p = PredictorParams::zeros(2, 3);
  const Vec hist{0.2, 0.3, 0.5};
  for (int k = 0; k < 3; ++k) p.b2[k] = std::log(hist[k]);
  const auto g = predictor::gradients(p, {0.4, -0.4}, hist);
  for (double x : g.b2) CHECK(std::abs(x) <= 1e-10);
}

TEST_CASE("analytic gradients match finite differences") {
  rng::Stream s = rng::Stream::root(61);
  for (int rep = 0; rep < 5; ++rep) {
    auto params = PredictorParams::init(3, 4, s.next_u64(), 16);
    Vec phi(3);
    for (auto& x : phi) x = s.uniform(-1.0, 1.0);

    Vec onehot(4, 0.0);
    onehot[s.below(4)] = 1.0;
    CHECK(gradients_match_fd(params, phi, onehot));

    const Vec hist = random_simplex(4, s);
    CHECK(gradients_match_fd(params, phi, hist));
  }
}

TEST_CASE("training memorizes a single example") {
  TrainConfig cfg;
  cfg.epochs = 500;
  cfg.batch_size = 1;
  cfg.seed = 3;
  cfg.hidden = 64;

  std::vector<TrainExample> data{{{0.5, -0.2}, {0.0, 0.0, 1.0, 0.0}}};
  const auto result = predictor::train(data, cfg);
  const auto q = predictor::forward(result.params, data[0].phi);
  const auto argmax = std::max_element(q.probs.begin(), q.probs.end()) - q.probs.begin();
  CHECK(argmax == 2);
}

TEST_CASE("distribution training converges to a shared histogram target") {
  TrainConfig cfg;
  cfg.mode = predictor::TrainMode::ProdD;
  cfg.epochs = 400;
  cfg.batch_size = 16;
  cfg.seed = 9;
  cfg.hidden = 64;

  const Vec target{0.1, 0.25, 0.4, 0.2, 0.05};
  rng::Stream s = rng::Stream::root(71);
  std::vector<TrainExample> data;
  for (int i = 0; i < 64; ++i) {
    Vec phi(3);
    for (auto& x : phi) x = s.uniform(-1.0, 1.0);
    data.push_back({phi, target});
  }

  const auto result = predictor::train(data, cfg);
  for (const auto& ex : data) {
    const auto q = predictor::forward(result.params, ex.phi);
    double tv = 0.0;
    for (size_t k = 0; k < target.size(); ++k) tv += std::abs(q.probs[k] - target[k]);
    CHECK(tv / 2.0 <= 0.05);
  }
}

TEST_CASE("training is bit-deterministic under (dataset, config)") {
  TrainConfig cfg;
  cfg.epochs = 30;
  cfg.batch_size = 8;
  cfg.seed = 5;
  cfg.hidden = 32;

  rng::Stream s = rng::Stream::root(73);
  std::vector<TrainExample> data;
  for (int i = 0; i < 40; ++i) {
    Vec phi(4);
    for (auto& x : phi) x = s.uniform(-1.0, 1.0);
    Vec onehot(6, 0.0);
    onehot[s.below(6)] = 1.0;
    data.push_back({phi, onehot});
  }

  const auto a = predictor::train(data, cfg);
  const auto b = predictor::train(data, cfg);
  CHECK(a.epoch_loss == b.epoch_loss);
  CHECK(a.params.w1 == b.params.w1);

  CHECK_THROWS_AS(predictor::train({}, cfg), ArgumentError);
}

TEST_CASE("default-config loss log is non-increasing after smoothing") {
  TrainConfig cfg;  // default optimizer, lr, batch, 200 epochs
  cfg.seed = 11;
  cfg.hidden = 64;

  rng::Stream s = rng::Stream::root(79);
  std::vector<TrainExample> data;
  for (int i = 0; i < 256; ++i) {
    Vec phi(4);
    for (auto& x : phi) x = s.uniform(-1.0, 1.0);
    Vec onehot(8, 0.0);
    onehot[phi[0] > 0.0 ? (phi[1] > 0.0 ? 0 : 1) : (phi[1] > 0.0 ? 2 : 3)] = 1.0;
    data.push_back({phi, onehot});
  }

  const auto result = predictor::train(data, cfg);
  REQUIRE(result.epoch_loss.size() == 200);
  std::vector<double> smoothed;
  for (size_t i = 0; i + 5 <= result.epoch_loss.size(); ++i) {
    double w = 0.0;
    for (size_t j = i; j < i + 5; ++j) w += result.epoch_loss[j];
    smoothed.push_back(w / 5.0);
  }
  for (size_t i = 1; i < smoothed.size(); ++i) CHECK(smoothed[i] <= smoothed[i - 1] * (1.0 + 1e-3) + 1e-9);
}

TEST_CASE("hard-target modes reject non-one-hot targets") {
  TrainConfig cfg;
  cfg.epochs = 1;
  std::vector<TrainExample> data{{{0.1, 0.2}, {0.5, 0.5}}};
  CHECK_THROWS_AS(predictor::train(data, cfg), ArgumentError);
}

TEST_CASE("decode_median interpolates the 0.5 crossing") {
  CHECK(predictor::decode_median(Vec{1.0}, grid_of({10.0, 20.0})) == doctest::Approx(15.0));
  CHECK(predictor::decode_median(Vec{0.5, 0.5}, grid_of({0.0, 10.0, 20.0})) == doctest::Approx(10.0));
  CHECK(predictor::decode_median(Vec{0.25, 0.25, 0.5}, grid_of({0.0, 10.0, 20.0, 30.0})) == doctest::Approx(20.0));
}

TEST_CASE("one-hot distributions decode strictly inside their bin") {
  const auto grid = grid_of({0.0, 10.0, 20.0, 30.0}, true);
  for (int k = 0; k < 3; ++k) {
    Vec probs(3, 0.0);
    probs[k] = 1.0;
    const double decoded = predictor::decode_median(probs, grid);
    CHECK(decoded > grid.left(k));
    CHECK(decoded < grid.left(k) + grid.decode_width(k));
  }
}

TEST_CASE("decode_median respects first-order stochastic dominance") {
  rng::Stream s = rng::Stream::root(83);
  const auto grid = grid_of({0.0, 5.0, 17.0, 20.0, 44.0, 60.0});
  for (int rep = 0; rep < 300; ++rep) {
    const Vec q = random_simplex(5, s);
    const Vec other = random_simplex(5, s);

    // pointwise-min CDF dominates both of its sources
    Vec dominating(5);
    double cq = 0.0, co = 0.0, prev = 0.0;
    for (int k = 0; k < 5; ++k) {
      cq += q[k];
      co += other[k];
      const double cum = std::min(cq, co);
      dominating[k] = cum - prev;
      prev = cum;
    }
    CHECK(predictor::decode_median(dominating, grid) >= predictor::decode_median(q, grid) - 1e-12);
  }
}
