#include <doctest.h>

#include <algorithm>
#include <vector>

#include "prod/labelkit.hpp"
#include "prod/rng.hpp"

using namespace prod;
using labelkit::BinGrid;
using labelkit::BinPolicy;

namespace {

lengthdist::SamplePool pool_of(std::vector<int> lengths) {
  lengthdist::SamplePool p;
  p.prompt_id = "t";
  p.lengths = std::move(lengths);
  return p;
}

}  // namespace

TEST_CASE("sample_median order statistics") {
  CHECK(labelkit::sample_median({5}) == 5.0);
  CHECK(labelkit::sample_median({1, 2, 3}) == 2.0);
  CHECK(labelkit::sample_median({1, 2, 100, 101}) == 51.0);
  CHECK_THROWS_AS(labelkit::sample_median({}), ArgumentError);

  // one outlier in sixteen samples does not move the median
  std::vector<int> pool(16, 100);
  pool[7] = 5000;
  CHECK(labelkit::sample_median(pool) == 100.0);
}

TEST_CASE("sample_median is permutation-invariant and shift-equivariant") {
  rng::Stream s = rng::Stream::root(3);
  for (int rep = 0; rep < 200; ++rep) {
    const int n = 1 + static_cast<int>(s.below(20));
    std::vector<int> xs(n);
    for (auto& x : xs) x = static_cast<int>(s.below(1000));
    const double m = labelkit::sample_median(xs);

    std::vector<int> shuffled = xs;
    for (size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[s.below(i)]);
    CHECK(labelkit::sample_median(shuffled) == m);

    const int c = static_cast<int>(s.below(100));
    std::vector<int> shifted = xs;
    for (auto& x : shifted) x += c;
    CHECK(labelkit::sample_median(shifted) == doctest::Approx(m + c).epsilon(1e-12));
  }
}

TEST_CASE("replacing one element moves the median at most one central gap") {
  rng::Stream s = rng::Stream::root(5);
  for (int rep = 0; rep < 300; ++rep) {
    const int n = 3 + static_cast<int>(s.below(18));
    std::vector<int> xs(n);
    for (auto& x : xs) x = static_cast<int>(s.below(500));
    const double m = labelkit::sample_median(xs);

    std::vector<int> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    const size_t mid = sorted.size() / 2;
    double allowed = 0.0;
    if (n % 2 == 1) {
      allowed = static_cast<double>(sorted[mid + 1] - sorted[mid]);
    } else {
      allowed = 0.5 * static_cast<double>(sorted[mid + 1] - sorted[mid - 1]);
    }

    std::vector<int> corrupted = xs;
    corrupted[s.below(n)] = 1000000000;
    const double shifted = labelkit::sample_median(corrupted);
    CHECK(shifted - m >= -1e-12);
    CHECK(shifted - m <= allowed + 1e-12);
  }
}

TEST_CASE("equal-width grid uses the nearest-rank 99th percentile") {
  std::vector<int> lengths(100);
  for (int i = 0; i < 100; ++i) lengths[i] = i + 1;
  const BinGrid grid = labelkit::make_bin_grid(lengths, 4, BinPolicy::EqualWidth);
  REQUIRE(grid.bins() == 4);
  CHECK(grid.edges[0] == 0.0);
  CHECK(grid.edges[1] == doctest::Approx(24.75).epsilon(1e-12));
  CHECK(grid.edges[2] == doctest::Approx(49.5).epsilon(1e-12));
  CHECK(grid.edges[3] == doctest::Approx(74.25).epsilon(1e-12));
  CHECK(grid.edges[4] == doctest::Approx(99.0).epsilon(1e-12));
  CHECK(grid.open_last);
  CHECK(grid.bin_index(1000) == 3);  // open last bin keeps the map total
}

TEST_CASE("equal-width grid widens an all-constant sample") {
  const BinGrid grid = labelkit::make_bin_grid({7, 7, 7, 7}, 3, BinPolicy::EqualWidth);
  REQUIRE(grid.bins() == 3);
  CHECK(grid.edges.front() == 0.0);
  CHECK(grid.edges.back() == doctest::Approx(8.0));
  for (int k = 0; k < 3; ++k) CHECK(grid.decode_width(k) > 0.0);
}

TEST_CASE("quantile grid splits at interpolated quantiles") {
  const BinGrid grid = labelkit::make_bin_grid({10, 20, 30, 40}, 2, BinPolicy::Quantile);
  REQUIRE(grid.bins() == 2);
  CHECK(grid.edges[0] == doctest::Approx(10.0));
  CHECK(grid.edges[1] == doctest::Approx(25.0));
  CHECK(grid.edges[2] == doctest::Approx(40.0));
}

TEST_CASE("quantile grid merges duplicate edges and reports the reduction") {
  labelkit::GridBuildInfo info;
  const BinGrid grid = labelkit::make_bin_grid({1, 1, 1, 1, 1, 1, 1, 9}, 4, BinPolicy::Quantile, &info);
  CHECK(info.requested_bins == 4);
  CHECK(info.merged_bins == grid.bins());
  CHECK(grid.bins() < 4);
  CHECK_THROWS_AS(labelkit::make_bin_grid({3, 3, 3}, 2, BinPolicy::Quantile), GridError);
}

TEST_CASE("make_bin_grid rejects bad arguments") {
  CHECK_THROWS_AS(labelkit::make_bin_grid({1, 2, 3}, 1, BinPolicy::EqualWidth), ArgumentError);
  CHECK_THROWS_AS(labelkit::make_bin_grid({}, 4, BinPolicy::EqualWidth), ArgumentError);
}

TEST_CASE("interior edges belong to the bin on their right") {
  BinGrid grid;
  grid.edges = {0.0, 10.0, 20.0};
  grid.open_last = false;
  CHECK(grid.bin_index(10.0) == 1);
  CHECK(grid.bin_index(9.999) == 0);
  CHECK(grid.bin_index(0.0) == 0);
  CHECK_THROWS_AS(grid.bin_index(-1.0), GridError);
}

TEST_CASE("project_histogram counts exactly") {
  BinGrid grid;
  grid.edges = {0.0, 10.0, 20.0, 30.0};
  grid.open_last = false;

  const auto label = labelkit::project_histogram(pool_of({5, 15, 15, 25}), grid);
  REQUIRE(label.hist.size() == 3);
  CHECK(label.hist[0] == doctest::Approx(0.25));
  CHECK(label.hist[1] == doctest::Approx(0.5));
  CHECK(label.hist[2] == doctest::Approx(0.25));

  const auto onebin = labelkit::project_histogram(pool_of({3, 4, 5}), grid);
  CHECK(onebin.hist[0] == 1.0);
  CHECK(onebin.hist[1] == 0.0);

  CHECK_THROWS_AS(labelkit::project_histogram(pool_of({-2}), grid), GridError);
}

TEST_CASE("histogram counts are integers summing to the pool size") {
  rng::Stream s = rng::Stream::root(23);
  for (int rep = 0; rep < 100; ++rep) {
    const int r = 1 + static_cast<int>(s.below(40));
    std::vector<int> lengths(r);
    for (auto& L : lengths) L = 1 + static_cast<int>(s.below(300));

    BinGrid grid = labelkit::make_bin_grid(lengths, 10, BinPolicy::EqualWidth);
    const auto label = labelkit::project_histogram(pool_of(lengths), grid);

    int total = 0;
    double hist_sum = 0.0;
    for (size_t k = 0; k < label.counts.size(); ++k) {
      total += label.counts[k];
      hist_sum += label.hist[k];
      CHECK(label.hist[k] == doctest::Approx(static_cast<double>(label.counts[k]) / r).epsilon(1e-15));
    }
    CHECK(total == r);
    CHECK(hist_sum == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("median labels one-hot at the median's bin") {
  BinGrid grid;
  grid.edges = {0.0, 10.0, 20.0};
  grid.open_last = false;

  const auto label = labelkit::make_median_label(pool_of({1, 2, 3}), grid);
  CHECK(label.median_length == 2.0);
  CHECK(label.onehot == std::vector<double>{1.0, 0.0});

  // median exactly on an interior edge follows the half-open rule
  const auto edge_label = labelkit::make_median_label(pool_of({10}), grid);
  CHECK(edge_label.onehot == std::vector<double>{0.0, 1.0});

  BinGrid wide;
  wide.edges = {0.0, 50.0, 100.0};
  const auto point = labelkit::make_median_label(pool_of(std::vector<int>(5, 42)), wide);
  CHECK(point.onehot == std::vector<double>{1.0, 0.0});
}

TEST_CASE("point-mass pools put the median label at the histogram argmax") {
  rng::Stream s = rng::Stream::root(29);
  for (int rep = 0; rep < 50; ++rep) {
    const int value = 1 + static_cast<int>(s.below(200));
    const auto pool = pool_of(std::vector<int>(7, value));
    BinGrid grid = labelkit::make_bin_grid({1, 50, 100, 150, 200, 250}, 5, BinPolicy::EqualWidth);

    const auto med = labelkit::make_median_label(pool, grid);
    const auto hist = labelkit::project_histogram(pool, grid);
    const auto argmax = std::max_element(hist.hist.begin(), hist.hist.end()) - hist.hist.begin();
    const auto onehot_at = std::max_element(med.onehot.begin(), med.onehot.end()) - med.onehot.begin();
    CHECK(argmax == onehot_at);
  }
}
