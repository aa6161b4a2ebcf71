#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "prod/errors.hpp"
#include "prod/lengthdist.hpp"

namespace prod::labelkit {

using lengthdist::SamplePool;

// ---------------------------------------------------------------------------
// Bin grid
// ---------------------------------------------------------------------------

// K ordered bins over length space. Bins are half-open [left, right); a value
// on an interior edge belongs to the bin on its right. The mapping is total on
// [edges[0], inf): anything at or beyond edges[K-1] lands in the last bin.
// `open_last` marks the last bin as unbounded above its nominal edge.
struct BinGrid {
  std::vector<double> edges;  // K+1 strictly increasing nominal edges, tokens
  bool open_last = true;

  int bins() const { return static_cast<int>(edges.size()) - 1; }

  int bin_index(double length) const {
    if (length < edges.front())
      throw GridError("length " + std::to_string(length) + " below grid start " + std::to_string(edges.front()));
    const auto it = std::upper_bound(edges.begin(), edges.end(), length);
    const int idx = static_cast<int>(it - edges.begin()) - 1;
    return std::min(idx, bins() - 1);
  }

  double left(int k) const { return edges[k]; }

  // Finite decode width; the open last bin borrows the second-to-last width.
  double decode_width(int k) const {
    const int n = bins();
    if (k == n - 1 && open_last && n >= 2) return edges[n - 1] - edges[n - 2];
    return edges[k + 1] - edges[k];
  }

  void check() const {
    if (edges.size() < 2) throw GridError("grid needs at least one bin");
    for (size_t i = 1; i < edges.size(); ++i)
      if (!(edges[i] > edges[i - 1])) throw GridError("edges must be strictly increasing");
  }
};

enum class BinPolicy { EqualWidth, Quantile };

struct MedianLabel {
  std::string prompt_id;
  double median_length = 0.0;
  std::vector<double> onehot;  // exactly one 1, at bin_index(median_length)
};

struct DistLabel {
  std::string prompt_id;
  std::vector<int> counts;    // per-bin sample counts, sum = r
  std::vector<double> hist;   // counts / r
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

/// Sample median: middle order statistic for odd counts, midpoint of the two
/// middle order statistics for even counts.
inline double sample_median(std::vector<int> lengths) {
  if (lengths.empty()) throw ArgumentError("sample_median needs a non-empty list");
  std::sort(lengths.begin(), lengths.end());
  const size_t n = lengths.size();
  if (n % 2 == 1) return static_cast<double>(lengths[n / 2]);
  return 0.5 * (static_cast<double>(lengths[n / 2 - 1]) + static_cast<double>(lengths[n / 2]));
}

inline double sample_median_real(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("sample_median needs a non-empty list");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Nearest-rank percentile: the ceil(q*n)-th smallest value. q in (0, 1].
inline double percentile_nearest_rank(std::vector<int> values, double q) {
  if (values.empty()) throw ArgumentError("percentile of empty list");
  std::sort(values.begin(), values.end());
  const size_t n = values.size();
  size_t rank = static_cast<size_t>(std::ceil(q * static_cast<double>(n)));
  rank = std::clamp<size_t>(rank, 1, n);
  return static_cast<double>(values[rank - 1]);
}

// Linear-interpolation empirical quantile on sorted data (h = (n-1)q).
inline double quantile_interpolated(const std::vector<int>& sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return static_cast<double>(sorted[0]);
  const double h = q * static_cast<double>(n - 1);
  const size_t lo = static_cast<size_t>(std::floor(h));
  const size_t hi = std::min(lo + 1, n - 1);
  const double frac = h - static_cast<double>(lo);
  return static_cast<double>(sorted[lo]) + frac * (static_cast<double>(sorted[hi]) - static_cast<double>(sorted[lo]));
}

struct GridBuildInfo {
  int requested_bins = 0;
  int merged_bins = 0;  // after duplicate-edge merging (quantile policy)
};

/// Equal-width: K uniform bins on [0, bin_max] with bin_max the nearest-rank
/// 99th percentile of the training lengths and an open last bin. All-equal
/// inputs widen bin_max by one token to keep widths positive.
/// Quantile: edges at interpolated empirical quantiles, duplicates merged.
inline BinGrid make_bin_grid(const std::vector<int>& train_lengths, int K, BinPolicy policy,
                             GridBuildInfo* info = nullptr) {
  if (K < 2) throw ArgumentError("K must be >= 2");
  if (train_lengths.empty()) throw ArgumentError("make_bin_grid needs training lengths");
  if (info) info->requested_bins = K;

  BinGrid grid;
  if (policy == BinPolicy::EqualWidth) {
    const bool all_equal =
        std::all_of(train_lengths.begin(), train_lengths.end(), [&](int v) { return v == train_lengths.front(); });
    double bin_max = all_equal ? static_cast<double>(train_lengths.front()) + 1.0
                               : percentile_nearest_rank(train_lengths, 0.99);
    if (bin_max <= 0.0) bin_max = 1.0;
    grid.edges.resize(K + 1);
    for (int i = 0; i <= K; ++i) grid.edges[i] = bin_max * static_cast<double>(i) / K;
    grid.open_last = true;
    if (info) info->merged_bins = K;
  } else {
    std::vector<int> sorted = train_lengths;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> edges;
    edges.reserve(K + 1);
    for (int i = 0; i <= K; ++i) {
      const double e = quantile_interpolated(sorted, static_cast<double>(i) / K);
      if (edges.empty() || e > edges.back()) edges.push_back(e);
    }
    if (edges.size() < 2) throw GridError("degenerate grid: all training lengths identical under quantile policy");
    grid.edges = std::move(edges);
    grid.open_last = false;
    if (info) info->merged_bins = grid.bins();
  }
  grid.check();
  return grid;
}

/// Exact per-bin counts of the pool over the grid; hist entries are count/r.
inline DistLabel project_histogram(const SamplePool& pool, const BinGrid& grid) {
  if (pool.lengths.empty()) throw ArgumentError("empty sample pool");
  DistLabel label;
  label.prompt_id = pool.prompt_id;
  label.counts.assign(grid.bins(), 0);
  for (int L : pool.lengths) ++label.counts[grid.bin_index(L)];
  const double r = static_cast<double>(pool.lengths.size());
  label.hist.resize(label.counts.size());
  for (size_t k = 0; k < label.counts.size(); ++k) label.hist[k] = static_cast<double>(label.counts[k]) / r;
  return label;
}

inline MedianLabel make_median_label(const SamplePool& pool, const BinGrid& grid) {
  MedianLabel label;
  label.prompt_id = pool.prompt_id;
  label.median_length = sample_median(pool.lengths);
  label.onehot.assign(grid.bins(), 0.0);
  label.onehot[grid.bin_index(label.median_length)] = 1.0;
  return label;
}

}  // namespace prod::labelkit
