/**
 * @file kmeans.hpp
 * @brief Lloyd's k-means with k-means++ seeding over dense row vectors.
 */
#pragma once

#include <algorithm>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "popgen/random.hpp"

namespace popgen {

struct KMeansResult {
  std::vector<std::vector<double>> centroids;
  std::vector<std::size_t> labels;
};

struct KMeansOptions {
  std::size_t k = 10;
  int max_iterations = 50;
  std::uint64_t seed = 0;
};

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i] - b[i];
    d += x * x;
  }
  return d;
}

namespace detail {

inline std::size_t nearest_centroid(const std::vector<double>& p, const std::vector<std::vector<double>>& centroids,
                                    double* dist = nullptr) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = squared_distance(p, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (dist) *dist = best_d;
  return best;
}

}  // namespace detail

/// Clusters `points` (all of equal dimension). k is reduced to the number of
/// distinct points. Empty clusters are re-seeded from the point farthest
/// from its assigned centroid.
inline KMeansResult kmeans(const std::vector<std::vector<double>>& points, KMeansOptions opt) {
  KMeansResult out;
  if (points.empty()) return out;
  std::vector<std::vector<double>> distinct = points;
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  const std::size_t k = std::min(opt.k, distinct.size());

  Rng rng(opt.seed);
  auto& centroids = out.centroids;
  centroids.push_back(points[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<std::int64_t>(points.size()) - 1))]);
  std::vector<double> d2(points.size());
  while (centroids.size() < k) {
    for (std::size_t i = 0; i < points.size(); ++i) detail::nearest_centroid(points[i], centroids, &d2[i]);
    centroids.push_back(points[sample_index(rng, d2)]);
  }

  out.labels.assign(points.size(), 0);
  const std::size_t dim = points.front().size();
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    bool changed = iter == 0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const std::size_t c = detail::nearest_centroid(points[i], centroids, &d2[i]);
      if (c != out.labels[i]) changed = true;
      out.labels[i] = c;
    }
    if (!changed) break;

    std::vector<std::vector<double>> sums(k, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < points.size(); ++i) {
      ++counts[out.labels[i]];
      for (std::size_t j = 0; j < dim; ++j) sums[out.labels[i]][j] += points[i][j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) {
        const auto far = static_cast<std::size_t>(std::max_element(d2.begin(), d2.end()) - d2.begin());
        centroids[c] = points[far];
        d2[far] = 0.0;
        continue;
      }
      for (std::size_t j = 0; j < dim; ++j) centroids[c][j] = sums[c][j] / static_cast<double>(counts[c]);
    }
  }
  for (std::size_t i = 0; i < points.size(); ++i) out.labels[i] = detail::nearest_centroid(points[i], centroids);
  return out;
}

}  // namespace popgen
