#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <vector>

#include "rac/error.hpp"
#include "rac/matrix.hpp"
#include "rac/rng.hpp"

namespace rac {

struct KmeansResult {
  Matrix<float> centroids;               // M x dim
  std::vector<std::uint32_t> assignment; // point -> cluster, consistent with centroids
  std::vector<double> inertia_trace;     // sum of squared distances after each assignment step
  bool converged = false;

  double inertia() const { return inertia_trace.empty() ? 0.0 : inertia_trace.back(); }
};

namespace detail {

inline std::uint32_t nearest_centroid(std::span<const float> p, const Matrix<double>& centroids) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

}  // namespace detail

/// Nearest centroid by Euclidean distance, ties to the lowest cluster id.
inline std::uint32_t nearest_centroid(std::span<const float> p, const Matrix<float>& centroids) {
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<std::uint32_t>(c);
    }
  }
  return best;
}

/// Lloyd's algorithm with k-means++ seeding. Runs until the assignment
/// reaches a fixed point or `iters` iterations, whichever comes first.
/// Clusters that empty out are repaired by handing them the farthest member
/// of the largest cluster. All distance work accumulates in doubles; the
/// returned centroids are float32 and the returned assignment is the
/// nearest-centroid map against exactly those float32 centroids.
inline KmeansResult kmeans(const Matrix<float>& points, std::size_t m, std::size_t iters,
                           std::uint64_t seed) {
  const std::size_t p_count = points.rows();
  const std::size_t dim = points.cols();
  if (m == 0 || m > p_count) {
    throw InvalidInputError("kmeans: cluster count " + std::to_string(m) +
                            " must lie in [1, " + std::to_string(p_count) + "]");
  }
  if (iters == 0) {
    throw InvalidInputError("kmeans: at least one iteration required");
  }

  SplitMix64 rng = SplitMix64::stream(seed, 0x6b6d6561);

  // k-means++ seeding.
  Matrix<double> centroids(m, dim);
  std::vector<double> d2(p_count, std::numeric_limits<double>::infinity());
  std::vector<double> cum(p_count);
  auto set_centroid = [&](std::size_t c, std::size_t point) {
    const auto row = points.row(point);
    for (std::size_t j = 0; j < dim; ++j) centroids(c, j) = static_cast<double>(row[j]);
  };
  set_centroid(0, rng.below(p_count));
  for (std::size_t c = 1; c < m; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < p_count; ++i) {
      const double d = squared_distance(points.row(i), centroids.row(c - 1));
      d2[i] = std::min(d2[i], d);
      total += d2[i];
      cum[i] = total;
    }
    std::size_t pick;
    if (total > 0.0) {
      const double u = rng.next_double() * total;
      pick = static_cast<std::size_t>(
          std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
      pick = std::min(pick, p_count - 1);
    } else {
      pick = rng.below(p_count);  // all remaining points coincide with a centroid
    }
    set_centroid(c, pick);
  }

  KmeansResult res;
  std::vector<std::uint32_t> assignment(p_count, 0);
  std::vector<std::uint32_t> prev_assignment;
  std::vector<std::size_t> cluster_size(m);

  for (std::size_t iter = 0; iter < iters; ++iter) {
    double inertia = 0.0;
    std::fill(cluster_size.begin(), cluster_size.end(), 0);
    for (std::size_t i = 0; i < p_count; ++i) {
      const std::uint32_t c = detail::nearest_centroid(points.row(i), centroids);
      assignment[i] = c;
      ++cluster_size[c];
      inertia += squared_distance(points.row(i), centroids.row(c));
    }
    res.inertia_trace.push_back(inertia);
    if (assignment == prev_assignment) {
      res.converged = true;
      break;
    }

    // Repair empty clusters before the mean update.
    for (std::size_t c = 0; c < m; ++c) {
      if (cluster_size[c] != 0) continue;
      const std::size_t donor = static_cast<std::size_t>(
          std::max_element(cluster_size.begin(), cluster_size.end()) - cluster_size.begin());
      std::size_t farthest = p_count;
      double far_d = -1.0;
      for (std::size_t i = 0; i < p_count; ++i) {
        if (assignment[i] != donor) continue;
        const double d = squared_distance(points.row(i), centroids.row(donor));
        if (d > far_d) {
          far_d = d;
          farthest = i;
        }
      }
      assignment[farthest] = static_cast<std::uint32_t>(c);
      --cluster_size[donor];
      ++cluster_size[c];
    }

    prev_assignment = assignment;

    // Mean update.
    Matrix<double> sums(m, dim);
    std::fill(cluster_size.begin(), cluster_size.end(), 0);
    for (std::size_t i = 0; i < p_count; ++i) {
      const auto row = points.row(i);
      auto s = sums.row(assignment[i]);
      for (std::size_t j = 0; j < dim; ++j) s[j] += static_cast<double>(row[j]);
      ++cluster_size[assignment[i]];
    }
    for (std::size_t c = 0; c < m; ++c) {
      const double inv = 1.0 / static_cast<double>(cluster_size[c]);
      for (std::size_t j = 0; j < dim; ++j) centroids(c, j) = sums(c, j) * inv;
    }
  }

  // Freeze centroids to float32 and make the assignment consistent with the
  // frozen values, so indexes built on top can be serialized losslessly.
  res.centroids = Matrix<float>(m, dim);
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t j = 0; j < dim; ++j) {
      res.centroids(c, j) = static_cast<float>(centroids(c, j));
    }
  }
  std::fill(cluster_size.begin(), cluster_size.end(), 0);
  for (std::size_t i = 0; i < p_count; ++i) {
    assignment[i] = nearest_centroid(points.row(i), res.centroids);
    ++cluster_size[assignment[i]];
  }
  for (std::size_t c = 0; c < m; ++c) {
    if (cluster_size[c] != 0) continue;
    const std::size_t donor = static_cast<std::size_t>(
        std::max_element(cluster_size.begin(), cluster_size.end()) - cluster_size.begin());
    std::size_t farthest = p_count;
    double far_d = -1.0;
    for (std::size_t i = 0; i < p_count; ++i) {
      if (assignment[i] != donor) continue;
      const double d = squared_distance(points.row(i), res.centroids.row(donor));
      if (d > far_d) {
        far_d = d;
        farthest = i;
      }
    }
    assignment[farthest] = static_cast<std::uint32_t>(c);
    --cluster_size[donor];
    ++cluster_size[c];
  }
  res.assignment = std::move(assignment);
  return res;
}

}  // namespace rac
