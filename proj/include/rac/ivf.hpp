#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "rac/error.hpp"
#include "rac/kmeans.hpp"
#include "rac/matrix.hpp"
#include "rac/mips.hpp"

namespace rac {

struct IvfParams {
  std::uint32_t cells = 0;
  std::uint32_t train_iters = 25;
  std::uint64_t seed = 0;
};

/// Inverted-file index over lifted keys: a k-means coarse quantizer plus one
/// posting list per cell. Immutable once built.
struct IvfIndex {
  IvfParams params;
  Matrix<float> centroids;                      // cells x (d+1)
  std::vector<std::vector<std::uint32_t>> posting;  // ascending ids, partition of 0..N-1
  AugmentedKeys stored;
  std::uint64_t catalog_hash = 0;

  std::size_t size() const { return stored.size(); }
};

/// The coarse quantizer trains on all lifted rows; no subsampling.
inline IvfIndex build_ivf(AugmentedKeys aug, std::uint32_t cells, std::uint32_t train_iters,
                          std::uint64_t seed) {
  if (cells == 0 || cells > aug.size()) {
    throw InvalidInputError("build_ivf: cell count must lie in [1, N]");
  }
  const KmeansResult km = kmeans(aug.rows, cells, train_iters, seed);
  IvfIndex index;
  index.params = IvfParams{cells, train_iters, seed};
  index.centroids = km.centroids;
  index.posting.resize(cells);
  for (std::size_t id = 0; id < km.assignment.size(); ++id) {
    index.posting[km.assignment[id]].push_back(static_cast<std::uint32_t>(id));
  }
  index.stored = std::move(aug);
  return index;
}

/// Scans the posting lists of the nprobe nearest cells; top-k of the scanned
/// rows by Euclidean distance, reported with inner-product scores against the
/// unlifted keys. Fewer than k scanned rows set the short_result flag.
inline RetrievalResult query_ivf(const IvfIndex& index, std::span<const float> q_aug,
                                 std::size_t k, std::size_t nprobe) {
  if (k == 0 || k > index.size()) {
    throw InvalidInputError("query_ivf: k must lie in [1, N]");
  }
  if (nprobe == 0 || nprobe > index.params.cells) {
    throw InvalidInputError("query_ivf: nprobe must lie in [1, cells]");
  }
  if (q_aug.size() != index.stored.rows.cols()) {
    throw InvalidInputError("query_ivf: query width does not match lifted rows");
  }

  detail::TopK cell_top(nprobe);
  for (std::size_t c = 0; c < index.centroids.rows(); ++c) {
    cell_top.push(squared_distance(q_aug, index.centroids.row(c)),
                  static_cast<std::uint32_t>(c));
  }

  detail::TopK top(k);
  std::size_t scanned = 0;
  for (const auto& [cell_dist, cell] : cell_top.take_sorted()) {
    for (std::uint32_t id : index.posting[cell]) {
      top.push(squared_distance(q_aug, index.stored.rows.row(id)), id);
      ++scanned;
    }
  }

  RetrievalResult res;
  res.method = Backend::ivf;
  const auto q = q_aug.subspan(0, index.stored.key_dim());
  std::vector<std::pair<double, std::uint32_t>> hits;
  for (const auto& [dist, id] : top.take_sorted()) {
    hits.emplace_back(-dot(q, index.stored.key(id)), id);
  }
  std::sort(hits.begin(), hits.end());
  for (const auto& [negscore, id] : hits) {
    res.ids.push_back(id);
    res.scores.push_back(-negscore);
  }
  res.short_result = scanned < k;
  return res;
}

}  // namespace rac
