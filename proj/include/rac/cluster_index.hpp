#pragma once

#include <algorithm>
#include <cstdint>
#include <vector>

#include "rac/error.hpp"
#include "rac/kmeans.hpp"
#include "rac/matrix.hpp"
#include "rac/mips.hpp"

namespace rac {

struct ClusterParams {
  std::uint32_t m = 0;          // cluster count
  std::uint32_t l_default = 4;  // clusters probed per query unless overridden
  std::uint32_t iters = 25;
  std::uint64_t seed = 0;
};

/// Cluster-probe retrieval: k-means over the unlifted key vectors; a query
/// collects every member of its l nearest clusters (variable-size candidate
/// sets, not top-k).
struct ClusterIndex {
  ClusterParams params;
  Matrix<float> centroids;  // m x d
  std::vector<std::vector<std::uint32_t>> members;  // ascending ids, partition of 0..N-1
  std::uint64_t catalog_hash = 0;

  std::size_t size() const {
    std::size_t n = 0;
    for (const auto& ms : members) n += ms.size();
    return n;
  }
};

inline ClusterIndex build_cluster_index(const Matrix<float>& keys, std::uint32_t m,
                                        std::uint32_t iters, std::uint64_t seed,
                                        std::uint32_t l_default = 4) {
  if (m == 0 || m > keys.rows()) {
    throw InvalidInputError("build_cluster_index: cluster count must lie in [1, N]");
  }
  const KmeansResult km = kmeans(keys, m, iters, seed);
  ClusterIndex index;
  index.params = ClusterParams{m, l_default, iters, seed};
  index.centroids = km.centroids;
  index.members.resize(m);
  for (std::size_t id = 0; id < km.assignment.size(); ++id) {
    index.members[km.assignment[id]].push_back(static_cast<std::uint32_t>(id));
  }
  return index;
}

/// Union of the members of the l nearest clusters, ascending ids.
inline std::vector<std::uint32_t> query_clusters(const ClusterIndex& index,
                                                 std::span<const float> q, std::size_t l) {
  if (l == 0 || l > index.params.m) {
    throw InvalidInputError("query_clusters: l must lie in [1, m]");
  }
  if (q.size() != index.centroids.cols()) {
    throw InvalidInputError("query_clusters: query width does not match centroids");
  }
  detail::TopK top(l);
  for (std::size_t c = 0; c < index.centroids.rows(); ++c) {
    top.push(squared_distance(q, index.centroids.row(c)), static_cast<std::uint32_t>(c));
  }
  std::vector<std::uint32_t> out;
  for (const auto& [dist, cell] : top.take_sorted()) {
    out.insert(out.end(), index.members[cell].begin(), index.members[cell].end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace rac
