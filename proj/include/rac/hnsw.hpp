#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <queue>
#include <vector>

#include "rac/error.hpp"
#include "rac/matrix.hpp"
#include "rac/mips.hpp"
#include "rac/rng.hpp"

namespace rac {

struct HnswParams {
  std::uint32_t m_max = 16;            // neighbor cap per node per layer; 2x at layer 0
  std::uint32_t ef_construction = 200;
  std::uint64_t seed = 0;

  double level_lambda() const { return 1.0 / std::log(static_cast<double>(m_max)); }
};

/// Hierarchical navigable small world graph over the lifted key rows.
/// Insertion picks node levels from a geometric distribution, descends
/// greedily to each target layer, gathers a beam of ef_construction
/// candidates and links to at most m_max of them chosen by the
/// diversity-pruning rule (see hnsw_select_neighbors). Adjacency lists are
/// kept in ascending id order so a built graph has exactly one byte
/// representation.
struct HnswIndex {
  HnswParams params;
  AugmentedKeys stored;
  std::vector<std::uint32_t> levels;  // per node: highest layer the node joins
  // layers[l][node] = neighbor ids at layer l (empty above the node's level)
  std::vector<std::vector<std::vector<std::uint32_t>>> layers;
  std::uint32_t entry_point = 0;
  std::uint64_t catalog_hash = 0;

  std::size_t size() const { return stored.size(); }
  std::uint32_t max_level() const { return static_cast<std::uint32_t>(layers.size()) - 1; }

  std::size_t degree_cap(std::size_t layer) const {
    return layer == 0 ? 2 * static_cast<std::size_t>(params.m_max) : params.m_max;
  }
};

namespace detail {

struct HnswScratch {
  std::vector<std::uint32_t> stamp;
  std::uint32_t epoch = 0;

  void begin(std::size_t n) {
    if (stamp.size() < n) stamp.assign(n, 0);
    ++epoch;
    if (epoch == 0) {  // stamp wrap: reset and continue
      std::fill(stamp.begin(), stamp.end(), 0);
      epoch = 1;
    }
  }
  bool seen(std::uint32_t id) {
    if (stamp[id] == epoch) return true;
    stamp[id] = epoch;
    return false;
  }
};

inline HnswScratch& hnsw_scratch() {
  thread_local HnswScratch scratch;
  return scratch;
}

using DistId = std::pair<double, std::uint32_t>;

/// Beam search over one layer; returns up to ef nodes as (dist, id) sorted
/// ascending. Entry points must be deduplicated by the caller or not; the
/// visited set handles repeats either way.
inline std::vector<DistId> hnsw_search_layer(const HnswIndex& index, std::span<const float> q,
                                             std::span<const std::uint32_t> entries,
                                             std::size_t ef, std::size_t layer) {
  HnswScratch& scratch = hnsw_scratch();
  scratch.begin(index.size());

  std::priority_queue<DistId, std::vector<DistId>, std::greater<>> candidates;  // nearest first
  std::priority_queue<DistId> best;                                             // farthest first
  for (std::uint32_t ep : entries) {
    if (scratch.seen(ep)) continue;
    const double d = squared_distance(q, index.stored.rows.row(ep));
    candidates.emplace(d, ep);
    best.emplace(d, ep);
    if (best.size() > ef) best.pop();
  }
  while (!candidates.empty()) {
    const auto [d, node] = candidates.top();
    if (best.size() >= ef && DistId{d, node} > best.top()) break;
    candidates.pop();
    for (std::uint32_t nb : index.layers[layer][node]) {
      if (scratch.seen(nb)) continue;
      const double dn = squared_distance(q, index.stored.rows.row(nb));
      if (best.size() < ef || DistId{dn, nb} < best.top()) {
        candidates.emplace(dn, nb);
        best.emplace(dn, nb);
        if (best.size() > ef) best.pop();
      }
    }
  }
  std::vector<DistId> out;
  out.reserve(best.size());
  while (!best.empty()) {
    out.push_back(best.top());
    best.pop();
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Strictly-improving greedy descent within one layer.
inline std::uint32_t hnsw_greedy(const HnswIndex& index, std::span<const float> q,
                                 std::uint32_t start, std::size_t layer) {
  std::uint32_t cur = start;
  double cur_d = squared_distance(q, index.stored.rows.row(cur));
  bool improved = true;
  while (improved) {
    improved = false;
    for (std::uint32_t nb : index.layers[layer][cur]) {
      const double d = squared_distance(q, index.stored.rows.row(nb));
      if (d < cur_d) {
        cur_d = d;
        cur = nb;
        improved = true;
      }
    }
  }
  return cur;
}

/// Diversity-pruned neighbor selection: walk candidates by increasing
/// distance and keep one only if it is closer to the query point than to
/// every neighbor already kept; remaining slots are refilled with the
/// nearest pruned candidates. Plain nearest-m selection disconnects
/// clustered data (tight families soak up every slot); this rule is the
/// standard cure.
inline std::vector<std::uint32_t> hnsw_select_neighbors(const HnswIndex& index,
                                                        std::vector<DistId> candidates,
                                                        std::size_t m, bool keep_pruned) {
  std::sort(candidates.begin(), candidates.end());
  std::vector<std::uint32_t> selected;
  selected.reserve(m);
  std::vector<std::uint32_t> pruned;
  for (const auto& [dist, id] : candidates) {
    if (selected.size() >= m) break;
    bool diverse = true;
    for (std::uint32_t kept : selected) {
      if (squared_distance(index.stored.rows.row(id), index.stored.rows.row(kept)) < dist) {
        diverse = false;
        break;
      }
    }
    if (diverse) {
      selected.push_back(id);
    } else {
      pruned.push_back(id);
    }
  }
  if (keep_pruned) {
    for (std::uint32_t id : pruned) {
      if (selected.size() >= m) break;
      selected.push_back(id);
    }
  }
  return selected;
}

/// Candidate pool expansion: add every candidate's current neighbors before
/// pruning. Pays off on clustered data where the construction beam gets
/// trapped inside one tight family.
inline std::vector<DistId> hnsw_extend_candidates(const HnswIndex& index,
                                                  std::vector<DistId> candidates,
                                                  std::span<const float> q,
                                                  std::size_t layer) {
  HnswScratch& scratch = hnsw_scratch();
  scratch.begin(index.size());
  for (const auto& [dist, id] : candidates) scratch.seen(id);
  const std::size_t base = candidates.size();
  for (std::size_t i = 0; i < base; ++i) {
    for (std::uint32_t nb : index.layers[layer][candidates[i].second]) {
      if (scratch.seen(nb)) continue;
      candidates.emplace_back(squared_distance(q, index.stored.rows.row(nb)), nb);
    }
  }
  return candidates;
}

/// Re-run neighbor selection for a node whose list overflowed its cap.
inline void hnsw_shrink(HnswIndex& index, std::size_t layer, std::uint32_t node) {
  auto& list = index.layers[layer][node];
  const std::size_t cap = index.degree_cap(layer);
  if (list.size() <= cap) return;
  const auto row = index.stored.rows.row(node);
  std::vector<DistId> ranked;
  ranked.reserve(list.size());
  for (std::uint32_t nb : list) {
    ranked.emplace_back(squared_distance(row, index.stored.rows.row(nb)), nb);
  }
  list = hnsw_select_neighbors(index, std::move(ranked), cap, /*keep_pruned=*/true);
  std::sort(list.begin(), list.end());
}

}  // namespace detail

inline HnswIndex build_hnsw(AugmentedKeys aug, std::uint32_t m_max,
                            std::uint32_t ef_construction, std::uint64_t seed) {
  if (m_max < 2) {
    throw InvalidInputError("build_hnsw: m_max must be at least 2");
  }
  if (ef_construction < m_max) {
    throw InvalidInputError("build_hnsw: ef_construction must be at least m_max");
  }
  const std::size_t n = aug.size();
  HnswIndex index;
  index.params = HnswParams{m_max, ef_construction, seed};
  index.stored = std::move(aug);
  index.levels.resize(n);

  SplitMix64 level_rng = SplitMix64::stream(seed, 0x686e7377);
  const double lambda = index.params.level_lambda();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = static_cast<double>((level_rng.next() >> 11) + 1) * 0x1.0p-53;  // (0,1]
    index.levels[i] = static_cast<std::uint32_t>(-std::log(u) * lambda);
  }

  index.layers.assign(1, std::vector<std::vector<std::uint32_t>>(n));
  index.entry_point = 0;
  while (index.layers.size() <= index.levels[0]) {
    index.layers.emplace_back(n);
  }
  std::uint32_t top = index.levels[0];

  std::vector<std::uint32_t> entries;
  for (std::uint32_t node = 1; node < n; ++node) {
    const std::uint32_t lv = index.levels[node];
    const auto q = index.stored.rows.row(node);

    std::uint32_t cur = index.entry_point;
    for (std::uint32_t layer = top; layer > lv; --layer) {
      cur = detail::hnsw_greedy(index, q, cur, layer);
    }
    entries.assign(1, cur);
    for (std::int64_t layer = std::min(lv, top); layer >= 0; --layer) {
      const auto found = detail::hnsw_search_layer(index, q, entries,
                                                   index.params.ef_construction,
                                                   static_cast<std::size_t>(layer));
      const auto pool = detail::hnsw_extend_candidates(index, found, q,
                                                       static_cast<std::size_t>(layer));
      const auto linked = detail::hnsw_select_neighbors(index, pool, index.params.m_max,
                                                        /*keep_pruned=*/true);
      auto& own = index.layers[layer][node];
      for (std::uint32_t nb : linked) {
        own.push_back(nb);
        auto& other = index.layers[layer][nb];
        other.insert(std::upper_bound(other.begin(), other.end(), node), node);
        detail::hnsw_shrink(index, static_cast<std::size_t>(layer), nb);
      }
      std::sort(own.begin(), own.end());
      entries.clear();
      for (const auto& [d, id] : found) entries.push_back(id);
    }

    if (lv > top) {
      while (index.layers.size() <= lv) {
        index.layers.emplace_back(n);
      }
      index.entry_point = node;
      top = lv;
    }
  }
  return index;
}

inline RetrievalResult query_hnsw(const HnswIndex& index, std::span<const float> q_aug,
                                  std::size_t k, std::size_t ef_search) {
  if (k == 0 || k > index.size()) {
    throw InvalidInputError("query_hnsw: k must lie in [1, N]");
  }
  if (ef_search < k) {
    throw InvalidInputError("query_hnsw: ef_search must be at least k");
  }
  if (q_aug.size() != index.stored.rows.cols()) {
    throw InvalidInputError("query_hnsw: query width does not match lifted rows");
  }
  std::uint32_t cur = index.entry_point;
  for (std::uint32_t layer = index.max_level(); layer > 0; --layer) {
    cur = detail::hnsw_greedy(index, q_aug, cur, layer);
  }
  const std::uint32_t entry[1] = {cur};
  const auto found = detail::hnsw_search_layer(index, q_aug, entry, ef_search, 0);

  RetrievalResult res;
  res.method = Backend::hnsw;
  const auto q = q_aug.subspan(0, index.stored.key_dim());
  const std::size_t take = std::min(k, found.size());
  std::vector<std::pair<double, std::uint32_t>> hits;
  for (std::size_t i = 0; i < take; ++i) {
    hits.emplace_back(-dot(q, index.stored.key(found[i].second)), found[i].second);
  }
  std::sort(hits.begin(), hits.end());
  for (const auto& [negscore, id] : hits) {
    res.ids.push_back(id);
    res.scores.push_back(-negscore);
  }
  res.short_result = res.ids.size() < k;
  return res;
}

/// True when every node can be reached from the entry point over layer 0.
inline bool hnsw_layer0_connected(const HnswIndex& index) {
  const std::size_t n = index.size();
  std::vector<char> seen(n, 0);
  std::vector<std::uint32_t> stack{index.entry_point};
  seen[index.entry_point] = 1;
  std::size_t count = 0;
  while (!stack.empty()) {
    const std::uint32_t node = stack.back();
    stack.pop_back();
    ++count;
    for (std::uint32_t nb : index.layers[0][node]) {
      if (!seen[nb]) {
        seen[nb] = 1;
        stack.push_back(nb);
      }
    }
  }
  return count == n;
}

}  // namespace rac
