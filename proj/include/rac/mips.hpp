#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "rac/error.hpp"
#include "rac/matrix.hpp"

namespace rac {

enum class Backend : std::uint8_t {
  exact = 0,
  augmented_exact = 1,
  ivf = 2,
  hnsw = 3,
  cluster = 4,
};

inline const char* backend_name(Backend b) {
  switch (b) {
    case Backend::exact: return "exact";
    case Backend::augmented_exact: return "aexact";
    case Backend::ivf: return "ivf";
    case Backend::hnsw: return "hnsw";
    case Backend::cluster: return "cluster";
  }
  return "?";
}

/// Top-k retrieval outcome: unique ids with their inner-product scores
/// against the unaugmented keys, sorted by (score desc, id asc).
/// `short_result` marks results with fewer than the requested k ids.
struct RetrievalResult {
  std::vector<std::uint32_t> ids;
  std::vector<double> scores;
  Backend method = Backend::exact;
  bool short_result = false;
};

namespace detail {

/// Keep the k best of (key, id) pairs under (key asc, id asc); used with
/// key = -score for MIPS and key = distance for NN.
struct TopK {
  explicit TopK(std::size_t k) : k(k) { heap.reserve(k + 1); }

  void push(double key, std::uint32_t id) {
    const std::pair<double, std::uint32_t> item{key, id};
    if (heap.size() < k) {
      heap.push_back(item);
      std::push_heap(heap.begin(), heap.end());
      return;
    }
    if (item < heap.front()) {
      std::pop_heap(heap.begin(), heap.end());
      heap.back() = item;
      std::push_heap(heap.begin(), heap.end());
    }
  }

  /// Entries ordered by (key asc, id asc).
  std::vector<std::pair<double, std::uint32_t>> take_sorted() {
    std::sort_heap(heap.begin(), heap.end());
    return std::move(heap);
  }

  std::size_t k;
  std::vector<std::pair<double, std::uint32_t>> heap;  // max-heap on (key, id)
};

}  // namespace detail

/// Exhaustive maximum-inner-product scan: the oracle every approximate
/// backend is measured against.
inline RetrievalResult exact_topk_mips(std::span<const float> q, const Matrix<float>& keys,
                                       std::size_t k) {
  const std::size_t n = keys.rows();
  if (k == 0 || k > n) {
    throw InvalidInputError("exact_topk_mips: k " + std::to_string(k) +
                            " must lie in [1, " + std::to_string(n) + "]");
  }
  if (q.size() != keys.cols()) {
    throw InvalidInputError("exact_topk_mips: query width does not match keys");
  }
  detail::TopK top(k);
  for (std::size_t id = 0; id < n; ++id) {
    top.push(-dot(q, keys.row(id)), static_cast<std::uint32_t>(id));
  }
  RetrievalResult res;
  res.method = Backend::exact;
  for (const auto& [negscore, id] : top.take_sorted()) {
    res.ids.push_back(id);
    res.scores.push_back(-negscore);
  }
  return res;
}

/// Keys lifted from d to d+1 dimensions so that Euclidean nearest neighbors
/// of [q; 0] coincide with maximum inner products against the original rows:
/// every lifted row has norm phi, hence |q^ - y^|^2 = |q|^2 + phi^2 - 2<q, y>.
struct AugmentedKeys {
  double phi = 0.0;       // max row norm of the source keys
  Matrix<float> rows;     // N x (d+1); first d columns are the source keys, bit for bit

  std::size_t size() const { return rows.rows(); }
  std::size_t key_dim() const { return rows.cols() - 1; }

  std::span<const float> key(std::size_t id) const { return rows.row(id).subspan(0, key_dim()); }

  /// Copy of the original keys (last coordinate stripped).
  Matrix<float> strip() const {
    Matrix<float> keys(rows.rows(), key_dim());
    for (std::size_t i = 0; i < rows.rows(); ++i) {
      const auto src = key(i);
      std::copy(src.begin(), src.end(), keys.row(i).begin());
    }
    return keys;
  }
};

inline AugmentedKeys augment(const Matrix<float>& keys) {
  if (keys.rows() == 0) {
    throw InvalidInputError("augment: keys are empty");
  }
  if (!keys.all_finite()) {
    throw InvalidInputError("augment: keys contain non-finite entries");
  }
  const std::size_t n = keys.rows();
  const std::size_t d = keys.cols();
  std::vector<double> sq(n);
  double phi2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sq[i] = squared_norm(keys.row(i));
    phi2 = std::max(phi2, sq[i]);
  }
  AugmentedKeys aug;
  aug.phi = std::sqrt(phi2);
  aug.rows = Matrix<float>(n, d + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto src = keys.row(i);
    auto dst = aug.rows.row(i);
    std::copy(src.begin(), src.end(), dst.begin());
    dst[d] = static_cast<float>(std::sqrt(std::max(0.0, phi2 - sq[i])));
  }
  return aug;
}

/// Query-side lift: append one zero coordinate.
inline std::vector<float> augment_query(std::span<const float> q) {
  std::vector<float> out(q.begin(), q.end());
  out.push_back(0.0f);
  return out;
}

/// Exhaustive Euclidean top-k over lifted rows; ids come back with their
/// inner-product scores against the original keys, sorted by (score desc,
/// id asc).
inline RetrievalResult exact_topk_augmented(std::span<const float> q_aug,
                                            const AugmentedKeys& aug, std::size_t k) {
  const std::size_t n = aug.size();
  if (k == 0 || k > n) {
    throw InvalidInputError("exact_topk_augmented: k " + std::to_string(k) +
                            " must lie in [1, " + std::to_string(n) + "]");
  }
  if (q_aug.size() != aug.rows.cols()) {
    throw InvalidInputError("exact_topk_augmented: query width does not match lifted rows");
  }
  detail::TopK top(k);
  for (std::size_t id = 0; id < n; ++id) {
    top.push(squared_distance(q_aug, aug.rows.row(id)), static_cast<std::uint32_t>(id));
  }
  RetrievalResult res;
  res.method = Backend::augmented_exact;
  const auto q = q_aug.subspan(0, aug.key_dim());
  std::vector<std::pair<double, std::uint32_t>> hits;
  for (const auto& [dist, id] : top.take_sorted()) {
    hits.emplace_back(-dot(q, aug.key(id)), id);
  }
  std::sort(hits.begin(), hits.end());
  for (const auto& [negscore, id] : hits) {
    res.ids.push_back(id);
    res.scores.push_back(-negscore);
  }
  return res;
}

}  // namespace rac
