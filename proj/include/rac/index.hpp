#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <variant>
#include <vector>

#include "rac/biasing.hpp"
#include "rac/cluster_index.hpp"
#include "rac/encoder.hpp"
#include "rac/error.hpp"
#include "rac/hnsw.hpp"
#include "rac/ivf.hpp"
#include "rac/mips.hpp"

namespace rac {

/// Exhaustive inner-product scan; the "no approximation" backend.
struct ExactIndex {
  Matrix<float> keys;
  std::uint64_t catalog_hash = 0;

  std::size_t size() const { return keys.rows(); }
};

/// Exhaustive Euclidean scan over lifted rows; exercises the MIPS-to-NN
/// reduction without any approximation.
struct AugExactIndex {
  AugmentedKeys stored;
  std::uint64_t catalog_hash = 0;

  std::size_t size() const { return stored.size(); }
};

using RetrievalIndex = std::variant<ExactIndex, AugExactIndex, IvfIndex, HnswIndex, ClusterIndex>;

inline Backend index_backend(const RetrievalIndex& index) {
  return static_cast<Backend>(index.index());
}

inline std::uint64_t index_catalog_hash(const RetrievalIndex& index) {
  return std::visit([](const auto& ix) { return ix.catalog_hash; }, index);
}

inline std::size_t index_size(const RetrievalIndex& index) {
  return std::visit([](const auto& ix) { return ix.size(); }, index);
}

struct IndexBuildOptions {
  Backend backend = Backend::hnsw;
  std::uint32_t ivf_cells = 0;  // 0: round(sqrt(N)), clamped to [1, N]
  std::uint32_t train_iters = 25;
  std::uint32_t m_max = 16;
  std::uint32_t ef_construction = 200;
  std::uint32_t clusters = 2000;  // clamped to [1, N]
  std::uint32_t l_default = 4;
  std::uint64_t seed = 0;
};

inline RetrievalIndex build_index(const EncodedCatalog& enc, const IndexBuildOptions& opt) {
  const std::size_t n = enc.size();
  Matrix<float> keys = enc.keys;
  switch (opt.backend) {
    case Backend::exact:
      return ExactIndex{std::move(keys), enc.catalog_hash};
    case Backend::augmented_exact:
      return AugExactIndex{augment(keys), enc.catalog_hash};
    case Backend::ivf: {
      std::uint32_t cells = opt.ivf_cells;
      if (cells == 0) {
        cells = static_cast<std::uint32_t>(std::lround(std::sqrt(static_cast<double>(n))));
      }
      cells = std::clamp<std::uint32_t>(cells, 1, static_cast<std::uint32_t>(n));
      IvfIndex ix = build_ivf(augment(keys), cells, opt.train_iters, opt.seed);
      ix.catalog_hash = enc.catalog_hash;
      return ix;
    }
    case Backend::hnsw: {
      HnswIndex ix = build_hnsw(augment(keys), opt.m_max, opt.ef_construction, opt.seed);
      ix.catalog_hash = enc.catalog_hash;
      return ix;
    }
    case Backend::cluster: {
      const std::uint32_t m =
          std::clamp<std::uint32_t>(opt.clusters, 1, static_cast<std::uint32_t>(n));
      ClusterIndex ix = build_cluster_index(keys, m, opt.train_iters, opt.seed,
                                            std::min(opt.l_default, m));
      ix.catalog_hash = enc.catalog_hash;
      return ix;
    }
  }
  throw InvalidInputError("build_index: unknown backend");
}

struct RetrieveOptions {
  std::size_t k = 10;        // top-k backends
  std::size_t l = 4;         // cluster-probe
  std::size_t nprobe = 8;    // ivf
  std::size_t ef_search = 64;
  bool union_mode = false;   // merge every frame's candidates into one shared set
};

/// Candidates for a single already-projected query, as float32.
inline std::vector<std::uint32_t> query_index(const RetrievalIndex& index,
                                              std::span<const float> q,
                                              const RetrieveOptions& opt) {
  switch (index_backend(index)) {
    case Backend::exact:
      return exact_topk_mips(q, std::get<ExactIndex>(index).keys, opt.k).ids;
    case Backend::augmented_exact: {
      const auto q_aug = augment_query(q);
      return exact_topk_augmented(q_aug, std::get<AugExactIndex>(index).stored, opt.k).ids;
    }
    case Backend::ivf: {
      const auto q_aug = augment_query(q);
      return query_ivf(std::get<IvfIndex>(index), q_aug, opt.k, opt.nprobe).ids;
    }
    case Backend::hnsw: {
      const auto q_aug = augment_query(q);
      return query_hnsw(std::get<HnswIndex>(index), q_aug, opt.k, opt.ef_search).ids;
    }
    case Backend::cluster:
      return query_clusters(std::get<ClusterIndex>(index), q, opt.l);
  }
  throw InvalidInputError("query_index: unknown backend");
}

inline std::vector<float> project_query_f32(std::span<const float> frame,
                                            const AdapterParams& params) {
  const std::vector<double> q = project_query(frame, params);
  std::vector<float> qf(q.size());
  for (std::size_t i = 0; i < q.size(); ++i) qf[i] = static_cast<float>(q[i]);
  return qf;
}

/// Per-frame candidate retrieval. In union mode the per-frame sets are merged
/// and the merged set is applied to every frame.
inline std::vector<std::vector<std::uint32_t>> retrieve_per_frame(const FrameSequence& frames,
                                                                  const AdapterParams& params,
                                                                  const RetrievalIndex& index,
                                                                  const EncodedCatalog& enc,
                                                                  const RetrieveOptions& opt) {
  if (index_catalog_hash(index) != enc.catalog_hash) {
    throw StaleIndexError("index was built against a different encoded catalog");
  }
  detail::check_encoding(params, enc);
  const std::size_t t_count = frames.frame_count();
  std::vector<std::vector<std::uint32_t>> out(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    const std::vector<float> qf = project_query_f32(frames.frames.row(t), params);
    out[t] = query_index(index, qf, opt);
  }
  if (opt.union_mode) {
    std::vector<std::uint32_t> merged;
    for (const auto& ids : out) merged.insert(merged.end(), ids.begin(), ids.end());
    std::sort(merged.begin(), merged.end());
    merged.erase(std::unique(merged.begin(), merged.end()), merged.end());
    std::fill(out.begin(), out.end(), merged);
  }
  return out;
}

}  // namespace rac
