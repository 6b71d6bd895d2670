#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "rac/binio.hpp"
#include "rac/encoder.hpp"
#include "rac/error.hpp"
#include "rac/index.hpp"

namespace rac {

// On-disk envelope, little-endian throughout:
//   magic   "RACIDX\0"                      7 bytes
//   version u8  (currently 1)
//   tag     u8  (0 exact, 1 augmented-exact, 2 ivf, 3 hnsw, 4 cluster,
//                5 adapter params, 6 encoded catalog)
//   hash    u64 (catalog hash; params hash for tag 5)
//   d       u32 (unlifted key width; joint dim for tags 5/6)
//   n       u32 (row count; 0 for tag 5)
//   payload tag-specific, see the writers below.
// Matrices are stored as u64 rows + u64 cols + row-major f32; id lists as
// u32 count + u32 ids. Every count and id is validated on load.

constexpr std::array<char, 7> kIndexMagic = {'R', 'A', 'C', 'I', 'D', 'X', '\0'};
constexpr std::uint8_t kIndexVersion = 1;

constexpr std::uint8_t kTagParams = 5;
constexpr std::uint8_t kTagEncodedCatalog = 6;

namespace detail {

inline void write_envelope(ByteWriter& w, std::uint8_t tag, std::uint64_t hash, std::uint32_t d,
                           std::uint32_t n) {
  w.put_bytes(kIndexMagic.data(), kIndexMagic.size());
  w.put<std::uint8_t>(kIndexVersion);
  w.put<std::uint8_t>(tag);
  w.put<std::uint64_t>(hash);
  w.put<std::uint32_t>(d);
  w.put<std::uint32_t>(n);
}

struct Envelope {
  std::uint8_t tag;
  std::uint64_t hash;
  std::uint32_t d;
  std::uint32_t n;
};

inline Envelope read_envelope(ByteReader& r) {
  std::array<char, 7> magic{};
  r.get_bytes(magic.data(), magic.size(), "magic");
  if (magic != kIndexMagic) {
    throw CorruptIndexError("bad magic", 0);
  }
  const auto version = r.get<std::uint8_t>("version");
  if (version != kIndexVersion) {
    throw UnsupportedVersionError("unsupported format version " + std::to_string(version));
  }
  Envelope e;
  e.tag = r.get<std::uint8_t>("tag");
  e.hash = r.get<std::uint64_t>("hash");
  e.d = r.get<std::uint32_t>("d");
  e.n = r.get<std::uint32_t>("n");
  if (e.n == 0 && e.tag != kTagParams) {
    throw CorruptIndexError("empty index", r.offset());
  }
  return e;
}

inline Matrix<float> read_rows(ByteReader& r, const char* field, std::uint64_t rows,
                               std::uint64_t cols) {
  Matrix<float> m = r.get_matrix<float>(field, rows, cols);
  if (m.rows() != rows || m.cols() != cols) {
    throw CorruptIndexError(std::string("unexpected shape for ") + field, r.offset());
  }
  return m;
}

inline void check_partition(const std::vector<std::vector<std::uint32_t>>& lists, std::size_t n,
                            std::uint64_t offset) {
  std::vector<char> seen(n, 0);
  std::size_t total = 0;
  for (const auto& list : lists) {
    for (std::uint32_t id : list) {
      if (seen[id]) {
        throw CorruptIndexError("id " + std::to_string(id) + " appears in two lists", offset);
      }
      seen[id] = 1;
      ++total;
    }
  }
  if (total != n) {
    throw CorruptIndexError("lists do not cover all ids", offset);
  }
}

inline AugmentedKeys read_augmented(ByteReader& r, std::uint32_t d, std::uint32_t n) {
  AugmentedKeys aug;
  aug.phi = r.get<double>("phi");
  aug.rows = read_rows(r, "lifted rows", n, static_cast<std::uint64_t>(d) + 1);
  return aug;
}

inline void write_augmented(ByteWriter& w, const AugmentedKeys& aug) {
  w.put<double>(aug.phi);
  w.put_matrix(aug.rows);
}

}  // namespace detail

inline std::vector<std::uint8_t> serialize_index(const RetrievalIndex& index) {
  ByteWriter w;
  const auto n32 = static_cast<std::uint32_t>(index_size(index));
  switch (index_backend(index)) {
    case Backend::exact: {
      const auto& ix = std::get<ExactIndex>(index);
      detail::write_envelope(w, 0, ix.catalog_hash, static_cast<std::uint32_t>(ix.keys.cols()),
                             n32);
      w.put_matrix(ix.keys);
      break;
    }
    case Backend::augmented_exact: {
      const auto& ix = std::get<AugExactIndex>(index);
      detail::write_envelope(w, 1, ix.catalog_hash,
                             static_cast<std::uint32_t>(ix.stored.key_dim()), n32);
      detail::write_augmented(w, ix.stored);
      break;
    }
    case Backend::ivf: {
      const auto& ix = std::get<IvfIndex>(index);
      detail::write_envelope(w, 2, ix.catalog_hash,
                             static_cast<std::uint32_t>(ix.stored.key_dim()), n32);
      w.put<std::uint32_t>(ix.params.cells);
      w.put<std::uint32_t>(ix.params.train_iters);
      w.put<std::uint64_t>(ix.params.seed);
      detail::write_augmented(w, ix.stored);
      w.put_matrix(ix.centroids);
      for (const auto& list : ix.posting) {
        w.put_id_list(list);
      }
      break;
    }
    case Backend::hnsw: {
      const auto& ix = std::get<HnswIndex>(index);
      detail::write_envelope(w, 3, ix.catalog_hash,
                             static_cast<std::uint32_t>(ix.stored.key_dim()), n32);
      w.put<std::uint32_t>(ix.params.m_max);
      w.put<std::uint32_t>(ix.params.ef_construction);
      w.put<std::uint64_t>(ix.params.seed);
      w.put<std::uint32_t>(ix.entry_point);
      detail::write_augmented(w, ix.stored);
      w.put<std::uint32_t>(static_cast<std::uint32_t>(ix.layers.size()));
      w.put_id_list(ix.levels);  // per-node top layer, bounded by the layer count
      for (const auto& layer : ix.layers) {
        for (const auto& neighbors : layer) {
          w.put_id_list(neighbors);
        }
      }
      break;
    }
    case Backend::cluster: {
      const auto& ix = std::get<ClusterIndex>(index);
      detail::write_envelope(w, 4, ix.catalog_hash,
                             static_cast<std::uint32_t>(ix.centroids.cols()), n32);
      w.put<std::uint32_t>(ix.params.m);
      w.put<std::uint32_t>(ix.params.l_default);
      w.put<std::uint32_t>(ix.params.iters);
      w.put<std::uint64_t>(ix.params.seed);
      w.put_matrix(ix.centroids);
      for (const auto& list : ix.members) {
        w.put_id_list(list);
      }
      break;
    }
  }
  return w.take();
}

inline RetrievalIndex deserialize_index(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const detail::Envelope e = detail::read_envelope(r);
  switch (e.tag) {
    case 0: {
      ExactIndex ix;
      ix.catalog_hash = e.hash;
      ix.keys = detail::read_rows(r, "keys", e.n, e.d);
      r.expect_exhausted();
      return ix;
    }
    case 1: {
      AugExactIndex ix;
      ix.catalog_hash = e.hash;
      ix.stored = detail::read_augmented(r, e.d, e.n);
      r.expect_exhausted();
      return ix;
    }
    case 2: {
      IvfIndex ix;
      ix.catalog_hash = e.hash;
      ix.params.cells = r.get<std::uint32_t>("cells");
      ix.params.train_iters = r.get<std::uint32_t>("train_iters");
      ix.params.seed = r.get<std::uint64_t>("seed");
      if (ix.params.cells == 0 || ix.params.cells > e.n) {
        throw CorruptIndexError("cell count out of range", r.offset());
      }
      ix.stored = detail::read_augmented(r, e.d, e.n);
      ix.centroids = detail::read_rows(r, "centroids", ix.params.cells,
                                       static_cast<std::uint64_t>(e.d) + 1);
      ix.posting.resize(ix.params.cells);
      for (auto& list : ix.posting) {
        list = r.get_id_list("posting list", e.n);
      }
      detail::check_partition(ix.posting, e.n, r.offset());
      r.expect_exhausted();
      return ix;
    }
    case 3: {
      HnswIndex ix;
      ix.catalog_hash = e.hash;
      ix.params.m_max = r.get<std::uint32_t>("m_max");
      ix.params.ef_construction = r.get<std::uint32_t>("ef_construction");
      ix.params.seed = r.get<std::uint64_t>("seed");
      ix.entry_point = r.get<std::uint32_t>("entry_point");
      if (ix.params.m_max < 2) {
        throw CorruptIndexError("m_max out of range", r.offset());
      }
      if (ix.entry_point >= e.n) {
        throw CorruptIndexError("entry point out of range", r.offset());
      }
      ix.stored = detail::read_augmented(r, e.d, e.n);
      const auto layer_count = r.get<std::uint32_t>("layer_count");
      if (layer_count == 0) {
        throw CorruptIndexError("layer count must be positive", r.offset());
      }
      const auto level_count = r.get<std::uint32_t>("levels");
      if (level_count != e.n) {
        throw CorruptIndexError("levels list does not cover all nodes", r.offset());
      }
      ix.levels.resize(e.n);
      r.get_bytes(ix.levels.data(), e.n * sizeof(std::uint32_t), "levels");
      for (std::uint32_t lv : ix.levels) {
        if (lv >= layer_count) {
          throw CorruptIndexError("node level exceeds layer count", r.offset());
        }
      }
      ix.layers.resize(layer_count);
      for (std::size_t l = 0; l < layer_count; ++l) {
        ix.layers[l].resize(e.n);
        for (std::size_t node = 0; node < e.n; ++node) {
          ix.layers[l][node] = r.get_id_list("adjacency", e.n);
          if (ix.layers[l][node].size() > ix.degree_cap(l)) {
            throw CorruptIndexError("neighbor list exceeds degree cap", r.offset());
          }
        }
      }
      r.expect_exhausted();
      return ix;
    }
    case 4: {
      ClusterIndex ix;
      ix.catalog_hash = e.hash;
      ix.params.m = r.get<std::uint32_t>("m");
      ix.params.l_default = r.get<std::uint32_t>("l_default");
      ix.params.iters = r.get<std::uint32_t>("iters");
      ix.params.seed = r.get<std::uint64_t>("seed");
      if (ix.params.m == 0 || ix.params.m > e.n) {
        throw CorruptIndexError("cluster count out of range", r.offset());
      }
      ix.centroids = detail::read_rows(r, "centroids", ix.params.m, e.d);
      ix.members.resize(ix.params.m);
      for (auto& list : ix.members) {
        list = r.get_id_list("member list", e.n);
      }
      detail::check_partition(ix.members, e.n, r.offset());
      r.expect_exhausted();
      return ix;
    }
    default:
      throw CorruptIndexError("unknown backend tag " + std::to_string(e.tag), 8);
  }
}

// Adapter parameter checkpoints share the envelope with tag 5. All matrices
// are persisted as float32.

inline std::vector<std::uint8_t> serialize_params(const AdapterParams& p) {
  ByteWriter w;
  detail::write_envelope(w, kTagParams, params_hash(p),
                         static_cast<std::uint32_t>(p.dims.joint_dim), 0);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.dims.vocab));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.dims.entity_dim));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(p.dims.audio_dim));
  auto put_f32 = [&w](const Matrix<double>& m) {
    Matrix<float> f(m.rows(), m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
      for (std::size_t j = 0; j < m.cols(); ++j) f(i, j) = static_cast<float>(m(i, j));
    }
    w.put_matrix(f);
  };
  put_f32(p.embed);
  put_f32(p.theta_q);
  put_f32(p.theta_k);
  put_f32(p.theta_v);
  Matrix<float> nb(1, p.no_bias_key.size());
  for (std::size_t j = 0; j < p.no_bias_key.size(); ++j) {
    nb(0, j) = static_cast<float>(p.no_bias_key[j]);
  }
  w.put_matrix(nb);
  return w.take();
}

inline AdapterParams deserialize_params(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const detail::Envelope e = detail::read_envelope(r);
  if (e.tag != kTagParams) {
    throw CorruptIndexError("expected a params checkpoint, found tag " + std::to_string(e.tag),
                            8);
  }
  AdapterParams p;
  p.dims.joint_dim = e.d;
  p.dims.vocab = r.get<std::uint32_t>("vocab");
  p.dims.entity_dim = r.get<std::uint32_t>("entity_dim");
  p.dims.audio_dim = r.get<std::uint32_t>("audio_dim");
  if (!p.dims.valid()) {
    throw CorruptIndexError("invalid checkpoint dims", r.offset());
  }
  auto get_f64 = [&r](const char* field, std::uint64_t rows, std::uint64_t cols) {
    const Matrix<float> f = detail::read_rows(r, field, rows, cols);
    Matrix<double> m(f.rows(), f.cols());
    for (std::size_t i = 0; i < f.rows(); ++i) {
      for (std::size_t j = 0; j < f.cols(); ++j) m(i, j) = static_cast<double>(f(i, j));
    }
    return m;
  };
  p.embed = get_f64("embed", p.dims.vocab, p.dims.entity_dim);
  p.theta_q = get_f64("theta_q", p.dims.joint_dim, p.dims.audio_dim);
  p.theta_k = get_f64("theta_k", p.dims.joint_dim, p.dims.entity_dim);
  p.theta_v = get_f64("theta_v", p.dims.audio_dim, p.dims.entity_dim);
  const Matrix<double> nb = get_f64("no_bias_key", 1, p.dims.joint_dim);
  p.no_bias_key.assign(nb.row(0).begin(), nb.row(0).end());
  r.expect_exhausted();
  if (params_hash(p) != e.hash) {
    throw CorruptIndexError("checkpoint hash mismatch", 8);
  }
  return p;
}

// Encoded catalogs share the envelope with tag 6.

inline std::vector<std::uint8_t> serialize_encoded(const EncodedCatalog& enc) {
  ByteWriter w;
  detail::write_envelope(w, kTagEncodedCatalog, enc.catalog_hash,
                         static_cast<std::uint32_t>(enc.keys.cols()),
                         static_cast<std::uint32_t>(enc.size()));
  w.put<std::uint64_t>(enc.param_hash);
  w.put_matrix(enc.entity_vecs);
  w.put_matrix(enc.keys);
  w.put_matrix(enc.values);
  return w.take();
}

inline EncodedCatalog deserialize_encoded(std::span<const std::uint8_t> bytes) {
  ByteReader r(bytes);
  const detail::Envelope e = detail::read_envelope(r);
  if (e.tag != kTagEncodedCatalog) {
    throw CorruptIndexError("expected an encoded catalog, found tag " + std::to_string(e.tag),
                            8);
  }
  EncodedCatalog enc;
  enc.catalog_hash = e.hash;
  enc.param_hash = r.get<std::uint64_t>("param_hash");
  enc.entity_vecs = r.get_matrix<float>("entity_vecs", e.n, 1u << 20);
  enc.keys = detail::read_rows(r, "keys", e.n, e.d);
  enc.values = r.get_matrix<float>("values", e.n, 1u << 20);
  if (enc.entity_vecs.rows() != e.n || enc.values.rows() != e.n) {
    throw CorruptIndexError("row counts disagree", r.offset());
  }
  r.expect_exhausted();
  return enc;
}

// File helpers.

inline void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw InvalidInputError("cannot write file: " + path);
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw InvalidInputError("short write: " + path);
  }
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) {
    throw InvalidInputError("cannot open file: " + path);
  }
  const std::streamsize size = in.tellg();
  in.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  in.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!in) {
    throw InvalidInputError("short read: " + path);
  }
  return bytes;
}

inline void save_index(const RetrievalIndex& index, const std::string& path) {
  write_file(path, serialize_index(index));
}
inline RetrievalIndex load_index(const std::string& path) {
  return deserialize_index(read_file(path));
}
inline void save_params(const AdapterParams& p, const std::string& path) {
  write_file(path, serialize_params(p));
}
inline AdapterParams load_params(const std::string& path) {
  return deserialize_params(read_file(path));
}
inline void save_encoded(const EncodedCatalog& enc, const std::string& path) {
  write_file(path, serialize_encoded(enc));
}
inline EncodedCatalog load_encoded(const std::string& path) {
  return deserialize_encoded(read_file(path));
}

}  // namespace rac
