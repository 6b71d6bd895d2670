#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "rac/binio.hpp"
#include "rac/catalog.hpp"
#include "rac/error.hpp"
#include "rac/matrix.hpp"
#include "rac/rng.hpp"

namespace rac {

struct Dims {
  std::size_t vocab = 4096;      // hash buckets for trigram tokens
  std::size_t entity_dim = 32;   // entity embedding width
  std::size_t audio_dim = 64;    // audio feature width
  std::size_t joint_dim = 64;    // shared query/key attention width

  bool valid() const { return vocab >= 2 && entity_dim > 0 && audio_dim > 0 && joint_dim > 0; }
};

/// Everything trainable: token embedding table plus the three attention
/// projections and the learned no-bias key. The no-bias value is the zero
/// vector by definition and is never stored.
struct AdapterParams {
  Dims dims;
  Matrix<double> embed;        // vocab x entity_dim
  Matrix<double> theta_q;      // joint_dim x audio_dim
  Matrix<double> theta_k;      // joint_dim x entity_dim
  Matrix<double> theta_v;      // audio_dim x entity_dim
  std::vector<double> no_bias_key;  // joint_dim

  bool all_finite() const {
    if (!embed.all_finite() || !theta_q.all_finite() || !theta_k.all_finite() ||
        !theta_v.all_finite()) {
      return false;
    }
    for (double v : no_bias_key) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

/// Xavier-uniform init, one independent SplitMix64 stream per matrix so the
/// draw for any one matrix does not depend on the shapes of the others.
inline AdapterParams init_params(std::uint64_t seed, const Dims& dims) {
  if (!dims.valid()) {
    throw InvalidInputError("init_params: dimensions must be positive (vocab >= 2)");
  }
  AdapterParams p;
  p.dims = dims;
  auto fill = [&](Matrix<double>& m, std::size_t rows, std::size_t cols, std::uint64_t tag) {
    m = Matrix<double>(rows, cols);
    const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
    SplitMix64 rng = SplitMix64::stream(seed, tag);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        m(i, j) = rng.uniform(-a, a);
      }
    }
  };
  fill(p.embed, dims.vocab, dims.entity_dim, 0);
  fill(p.theta_q, dims.joint_dim, dims.audio_dim, 1);
  fill(p.theta_k, dims.joint_dim, dims.entity_dim, 2);
  fill(p.theta_v, dims.audio_dim, dims.entity_dim, 3);
  p.no_bias_key.resize(dims.joint_dim);
  {
    const double a = std::sqrt(6.0 / static_cast<double>(1 + dims.joint_dim));
    SplitMix64 rng = SplitMix64::stream(seed, 4);
    for (std::size_t i = 0; i < dims.joint_dim; ++i) {
      p.no_bias_key[i] = rng.uniform(-a, a);
    }
  }
  return p;
}

/// Checksum over dims and the float32 image of every parameter matrix, i.e.
/// exactly what a checkpoint file persists. Streamed word-at-a-time so the
/// per-call cost stays negligible next to the math it guards.
inline std::uint64_t params_hash(const AdapterParams& p) {
  std::uint64_t h = detail::mix64(
      (static_cast<std::uint64_t>(p.dims.vocab) << 32) ^ p.dims.entity_dim);
  h = detail::mix64(h ^ ((static_cast<std::uint64_t>(p.dims.audio_dim) << 32) ^
                         p.dims.joint_dim));
  auto mix_f32 = [&h](const double* data, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      std::uint32_t bits;
      const float f = static_cast<float>(data[i]);
      std::memcpy(&bits, &f, sizeof(bits));
      h = detail::mix64(h ^ bits);
    }
  };
  mix_f32(p.embed.data(), p.embed.size());
  mix_f32(p.theta_q.data(), p.theta_q.size());
  mix_f32(p.theta_k.data(), p.theta_k.size());
  mix_f32(p.theta_v.data(), p.theta_v.size());
  mix_f32(p.no_bias_key.data(), p.no_bias_key.size());
  return h;
}

/// Character trigrams of "#" + text + "#", each hashed with 64-bit FNV-1a
/// mod vocab. Order preserved, duplicates retained; a word of length m
/// yields m tokens (one token "#x#" for single-character words).
inline std::vector<std::uint32_t> tokenize_entity(const std::string& raw, std::size_t vocab) {
  const std::string text = lowercase(trim(raw));
  if (text.empty()) {
    throw InvalidInputError("tokenize_entity: text is empty after trimming");
  }
  if (vocab < 2) {
    throw InvalidInputError("tokenize_entity: vocab must be at least 2");
  }
  const std::string marked = "#" + text + "#";
  std::vector<std::uint32_t> tokens;
  tokens.reserve(marked.size() - 2);
  for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
    const std::uint64_t h = fnv1a64(marked.data() + i, 3);
    tokens.push_back(static_cast<std::uint32_t>(h % vocab));
  }
  return tokens;
}

/// Raw 64-bit trigram hashes (no bucketing); the synthetic-audio generator
/// seeds per-trigram directions from these.
inline std::vector<std::uint64_t> trigram_hashes(const std::string& raw) {
  const std::string text = lowercase(trim(raw));
  if (text.empty()) {
    throw InvalidInputError("trigram_hashes: text is empty after trimming");
  }
  const std::string marked = "#" + text + "#";
  std::vector<std::uint64_t> hashes;
  hashes.reserve(marked.size() - 2);
  for (std::size_t i = 0; i + 3 <= marked.size(); ++i) {
    hashes.push_back(fnv1a64(marked.data() + i, 3));
  }
  return hashes;
}

/// Mean-pooled token embeddings: C = (1/m) sum_i embed[tokens_i].
inline std::vector<double> encode_entity(const std::vector<std::uint32_t>& tokens,
                                         const AdapterParams& params) {
  if (tokens.empty()) {
    throw InvalidInputError("encode_entity: token list is empty");
  }
  std::vector<double> c(params.dims.entity_dim, 0.0);
  for (std::uint32_t t : tokens) {
    if (t >= params.dims.vocab) {
      throw InvalidInputError("encode_entity: token id " + std::to_string(t) +
                              " out of range for vocab " + std::to_string(params.dims.vocab));
    }
    const auto row = params.embed.row(t);
    for (std::size_t j = 0; j < c.size(); ++j) {
      c[j] += row[j];
    }
  }
  const double inv = 1.0 / static_cast<double>(tokens.size());
  for (double& v : c) {
    v *= inv;
  }
  return c;
}

/// Per-entity vectors and their key/value projections, all stored float32.
/// Keys and values are derived from the stored (already truncated) entity
/// vectors, so both are bit-reproducible from entity_vecs and the params.
struct EncodedCatalog {
  Matrix<float> entity_vecs;  // N x entity_dim
  Matrix<float> keys;         // N x joint_dim
  Matrix<float> values;       // N x audio_dim
  std::uint64_t catalog_hash = 0;  // binds catalog texts and params together
  std::uint64_t param_hash = 0;

  std::size_t size() const { return entity_vecs.rows(); }
};

inline std::uint64_t combine_catalog_hash(std::uint64_t catalog_content, std::uint64_t params) {
  ByteWriter w;
  w.put<std::uint64_t>(catalog_content);
  w.put<std::uint64_t>(params);
  return fnv1a64(w.bytes().data(), w.bytes().size());
}

inline EncodedCatalog encode_catalog(const Catalog& catalog, const AdapterParams& params) {
  if (!params.all_finite()) {
    throw InvalidInputError("encode_catalog: params contain non-finite entries");
  }
  const std::size_t n = catalog.size();
  EncodedCatalog enc;
  enc.entity_vecs = Matrix<float>(n, params.dims.entity_dim);
  enc.keys = Matrix<float>(n, params.dims.joint_dim);
  enc.values = Matrix<float>(n, params.dims.audio_dim);
  std::vector<double> cwide(params.dims.entity_dim);
  for (std::size_t id = 0; id < n; ++id) {
    std::vector<double> c;
    try {
      c = encode_entity(tokenize_entity(catalog.text(id), params.dims.vocab), params);
    } catch (const InvalidInputError& e) {
      throw InvalidInputError("entity " + std::to_string(id) + ": " + e.what());
    }
    auto ev = enc.entity_vecs.row(id);
    for (std::size_t j = 0; j < c.size(); ++j) {
      ev[j] = static_cast<float>(c[j]);
      cwide[j] = static_cast<double>(ev[j]);  // project the truncated vector
    }
    const std::span<const double> cw(cwide);
    auto kr = enc.keys.row(id);
    for (std::size_t r = 0; r < params.dims.joint_dim; ++r) {
      kr[r] = static_cast<float>(dot(params.theta_k.row(r), cw));
    }
    auto vr = enc.values.row(id);
    for (std::size_t r = 0; r < params.dims.audio_dim; ++r) {
      vr[r] = static_cast<float>(dot(params.theta_v.row(r), cw));
    }
  }
  enc.param_hash = params_hash(params);
  enc.catalog_hash = combine_catalog_hash(catalog.content_hash(), enc.param_hash);
  return enc;
}

}  // namespace rac
