#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "rac/biasing.hpp"
#include "rac/catalog.hpp"
#include "rac/encoder.hpp"
#include "rac/error.hpp"
#include "rac/rng.hpp"

namespace rac {

/// Knobs for the synthetic confusable-entity fixtures. Catalogs carry
/// base_count word families: one pronounceable base word plus
/// variants_per_base words at edit distance one from it. Utterances are
/// noise frames with the labeled entity's acoustic signature added over a
/// span of `span` frames.
struct SynthConfig {
  std::size_t base_count = 50;
  std::size_t variants_per_base = 4;
  std::size_t min_word_len = 5;
  std::size_t max_word_len = 9;
  std::size_t frames = 12;        // T
  std::size_t span = 4;           // L, signature frames per labeled utterance
  double noise_sigma = 0.12;      // calibrated so matched-key decoding stays >= 0.99
  std::size_t signature_dim = 64; // must equal the adapter's audio_dim
  double none_fraction = 0.1;
  std::uint64_t seed = 0;

  std::size_t catalog_size() const { return base_count * (1 + variants_per_base); }

  void validate() const {
    if (base_count == 0 && variants_per_base == 0) {
      throw InvalidInputError("synth: catalog would be empty");
    }
    if (min_word_len < 2 || max_word_len < min_word_len) {
      throw InvalidInputError("synth: word length range must satisfy 2 <= min <= max");
    }
    if (span > frames || frames == 0) {
      throw InvalidInputError("synth: span must not exceed the frame count");
    }
    if (noise_sigma < 0.0) {
      throw InvalidInputError("synth: noise sigma must be nonnegative");
    }
    if (none_fraction < 0.0 || none_fraction >= 1.0) {
      throw InvalidInputError("synth: none fraction must lie in [0, 1)");
    }
  }
};

struct LabeledUtterance {
  FrameSequence utterance;
  std::optional<std::uint32_t> label;
  std::size_t span_start = 0;  // meaningful only when labeled
};

namespace detail {

constexpr const char* kConsonants = "bcdfghjklmnprstvz";
constexpr const char* kVowels = "aeiou";

inline std::string random_base_word(SplitMix64& rng, std::size_t min_len, std::size_t max_len) {
  const std::size_t len = min_len + rng.below(max_len - min_len + 1);
  std::string w;
  w.reserve(len);
  bool consonant = rng.below(2) == 0;
  for (std::size_t i = 0; i < len; ++i) {
    const char* pool = consonant ? kConsonants : kVowels;
    const std::size_t pool_len = consonant ? 17 : 5;
    w.push_back(pool[rng.below(pool_len)]);
    consonant = !consonant;
  }
  return w;
}

inline std::string random_edit1_variant(const std::string& base, SplitMix64& rng) {
  std::string w = base;
  const std::size_t op = rng.below(3);
  const char letter = static_cast<char>('a' + rng.below(26));
  if (op == 0) {  // substitute
    const std::size_t pos = rng.below(w.size());
    w[pos] = letter;
  } else if (op == 1) {  // insert
    const std::size_t pos = rng.below(w.size() + 1);
    w.insert(w.begin() + static_cast<std::ptrdiff_t>(pos), letter);
  } else {  // delete
    const std::size_t pos = rng.below(w.size());
    w.erase(w.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  return w;
}

}  // namespace detail

/// Plain dynamic-programming Levenshtein distance.
inline std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1);
  std::vector<std::size_t> cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

/// Deterministic confusable catalog: families of one base word plus its
/// edit-distance-one variants, ids grouped family by family.
inline Catalog gen_catalog(const SynthConfig& cfg) {
  cfg.validate();
  constexpr std::size_t kMaxRetries = 1000;
  SplitMix64 rng = SplitMix64::stream(cfg.seed, 0x636174);
  std::unordered_set<std::string> seen;
  std::vector<std::string> texts;
  auto draw_unique = [&](auto&& make, const char* what) {
    for (std::size_t attempt = 0; attempt < kMaxRetries; ++attempt) {
      std::string w = make();
      if (w.empty()) continue;
      if (seen.insert(w).second) {
        texts.push_back(std::move(w));
        return;
      }
    }
    throw GenerationFailureError(std::string("could not draw a fresh ") + what +
                                 "; widen the word-length range");
  };
  for (std::size_t b = 0; b < cfg.base_count; ++b) {
    draw_unique([&] { return detail::random_base_word(rng, cfg.min_word_len, cfg.max_word_len); },
                "base word");
    const std::string base = texts.back();
    for (std::size_t v = 0; v < cfg.variants_per_base; ++v) {
      draw_unique([&] { return detail::random_edit1_variant(base, rng); }, "variant");
    }
  }
  return Catalog::from_texts(texts);
}

/// Unit vector assembled from per-trigram pseudo-random unit directions, so
/// words sharing trigrams share signature mass. Seeded by (seed, trigram
/// hash); independent of any catalog.
inline std::vector<double> acoustic_signature(const std::string& text, std::size_t dim,
                                              std::uint64_t seed) {
  const std::vector<std::uint64_t> grams = trigram_hashes(text);
  std::vector<double> sig(dim, 0.0);
  std::vector<double> g(dim);
  for (std::uint64_t h : grams) {
    SplitMix64 rng = SplitMix64::stream(seed, h);
    double norm2 = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
      g[i] = rng.gaussian();
      norm2 += g[i] * g[i];
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t i = 0; i < dim; ++i) sig[i] += g[i] * inv;
  }
  const double inv = 1.0 / std::sqrt(squared_norm(sig));
  for (double& v : sig) v *= inv;
  return sig;
}

/// Gaussian noise frames; labeled utterances additionally carry the entity's
/// signature over [span_start, span_start + span), each such frame rescaled
/// to norm at most 2.
inline LabeledUtterance gen_utterance(std::optional<std::uint32_t> entity, const Catalog& catalog,
                                      const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (entity && *entity >= catalog.size()) {
    throw InvalidInputError("gen_utterance: entity id out of range");
  }
  SplitMix64 rng = SplitMix64::stream(seed, 0x757474);
  Matrix<double> frames(cfg.frames, cfg.signature_dim);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t j = 0; j < cfg.signature_dim; ++j) {
      frames(t, j) = cfg.noise_sigma * rng.gaussian();
    }
  }
  LabeledUtterance out;
  out.label = entity;
  if (entity) {
    out.span_start = static_cast<std::size_t>(rng.below(cfg.frames - cfg.span + 1));
    const std::vector<double> sig =
        acoustic_signature(catalog.text(*entity), cfg.signature_dim, cfg.seed);
    for (std::size_t t = out.span_start; t < out.span_start + cfg.span; ++t) {
      auto row = frames.row(t);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += sig[j];
      const double norm = std::sqrt(squared_norm(row));
      if (norm > 2.0) {
        const double scale = 2.0 / norm;
        for (double& v : row) v *= scale;
      }
    }
  }
  out.utterance.frames = Matrix<float>(cfg.frames, cfg.signature_dim);
  for (std::size_t t = 0; t < cfg.frames; ++t) {
    for (std::size_t j = 0; j < cfg.signature_dim; ++j) {
      out.utterance.frames(t, j) = static_cast<float>(frames(t, j));
    }
  }
  return out;
}

struct SynthDataset {
  std::vector<LabeledUtterance> train;
  std::vector<LabeledUtterance> test;

  /// Distinct entity ids labeled in the test split.
  std::vector<std::uint32_t> test_ground_truth() const {
    std::vector<std::uint32_t> ids;
    for (const auto& u : test) {
      if (u.label) ids.push_back(*u.label);
    }
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
  }
};

/// Uniform labels over the catalog with a none_fraction share of unlabeled
/// utterances; deterministic 80/20 split (at least one test utterance).
inline SynthDataset gen_dataset(const Catalog& catalog, std::size_t count,
                                const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (count < 2) {
    throw InvalidInputError("gen_dataset: need at least two utterances to split");
  }
  SplitMix64 label_rng = SplitMix64::stream(seed, 0x6c6162);
  SplitMix64 seed_rng = SplitMix64::stream(seed, 0x757364);
  const std::size_t test_count = std::max<std::size_t>(1, count / 5);
  const std::size_t train_count = count - test_count;
  SynthDataset ds;
  ds.train.reserve(train_count);
  ds.test.reserve(test_count);
  for (std::size_t i = 0; i < count; ++i) {
    std::optional<std::uint32_t> label;
    if (label_rng.next_double() >= cfg.none_fraction) {
      label = static_cast<std::uint32_t>(label_rng.below(catalog.size()));
    }
    LabeledUtterance u = gen_utterance(label, catalog, cfg, seed_rng.next());
    (i < train_count ? ds.train : ds.test).push_back(std::move(u));
  }
  return ds;
}

// Dataset line format: label id (or "-"), span start, then T x audio_dim
// float32 values in scientific notation, all tab-separated. %.8e keeps the
// full float32 value, so a write/read round trip is bit exact.

inline void save_utterances(const std::vector<LabeledUtterance>& utts, const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw InvalidInputError("cannot write dataset file: " + path);
  }
  char buf[32];
  for (const auto& u : utts) {
    if (u.label) {
      out << *u.label;
    } else {
      out << '-';
    }
    out << '\t' << u.span_start;
    const Matrix<float>& f = u.utterance.frames;
    for (std::size_t t = 0; t < f.rows(); ++t) {
      for (std::size_t j = 0; j < f.cols(); ++j) {
        std::snprintf(buf, sizeof(buf), "%.8e", static_cast<double>(f(t, j)));
        out << '\t' << buf;
      }
    }
    out << '\n';
  }
}

inline std::vector<LabeledUtterance> load_utterances(const std::string& path,
                                                     std::size_t audio_dim) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInputError("cannot open dataset file: " + path);
  }
  std::vector<LabeledUtterance> utts;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (start <= line.size()) {
      const std::size_t tab = line.find('\t', start);
      const std::size_t end = tab == std::string::npos ? line.size() : tab;
      fields.push_back(line.substr(start, end - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    const std::string where = path + ":" + std::to_string(line_no);
    if (fields.size() < 2 || (fields.size() - 2) % audio_dim != 0 || fields.size() == 2) {
      throw InvalidInputError("malformed dataset record at " + where);
    }
    LabeledUtterance u;
    try {
      if (fields[0] != "-") {
        u.label = static_cast<std::uint32_t>(std::stoul(fields[0]));
      }
      u.span_start = std::stoul(fields[1]);
      const std::size_t t_count = (fields.size() - 2) / audio_dim;
      u.utterance.frames = Matrix<float>(t_count, audio_dim);
      for (std::size_t i = 0; i + 2 < fields.size(); ++i) {
        u.utterance.frames(i / audio_dim, i % audio_dim) = std::stof(fields[i + 2]);
      }
    } catch (const std::exception&) {
      throw InvalidInputError("malformed dataset record at " + where);
    }
    utts.push_back(std::move(u));
  }
  return utts;
}

}  // namespace rac
