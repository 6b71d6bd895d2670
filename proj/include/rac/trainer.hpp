#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "rac/biasing.hpp"
#include "rac/catalog.hpp"
#include "rac/cluster_index.hpp"
#include "rac/encoder.hpp"
#include "rac/error.hpp"
#include "rac/index.hpp"
#include "rac/synth.hpp"

namespace rac {

/// One supervised utterance: the spoken entity plus distractor entities.
/// negative_ids are kept in draw order; the loss reorders candidates as
/// positive first, then negatives ascending.
struct TrainingExample {
  FrameSequence utterance;
  std::uint32_t positive_id = 0;
  std::vector<std::uint32_t> negative_ids;
};

struct Curriculum {
  std::size_t start_size = 4;
  std::size_t max_size = 40;
  std::size_t step_per_epoch = 4;
};

enum class NegativeMode { random, hard };

struct TrainConfig {
  std::size_t epochs = 10;
  double learning_rate = 0.05;
  std::size_t negatives_per_example = 20;
  std::optional<Curriculum> curriculum;
  NegativeMode mode = NegativeMode::random;
  std::uint64_t seed = 0;
  double l2 = 1e-5;

  std::size_t negatives_at_epoch(std::size_t epoch) const {
    if (!curriculum) return negatives_per_example;
    if (curriculum->start_size > curriculum->max_size) {
      throw InvalidInputError("curriculum start size exceeds max size");
    }
    return std::min(curriculum->max_size,
                    curriculum->start_size + epoch * curriculum->step_per_epoch);
  }
};

/// Catalog with its token ids precomputed once.
struct TrainingCatalog {
  const Catalog* catalog = nullptr;
  std::vector<std::vector<std::uint32_t>> tokens;

  std::size_t size() const { return tokens.size(); }
};

inline TrainingCatalog tokenize_catalog(const Catalog& catalog, const Dims& dims) {
  TrainingCatalog tc;
  tc.catalog = &catalog;
  tc.tokens.reserve(catalog.size());
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    tc.tokens.push_back(tokenize_entity(catalog.text(i), dims.vocab));
  }
  return tc;
}

/// Utterance collapsed to a single query: project the mean frame.
inline std::vector<double> pool_query(const FrameSequence& utterance,
                                      const AdapterParams& params) {
  const Matrix<float>& f = utterance.frames;
  if (f.rows() == 0) {
    throw InvalidInputError("pool_query: utterance has no frames");
  }
  std::vector<double> mean(f.cols(), 0.0);
  for (std::size_t t = 0; t < f.rows(); ++t) {
    const auto row = f.row(t);
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += static_cast<double>(row[j]);
  }
  const double inv = 1.0 / static_cast<double>(f.rows());
  for (double& v : mean) v *= inv;
  return matvec(params.theta_q, mean);
}

/// Gradients in the same shapes as AdapterParams.
struct GradBuffer {
  Matrix<double> embed;
  Matrix<double> theta_q;
  Matrix<double> theta_k;
  Matrix<double> theta_v;
  std::vector<double> no_bias_key;

  void reset(const AdapterParams& p) {
    if (embed.rows() != p.embed.rows()) {
      embed = Matrix<double>(p.embed.rows(), p.embed.cols());
      theta_q = Matrix<double>(p.theta_q.rows(), p.theta_q.cols());
      theta_k = Matrix<double>(p.theta_k.rows(), p.theta_k.cols());
      theta_v = Matrix<double>(p.theta_v.rows(), p.theta_v.cols());
      no_bias_key.resize(p.no_bias_key.size());
    }
    std::fill(embed.data(), embed.data() + embed.size(), 0.0);
    std::fill(theta_q.data(), theta_q.data() + theta_q.size(), 0.0);
    std::fill(theta_k.data(), theta_k.data() + theta_k.size(), 0.0);
    std::fill(theta_v.data(), theta_v.data() + theta_v.size(), 0.0);
    std::fill(no_bias_key.begin(), no_bias_key.end(), 0.0);
  }
};

namespace detail {

struct ExampleForward {
  std::vector<std::uint32_t> candidates;       // positive first, then negatives ascending
  std::vector<std::vector<double>> entity_vecs;
  std::vector<std::vector<double>> keys;
  std::vector<double> query;
  std::vector<double> probs;  // candidates + no-bias slot
  double ce_loss = 0.0;
};

inline ExampleForward example_forward(const TrainingExample& ex, const AdapterParams& params,
                                      const TrainingCatalog& tcat) {
  ExampleForward f;
  f.candidates.push_back(ex.positive_id);
  {
    std::vector<std::uint32_t> negs = ex.negative_ids;
    std::sort(negs.begin(), negs.end());
    for (std::uint32_t id : negs) {
      if (id == ex.positive_id) {
        throw InvalidInputError("training example lists the positive among its negatives");
      }
      f.candidates.push_back(id);
    }
  }
  for (std::uint32_t id : f.candidates) {
    if (id >= tcat.size()) {
      throw InvalidInputError("training example references entity " + std::to_string(id) +
                              " outside the catalog");
    }
  }
  f.query = pool_query(ex.utterance, params);
  const double scale = attention_scale(params.dims);
  f.probs.resize(f.candidates.size() + 1);
  for (std::size_t j = 0; j < f.candidates.size(); ++j) {
    f.entity_vecs.push_back(encode_entity(tcat.tokens[f.candidates[j]], params));
    f.keys.push_back(matvec(params.theta_k, f.entity_vecs.back()));
    f.probs[j] = dot(f.query, f.keys.back()) * scale;
  }
  f.probs.back() = dot(f.query, params.no_bias_key) * scale;

  double mx = f.probs[0];
  for (double s : f.probs) mx = std::max(mx, s);
  double z = 0.0;
  for (double& s : f.probs) {
    s = std::exp(s - mx);
    z += s;
  }
  for (double& s : f.probs) s /= z;
  f.ce_loss = -std::log(f.probs[0]);
  return f;
}

inline double l2_penalty(const AdapterParams& p, double l2) {
  if (l2 == 0.0) return 0.0;
  double sum = 0.0;
  sum += squared_norm(std::span<const double>(p.embed.data(), p.embed.size()));
  sum += squared_norm(std::span<const double>(p.theta_q.data(), p.theta_q.size()));
  sum += squared_norm(std::span<const double>(p.theta_k.data(), p.theta_k.size()));
  return l2 * sum;
}

}  // namespace detail

/// Softmax cross-entropy of the positive against negatives and the no-bias
/// slot, plus an L2 penalty on embed/theta_q/theta_k.
inline std::pair<double, std::vector<double>> example_loss(const TrainingExample& ex,
                                                           const AdapterParams& params,
                                                           const TrainingCatalog& tcat,
                                                           double l2 = 0.0) {
  detail::ExampleForward f = detail::example_forward(ex, params, tcat);
  return {f.ce_loss + detail::l2_penalty(params, l2), std::move(f.probs)};
}

/// Analytic gradient of example_loss. theta_v never enters the loss, so its
/// block stays zero; the mean pool spreads each candidate's gradient evenly
/// over its token occurrences. Returns the loss of the same forward pass.
inline double example_grad(const TrainingExample& ex, const AdapterParams& params,
                           const TrainingCatalog& tcat, double l2, GradBuffer& out) {
  detail::ExampleForward f = detail::example_forward(ex, params, tcat);
  out.reset(params);
  const double scale = attention_scale(params.dims);
  const std::size_t d = params.dims.joint_dim;
  const std::size_t d_e = params.dims.entity_dim;
  const std::size_t d_a = params.dims.audio_dim;

  // dL/dscore_j = p_j - [j == positive]; the no-bias slot has no target mass.
  std::vector<double> gscore = f.probs;
  gscore[0] -= 1.0;

  // dL/dq accumulates every slot's key weighted by its score gradient.
  std::vector<double> gq(d, 0.0);
  for (std::size_t j = 0; j < f.candidates.size(); ++j) {
    for (std::size_t r = 0; r < d; ++r) gq[r] += gscore[j] * f.keys[j][r];
  }
  for (std::size_t r = 0; r < d; ++r) {
    gq[r] += gscore.back() * params.no_bias_key[r];
    gq[r] *= scale;
    out.no_bias_key[r] = scale * gscore.back() * f.query[r];
  }

  // theta_q: outer product of dL/dq with the mean frame.
  const Matrix<float>& frames = ex.utterance.frames;
  std::vector<double> mean(d_a, 0.0);
  for (std::size_t t = 0; t < frames.rows(); ++t) {
    const auto row = frames.row(t);
    for (std::size_t j = 0; j < d_a; ++j) mean[j] += static_cast<double>(row[j]);
  }
  for (double& v : mean) v /= static_cast<double>(frames.rows());
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d_a; ++c) out.theta_q(r, c) = gq[r] * mean[c];
  }

  // theta_k: sum_j scale * g_j * (q outer C_j) = q outer (scale * sum_j g_j C_j).
  std::vector<double> gsum_c(d_e, 0.0);
  for (std::size_t j = 0; j < f.candidates.size(); ++j) {
    for (std::size_t c = 0; c < d_e; ++c) gsum_c[c] += gscore[j] * f.entity_vecs[j][c];
  }
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d_e; ++c) out.theta_k(r, c) = scale * f.query[r] * gsum_c[c];
  }

  // embed rows via dL/dC_j = scale * g_j * theta_k^T q, split over tokens.
  std::vector<double> ktq(d_e, 0.0);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t c = 0; c < d_e; ++c) ktq[c] += params.theta_k(r, c) * f.query[r];
  }
  for (std::size_t j = 0; j < f.candidates.size(); ++j) {
    const auto& tokens = tcat.tokens[f.candidates[j]];
    const double coef = scale * gscore[j] / static_cast<double>(tokens.size());
    for (std::uint32_t t : tokens) {
      auto row = out.embed.row(t);
      for (std::size_t c = 0; c < d_e; ++c) row[c] += coef * ktq[c];
    }
  }

  if (l2 != 0.0) {
    const double two_l2 = 2.0 * l2;
    for (std::size_t i = 0; i < out.embed.size(); ++i) {
      out.embed.data()[i] += two_l2 * params.embed.data()[i];
    }
    for (std::size_t i = 0; i < out.theta_q.size(); ++i) {
      out.theta_q.data()[i] += two_l2 * params.theta_q.data()[i];
    }
    for (std::size_t i = 0; i < out.theta_k.size(); ++i) {
      out.theta_k.data()[i] += two_l2 * params.theta_k.data()[i];
    }
  }
  return f.ce_loss + detail::l2_penalty(params, l2);
}

/// Seeded draw of n distinct ids from the pool, never the positive.
inline std::vector<std::uint32_t> sample_negatives_random(std::uint32_t positive_id,
                                                          const std::vector<std::uint32_t>& pool,
                                                          std::size_t n, std::uint64_t seed) {
  std::vector<std::uint32_t> candidates;
  candidates.reserve(pool.size());
  for (std::uint32_t id : pool) {
    if (id != positive_id) candidates.push_back(id);
  }
  if (candidates.size() < n) {
    throw InvalidInputError("sample_negatives_random: pool too small for " + std::to_string(n) +
                            " negatives");
  }
  SplitMix64 rng = SplitMix64::stream(seed, 0x726e6567);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(candidates.size() - i));
    std::swap(candidates[i], candidates[j]);
  }
  candidates.resize(n);
  return candidates;
}

/// k-means clustering of the catalog's key vectors; hard negatives come from
/// the positive's own cluster.
struct NegativeClusters {
  ClusterIndex clustering;
  std::vector<std::uint32_t> cluster_of;  // entity id -> cluster

  std::size_t cluster_count() const { return clustering.members.size(); }
};

inline std::size_t default_cluster_count(std::size_t catalog_size) {
  return std::min(catalog_size, std::max<std::size_t>(8, catalog_size / 20));
}

inline NegativeClusters build_negative_clusters(const Catalog& catalog,
                                                const AdapterParams& params, std::size_t s,
                                                std::uint64_t seed) {
  if (s == 0 || s > catalog.size()) {
    throw InvalidInputError("build_negative_clusters: cluster count must lie in [1, N]");
  }
  const EncodedCatalog enc = encode_catalog(catalog, params);
  NegativeClusters nc;
  nc.clustering = build_cluster_index(enc.keys, static_cast<std::uint32_t>(s), 25, seed);
  nc.cluster_of.resize(catalog.size());
  for (std::size_t c = 0; c < nc.clustering.members.size(); ++c) {
    for (std::uint32_t id : nc.clustering.members[c]) {
      nc.cluster_of[id] = static_cast<std::uint32_t>(c);
    }
  }
  return nc;
}

/// Same-cluster negatives for the positive. If its cluster runs out, the
/// remaining draws come from the other clusters in order of centroid
/// distance. Returns fewer than n only when the whole catalog runs out.
inline std::vector<std::uint32_t> sample_negatives_hard(std::uint32_t positive_id,
                                                        const NegativeClusters& clusters,
                                                        std::size_t n, std::uint64_t seed) {
  if (positive_id >= clusters.cluster_of.size()) {
    throw InvalidInputError("sample_negatives_hard: positive id not covered by the clustering");
  }
  SplitMix64 rng = SplitMix64::stream(seed, 0x686e6567);
  const std::uint32_t own = clusters.cluster_of[positive_id];
  std::vector<std::uint32_t> out;

  auto take_from = [&](std::uint32_t cluster, std::size_t want) {
    std::vector<std::uint32_t> members;
    for (std::uint32_t id : clusters.clustering.members[cluster]) {
      if (id != positive_id) members.push_back(id);
    }
    const std::size_t take = std::min(want, members.size());
    for (std::size_t i = 0; i < take; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(members.size() - i));
      std::swap(members[i], members[j]);
      out.push_back(members[i]);
    }
  };

  take_from(own, n);
  if (out.size() < n) {
    // Rank the remaining clusters by centroid distance to the positive's.
    std::vector<std::pair<double, std::uint32_t>> ranked;
    const auto own_centroid = clusters.clustering.centroids.row(own);
    for (std::size_t c = 0; c < clusters.cluster_count(); ++c) {
      if (c == own) continue;
      ranked.emplace_back(squared_distance(own_centroid, clusters.clustering.centroids.row(c)),
                          static_cast<std::uint32_t>(c));
    }
    std::sort(ranked.begin(), ranked.end());
    for (const auto& [dist, c] : ranked) {
      if (out.size() >= n) break;
      take_from(c, n - out.size());
    }
  }
  return out;
}

struct TrainResult {
  AdapterParams params;
  std::vector<double> epoch_mean_loss;
};

/// Plain SGD over shuffled examples. Each step uses the first
/// negatives_at_epoch(e) stored negatives of the example (sample order), so
/// the curriculum widens the candidate set epoch by epoch. Fine-tuning stages
/// must pass the previous stage's parameters explicitly.
inline TrainResult train(const TrainConfig& config, const std::vector<TrainingExample>& data,
                         const AdapterParams& initial, const TrainingCatalog& tcat) {
  if (data.empty()) {
    throw InvalidInputError("train: no training examples");
  }
  TrainResult res;
  res.params = initial;
  GradBuffer grad;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  TrainingExample step_ex;
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const std::size_t n_negs = config.negatives_at_epoch(epoch);
    SplitMix64 shuffle_rng = SplitMix64::stream(config.seed, 0x73686600 + epoch);
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t step = 0; step < order.size(); ++step) {
      const TrainingExample& ex = data[order[step]];
      step_ex.utterance = ex.utterance;
      step_ex.positive_id = ex.positive_id;
      step_ex.negative_ids.assign(ex.negative_ids.begin(),
                                  ex.negative_ids.begin() +
                                      static_cast<std::ptrdiff_t>(
                                          std::min(n_negs, ex.negative_ids.size())));
      const double loss = example_grad(step_ex, res.params, tcat, config.l2, grad);
      if (!std::isfinite(loss)) {
        throw DivergedTrainingError("training loss is not finite", epoch, step);
      }
      loss_sum += loss;
      const double lr = config.learning_rate;
      AdapterParams& p = res.params;
      for (std::size_t i = 0; i < p.embed.size(); ++i) {
        p.embed.data()[i] -= lr * grad.embed.data()[i];
      }
      for (std::size_t i = 0; i < p.theta_q.size(); ++i) {
        p.theta_q.data()[i] -= lr * grad.theta_q.data()[i];
      }
      for (std::size_t i = 0; i < p.theta_k.size(); ++i) {
        p.theta_k.data()[i] -= lr * grad.theta_k.data()[i];
      }
      for (std::size_t i = 0; i < p.theta_v.size(); ++i) {
        p.theta_v.data()[i] -= lr * grad.theta_v.data()[i];
      }
      for (std::size_t i = 0; i < p.no_bias_key.size(); ++i) {
        p.no_bias_key[i] -= lr * grad.no_bias_key[i];
      }
    }
    res.epoch_mean_loss.push_back(loss_sum / static_cast<double>(order.size()));
  }
  return res;
}

/// Accuracy of full retrieve-and-bias decoding, restricted to labeled test
/// utterances whose entity has at least one confusable (edit distance <= 2)
/// sibling in the catalog.
inline double eval_confusable_accuracy(const AdapterParams& params,
                                       const std::vector<LabeledUtterance>& test_set,
                                       const Catalog& catalog, std::size_t k,
                                       double tau = 0.5) {
  const EncodedCatalog enc = encode_catalog(catalog, params);
  const RetrievalIndex index = ExactIndex{enc.keys, enc.catalog_hash};
  RetrieveOptions opt;
  opt.k = std::min(k, catalog.size());

  std::vector<std::uint32_t> labels;
  for (const auto& u : test_set) {
    if (u.label) labels.push_back(*u.label);
  }
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::unordered_set<std::uint32_t> confusable;
  for (std::uint32_t id : labels) {
    for (std::size_t other = 0; other < catalog.size(); ++other) {
      if (other != id && edit_distance(catalog.text(id), catalog.text(other)) <= 2) {
        confusable.insert(id);
        break;
      }
    }
  }

  std::size_t total = 0;
  std::size_t correct = 0;
  for (const auto& u : test_set) {
    if (!u.label || !confusable.count(*u.label)) continue;
    ++total;
    const auto retrieved = retrieve_per_frame(u.utterance, params, index, enc, opt);
    const BiasOutput bias = bias_vector_topk(u.utterance, params, enc, retrieved);
    const auto pred = decode_entity(bias, tau);
    if (pred && *pred == *u.label) ++correct;
  }
  return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
}

}  // namespace rac
