#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "rac/encoder.hpp"
#include "rac/error.hpp"
#include "rac/matrix.hpp"

namespace rac {

/// T audio feature frames, one row per time step.
struct FrameSequence {
  Matrix<float> frames;  // T x audio_dim

  std::size_t frame_count() const { return frames.rows(); }
};

/// Softmax scores for one frame: candidate entities in ascending id order,
/// then the no-bias slot as the final entry.
struct FrameScores {
  std::vector<std::uint32_t> candidate_ids;
  std::vector<double> probs;  // candidate_ids.size() + 1 entries

  double no_bias_prob() const { return probs.back(); }
};

struct BiasOutput {
  Matrix<double> bias_vectors;  // T x audio_dim
  std::vector<FrameScores> per_frame;
};

inline double attention_scale(const Dims& dims) {
  return 1.0 / std::sqrt(static_cast<double>(dims.joint_dim));
}

inline std::vector<double> project_query(std::span<const float> frame,
                                         const AdapterParams& params) {
  if (frame.size() != params.dims.audio_dim) {
    throw InvalidInputError("frame width " + std::to_string(frame.size()) +
                            " does not match audio_dim " +
                            std::to_string(params.dims.audio_dim));
  }
  return matvec(params.theta_q, frame);
}

namespace detail {

/// Scaled raw attention scores for one already-projected query: one score per
/// candidate (ascending ids expected), then the no-bias score last.
inline void raw_scores(std::span<const double> q, double scale, const Matrix<float>& keys,
                       std::span<const double> no_bias_key,
                       std::span<const std::uint32_t> candidates, std::span<double> out) {
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out[i] = dot(q, keys.row(candidates[i])) * scale;
  }
  out[candidates.size()] = dot(q, no_bias_key) * scale;
}

/// Softmax in place over scores, then the biasing vector as the probability-
/// weighted sum of candidate value rows, accumulated in ascending id order.
/// The no-bias slot contributes nothing to the sum.
inline void softmax_and_bias(std::span<double> scores, const Matrix<float>& values,
                             std::span<const std::uint32_t> candidates,
                             std::span<double> bias_out) {
  double mx = scores[0];
  for (double s : scores) mx = std::max(mx, s);
  double z = 0.0;
  for (double& s : scores) {
    s = std::exp(s - mx);
    z += s;
  }
  const double inv = 1.0 / z;
  for (double& s : scores) s *= inv;
  std::fill(bias_out.begin(), bias_out.end(), 0.0);
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto vrow = values.row(candidates[i]);
    const double p = scores[i];
    for (std::size_t j = 0; j < bias_out.size(); ++j) {
      bias_out[j] += p * static_cast<double>(vrow[j]);
    }
  }
}

inline void check_encoding(const AdapterParams& params, const EncodedCatalog& enc) {
  if (params_hash(params) != enc.param_hash) {
    throw StaleEncodingError("encoded catalog was built from different adapter parameters");
  }
}

inline std::vector<std::uint32_t> all_ids(std::size_t n) {
  std::vector<std::uint32_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::uint32_t>(i);
  return ids;
}

}  // namespace detail

/// Raw scaled scores of one frame against a candidate subset; entries follow
/// the candidate order, with the no-bias score appended.
inline std::vector<double> score_frame(std::span<const float> frame, const AdapterParams& params,
                                       const Matrix<float>& keys,
                                       std::span<const std::uint32_t> candidates) {
  if (keys.cols() != params.dims.joint_dim) {
    throw InvalidInputError("key width does not match joint_dim");
  }
  for (std::uint32_t id : candidates) {
    if (id >= keys.rows()) {
      throw InvalidInputError("candidate id " + std::to_string(id) + " out of range");
    }
  }
  const std::vector<double> q = project_query(frame, params);
  std::vector<double> out(candidates.size() + 1);
  detail::raw_scores(q, attention_scale(params.dims), keys, params.no_bias_key, candidates, out);
  return out;
}

/// Attention biasing restricted to per-frame candidate sets. Candidate lists
/// are canonicalized to ascending unique ids; an empty list puts all mass on
/// the no-bias slot and yields a zero biasing vector.
inline BiasOutput bias_vector_topk(const FrameSequence& frames, const AdapterParams& params,
                                   const EncodedCatalog& enc,
                                   const std::vector<std::vector<std::uint32_t>>& retrieved) {
  detail::check_encoding(params, enc);
  const std::size_t t_count = frames.frame_count();
  if (t_count == 0) {
    throw InvalidInputError("frame sequence is empty");
  }
  if (retrieved.size() != t_count) {
    throw InvalidInputError("retrieved candidate lists do not cover every frame");
  }
  const double scale = attention_scale(params.dims);
  BiasOutput out;
  out.bias_vectors = Matrix<double>(t_count, params.dims.audio_dim);
  out.per_frame.resize(t_count);
  for (std::size_t t = 0; t < t_count; ++t) {
    std::vector<std::uint32_t> cands = retrieved[t];
    std::sort(cands.begin(), cands.end());
    cands.erase(std::unique(cands.begin(), cands.end()), cands.end());
    if (!cands.empty() && cands.back() >= enc.size()) {
      throw InvalidInputError("candidate id " + std::to_string(cands.back()) +
                              " out of range for catalog of " + std::to_string(enc.size()));
    }
    const std::vector<double> q = project_query(frames.frames.row(t), params);
    FrameScores& fs = out.per_frame[t];
    fs.candidate_ids = std::move(cands);
    fs.probs.resize(fs.candidate_ids.size() + 1);
    detail::raw_scores(q, scale, enc.keys, params.no_bias_key, fs.candidate_ids, fs.probs);
    detail::softmax_and_bias(fs.probs, enc.values, fs.candidate_ids, out.bias_vectors.row(t));
  }
  return out;
}

/// Full-catalog biasing: every entity is a candidate at every frame.
inline BiasOutput bias_vector_full(const FrameSequence& frames, const AdapterParams& params,
                                   const EncodedCatalog& enc) {
  detail::check_encoding(params, enc);
  const std::vector<std::vector<std::uint32_t>> full(frames.frame_count(),
                                                     detail::all_ids(enc.size()));
  return bias_vector_topk(frames, params, enc, full);
}

/// Utterance-level prediction: an entity's evidence is its peak per-frame
/// probability; report the best entity if its peak clears the threshold.
/// Ties go to the lowest id.
inline std::optional<std::uint32_t> decode_entity(const BiasOutput& bias, double tau = 0.5) {
  if (tau < 0.0 || tau > 1.0) {
    throw InvalidInputError("decode threshold must lie in [0, 1]");
  }
  std::optional<std::uint32_t> best;
  double best_peak = -1.0;
  std::vector<std::pair<std::uint32_t, double>> peaks;
  for (const FrameScores& fs : bias.per_frame) {
    for (std::size_t i = 0; i < fs.candidate_ids.size(); ++i) {
      peaks.emplace_back(fs.candidate_ids[i], fs.probs[i]);
    }
  }
  std::sort(peaks.begin(), peaks.end());
  std::uint32_t cur_id = 0;
  double cur_peak = -1.0;
  bool have_cur = false;
  auto consider = [&]() {
    if (have_cur && cur_peak > best_peak) {
      best_peak = cur_peak;
      best = cur_id;
    }
  };
  for (const auto& [id, p] : peaks) {
    if (!have_cur || id != cur_id) {
      consider();
      cur_id = id;
      cur_peak = p;
      have_cur = true;
    } else {
      cur_peak = std::max(cur_peak, p);
    }
  }
  consider();
  if (!best || best_peak < tau) {
    return std::nullopt;
  }
  return best;
}

}  // namespace rac
