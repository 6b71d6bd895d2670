#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <ratio>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "rac/biasing.hpp"
#include "rac/encoder.hpp"
#include "rac/error.hpp"
#include "rac/index.hpp"
#include "rac/index_io.hpp"
#include "rac/synth.hpp"

namespace rac {

struct LatencyStats {
  double p50_us = 0.0;
  double p90_us = 0.0;
  double p99_us = 0.0;
  double mean_us = 0.0;
  std::size_t frames_measured = 0;
  std::size_t warmup_frames = 0;
  std::size_t catalog_size = 0;
  std::string backend;
  bool clock_warning = false;
};

struct EvalReport {
  double f1 = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double retrieval_accuracy = 0.0;  // labeled utterances whose truth was retrieved
  double recall_at_k = 0.0;         // per-frame overlap with the exact oracle's top-k
  std::size_t utterances = 0;
};

namespace detail {

inline double percentile(const std::vector<double>& sorted, double q) {
  const std::size_t idx = static_cast<std::size_t>(
      std::llround(q * static_cast<double>(sorted.size() - 1)));
  return sorted[idx];
}

constexpr bool clock_too_coarse() {
  using period = std::chrono::steady_clock::period;
  return static_cast<double>(period::num) / static_cast<double>(period::den) > 1e-6;
}

}  // namespace detail

/// Times the per-frame inference step on one thread: candidate retrieval
/// (when an index is given) plus biasing over the candidates, or biasing
/// over the whole catalog for the no-retrieval baseline. The first
/// `warmup` frames are discarded.
inline LatencyStats measure_latency(const AdapterParams& params, const EncodedCatalog& enc,
                                    const RetrievalIndex* index, const RetrieveOptions& opt,
                                    const std::vector<LabeledUtterance>& stream,
                                    std::size_t reps, std::size_t warmup) {
  if (index && index_catalog_hash(*index) != enc.catalog_hash) {
    throw StaleIndexError("index was built against a different encoded catalog");
  }
  detail::check_encoding(params, enc);
  std::size_t frames_per_rep = 0;
  for (const auto& u : stream) frames_per_rep += u.utterance.frame_count();
  if (reps * frames_per_rep < warmup + 100) {
    throw InvalidInputError("measure_latency: need at least 100 measured frames after warmup");
  }

  const double scale = attention_scale(params.dims);
  const std::vector<std::uint32_t> full_ids = detail::all_ids(enc.size());
  std::vector<double> probs(enc.size() + 1);
  std::vector<double> bias(params.dims.audio_dim);
  std::vector<std::uint32_t> cands;
  std::vector<double> samples;
  samples.reserve(reps * frames_per_rep - warmup);

  using clock = std::chrono::steady_clock;
  std::size_t seen = 0;
  for (std::size_t rep = 0; rep < reps; ++rep) {
    for (const auto& u : stream) {
      const Matrix<float>& frames = u.utterance.frames;
      for (std::size_t t = 0; t < frames.rows(); ++t) {
        const auto frame = frames.row(t);
        const auto t0 = clock::now();
        if (index == nullptr) {
          const std::vector<double> q = project_query(frame, params);
          detail::raw_scores(q, scale, enc.keys, params.no_bias_key, full_ids,
                             std::span<double>(probs.data(), full_ids.size() + 1));
          detail::softmax_and_bias(std::span<double>(probs.data(), full_ids.size() + 1),
                                   enc.values, full_ids, bias);
        } else {
          const std::vector<float> qf = project_query_f32(frame, params);
          cands = query_index(*index, qf, opt);
          std::sort(cands.begin(), cands.end());
          const std::vector<double> q = project_query(frame, params);
          if (probs.size() < cands.size() + 1) probs.resize(cands.size() + 1);
          detail::raw_scores(q, scale, enc.keys, params.no_bias_key, cands,
                             std::span<double>(probs.data(), cands.size() + 1));
          detail::softmax_and_bias(std::span<double>(probs.data(), cands.size() + 1),
                                   enc.values, cands, bias);
        }
        const auto t1 = clock::now();
        ++seen;
        if (seen > warmup) {
          samples.push_back(
              std::chrono::duration<double, std::micro>(t1 - t0).count());
        }
      }
    }
  }

  std::sort(samples.begin(), samples.end());
  LatencyStats stats;
  stats.frames_measured = samples.size();
  stats.warmup_frames = warmup;
  stats.catalog_size = enc.size();
  stats.backend = index ? backend_name(index_backend(*index)) : "full";
  stats.clock_warning = detail::clock_too_coarse();
  stats.p50_us = detail::percentile(samples, 0.50);
  stats.p90_us = detail::percentile(samples, 0.90);
  stats.p99_us = detail::percentile(samples, 0.99);
  double sum = 0.0;
  for (double s : samples) sum += s;
  stats.mean_us = sum / static_cast<double>(samples.size());
  return stats;
}

/// Runs retrieval, biasing, and decoding over a labeled test set. F1 counts
/// a non-none wrong prediction as a false positive and a missed label as a
/// false negative, micro-averaged over utterances. recall_at_k compares each
/// frame's candidates against the exhaustive oracle's top-k; the
/// no-retrieval baseline scores 1.0 on both retrieval metrics by definition.
inline EvalReport evaluate(const AdapterParams& params, const EncodedCatalog& enc,
                           const RetrievalIndex* index, const RetrieveOptions& opt,
                           const std::vector<LabeledUtterance>& test_set, double tau = 0.5) {
  EvalReport report;
  report.utterances = test_set.size();
  const std::size_t oracle_k = std::min(opt.k, enc.size());
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t labeled = 0;
  std::size_t retrieved_truth = 0;
  double overlap_sum = 0.0;
  std::size_t overlap_frames = 0;

  for (const auto& u : test_set) {
    std::vector<std::vector<std::uint32_t>> retrieved;
    if (index == nullptr) {
      retrieved.assign(u.utterance.frame_count(), detail::all_ids(enc.size()));
      overlap_sum += static_cast<double>(u.utterance.frame_count());
      overlap_frames += u.utterance.frame_count();
    } else {
      retrieved = retrieve_per_frame(u.utterance, params, *index, enc, opt);
      for (std::size_t t = 0; t < retrieved.size(); ++t) {
        const std::vector<float> qf = project_query_f32(u.utterance.frames.row(t), params);
        const RetrievalResult oracle = exact_topk_mips(qf, enc.keys, oracle_k);
        std::size_t hit = 0;
        for (std::uint32_t id : oracle.ids) {
          if (std::find(retrieved[t].begin(), retrieved[t].end(), id) != retrieved[t].end()) {
            ++hit;
          }
        }
        overlap_sum += static_cast<double>(hit) / static_cast<double>(oracle_k);
        ++overlap_frames;
      }
    }
    if (u.label) {
      ++labeled;
      bool found = false;
      for (const auto& ids : retrieved) {
        if (std::find(ids.begin(), ids.end(), *u.label) != ids.end()) {
          found = true;
          break;
        }
      }
      if (found) ++retrieved_truth;
    }
    const BiasOutput bias = bias_vector_topk(u.utterance, params, enc, retrieved);
    const std::optional<std::uint32_t> pred = decode_entity(bias, tau);
    if (pred && u.label && *pred == *u.label) {
      ++tp;
    } else {
      if (pred) ++fp;
      if (u.label) ++fn;
    }
  }

  report.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  report.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  report.f1 = (report.precision + report.recall) == 0.0
                  ? 0.0
                  : 2.0 * report.precision * report.recall / (report.precision + report.recall);
  report.retrieval_accuracy =
      labeled == 0 ? 0.0 : static_cast<double>(retrieved_truth) / static_cast<double>(labeled);
  report.recall_at_k =
      overlap_frames == 0 ? 0.0 : overlap_sum / static_cast<double>(overlap_frames);
  return report;
}

// ---------------------------------------------------------------------------
// Sweep harness
// ---------------------------------------------------------------------------

/// One measured configuration of the sweep cross-product.
struct SweepCell {
  std::string backend;  // backend token, optionally with a "-union" suffix
  std::size_t n = 0;
  std::size_t k = 0;
  std::uint64_t seed = 0;

  std::string key(std::size_t m, std::size_t l) const {
    std::ostringstream os;
    os << backend << '|' << n << '|' << k << '|' << m << '|' << l << '|' << seed;
    return os.str();
  }
};

struct SweepSpec {
  std::vector<std::size_t> sizes{250, 1000, 5000, 10000, 20000};
  std::vector<std::string> backends{"full", "hnsw"};
  std::vector<std::size_t> ks{10};
  std::vector<std::uint64_t> seeds{1};
  SynthConfig synth;
  std::size_t eval_count = 300;   // utterances per cell; the 20% test split is evaluated
  std::size_t min_frames = 1000;  // measured latency frames after warmup
  std::size_t warmup = 100;
  double tau = 0.5;
  std::string params_path;  // optional checkpoint; fresh seeded params otherwise
  Dims dims;
  IndexBuildOptions build;  // backend field overridden per cell
  RetrieveOptions retrieve; // k/union overridden per cell
};

struct SweepRow {
  SweepCell cell;
  std::size_t m = 0;
  std::size_t l = 0;
  LatencyStats latency;
  EvalReport eval;
};

inline const char* sweep_csv_header() {
  return "backend,N,k,M,l,seed,p50us,p90us,p99us,meanus,f1,precision,recall,retrieval_acc,"
         "recall_at_k,frames";
}

inline std::string format_sweep_row(const SweepRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%s,%zu,%zu,%zu,%zu,%llu,%.3f,%.3f,%.3f,%.3f,%.10g,%.10g,%.10g,%.10g,%.10g,%zu",
                r.cell.backend.c_str(), r.cell.n, r.cell.k, r.m, r.l,
                static_cast<unsigned long long>(r.cell.seed), r.latency.p50_us, r.latency.p90_us,
                r.latency.p99_us, r.latency.mean_us, r.eval.f1, r.eval.precision, r.eval.recall,
                r.eval.retrieval_accuracy, r.eval.recall_at_k, r.latency.frames_measured);
  return buf;
}

namespace detail {

struct ParsedBackend {
  std::string token;   // as written in the spec, e.g. "hnsw-union"
  std::string base;    // "full", "exact", "aexact", "ivf", "hnsw", "cluster"
  bool union_mode = false;
};

inline ParsedBackend parse_backend(const std::string& token) {
  ParsedBackend pb;
  pb.token = token;
  pb.base = token;
  const std::string suffix = "-union";
  if (pb.base.size() > suffix.size() &&
      pb.base.compare(pb.base.size() - suffix.size(), suffix.size(), suffix) == 0) {
    pb.union_mode = true;
    pb.base = pb.base.substr(0, pb.base.size() - suffix.size());
  }
  static const std::set<std::string> known{"full", "exact", "aexact", "ivf", "hnsw", "cluster"};
  if (!known.count(pb.base)) {
    throw ConfigError("backends: unknown backend '" + token + "'");
  }
  if (pb.base == "full" && pb.union_mode) {
    throw ConfigError("backends: 'full' has no union mode");
  }
  return pb;
}

inline Backend backend_from_base(const std::string& base) {
  if (base == "exact") return Backend::exact;
  if (base == "aexact") return Backend::augmented_exact;
  if (base == "ivf") return Backend::ivf;
  if (base == "hnsw") return Backend::hnsw;
  return Backend::cluster;
}

}  // namespace detail

/// The M and l columns a cell will report, derivable without building.
inline std::pair<std::size_t, std::size_t> sweep_cell_m_l(const SweepSpec& spec,
                                                          const std::string& base,
                                                          std::size_t n) {
  if (base == "ivf") {
    std::size_t cells = spec.build.ivf_cells;
    if (cells == 0) cells = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(n))));
    cells = std::clamp<std::size_t>(cells, 1, n);
    return {cells, std::min(spec.retrieve.nprobe, cells)};
  }
  if (base == "cluster") {
    const std::size_t m = std::clamp<std::size_t>(spec.build.clusters, 1, n);
    return {m, std::min<std::size_t>(spec.retrieve.l, m)};
  }
  return {0, 0};
}

/// Runs one sweep cell end to end: seeded catalog + dataset, encode, build,
/// measure, evaluate.
inline SweepRow run_sweep_cell(const SweepSpec& spec, const SweepCell& cell) {
  const detail::ParsedBackend pb = detail::parse_backend(cell.backend);
  SynthConfig cfg = spec.synth;
  if (cell.n % (1 + cfg.variants_per_base) != 0) {
    throw ConfigError("sizes: " + std::to_string(cell.n) + " is not divisible by " +
                      std::to_string(1 + cfg.variants_per_base) +
                      " (1 + variants per base)");
  }
  cfg.base_count = cell.n / (1 + cfg.variants_per_base);
  cfg.seed = SplitMix64::stream(cell.seed, cell.n).next();
  if (cfg.signature_dim != spec.dims.audio_dim) {
    throw ConfigError("synth signature_dim must equal the adapter audio_dim");
  }

  const Catalog catalog = gen_catalog(cfg);
  AdapterParams params;
  if (!spec.params_path.empty()) {
    params = deserialize_params(read_file(spec.params_path));
  } else {
    params = init_params(cell.seed, spec.dims);
  }
  const EncodedCatalog enc = encode_catalog(catalog, params);
  const SynthDataset ds = gen_dataset(catalog, spec.eval_count, cfg, cfg.seed + 1);

  std::optional<RetrievalIndex> index;
  RetrieveOptions opt = spec.retrieve;
  opt.k = std::min(cell.k == 0 ? opt.k : cell.k, catalog.size());
  opt.union_mode = pb.union_mode;
  const auto [m_col, l_col] = sweep_cell_m_l(spec, pb.base, cell.n);
  if (pb.base != "full") {
    IndexBuildOptions build = spec.build;
    build.backend = detail::backend_from_base(pb.base);
    build.seed = cell.seed;
    index = build_index(enc, build);
    if (pb.base == "ivf") {
      opt.nprobe = l_col;
    } else if (pb.base == "cluster") {
      opt.l = l_col;
    }
  }

  std::size_t frames_per_rep = 0;
  for (const auto& u : ds.test) frames_per_rep += u.utterance.frame_count();
  const std::size_t reps =
      (spec.min_frames + spec.warmup + frames_per_rep - 1) / frames_per_rep + 1;

  SweepRow row;
  row.cell = cell;
  row.m = m_col;
  row.l = l_col;
  row.latency = measure_latency(params, enc, index ? &*index : nullptr, opt, ds.test, reps,
                                spec.warmup);
  row.latency.backend = cell.backend;
  row.eval = evaluate(params, enc, index ? &*index : nullptr, opt, ds.test, spec.tau);
  return row;
}

/// Cross-product sweep with resume: cells whose (backend, N, k, M, l, seed)
/// already appear in the CSV are skipped, so re-running a finished sweep
/// rewrites nothing.
inline std::vector<SweepRow> sweep(const SweepSpec& spec, const std::string& csv_path,
                                   const std::string& manifest_path,
                                   std::ostream* progress = nullptr) {
  if (spec.sizes.empty() || spec.backends.empty() || spec.ks.empty() || spec.seeds.empty()) {
    throw ConfigError("sweep requires non-empty sizes, backends, ks, and seeds");
  }
  for (const auto& b : spec.backends) {
    detail::parse_backend(b);  // fail fast on bad manifest entries
  }

  std::set<std::string> done;
  std::vector<std::string> existing_lines;
  {
    std::ifstream in(csv_path);
    std::string line;
    bool first = true;
    while (in && std::getline(in, line)) {
      if (line.empty()) continue;
      if (first) {
        first = false;
        if (line != sweep_csv_header()) {
          throw ConfigError("existing CSV at " + csv_path + " has a different schema");
        }
        existing_lines.push_back(line);
        continue;
      }
      existing_lines.push_back(line);
      std::vector<std::string> cols;
      std::stringstream ss(line);
      std::string col;
      while (std::getline(ss, col, ',')) cols.push_back(col);
      if (cols.size() < 6) {
        throw ConfigError("existing CSV at " + csv_path + " has a malformed row");
      }
      done.insert(cols[0] + '|' + cols[1] + '|' + cols[2] + '|' + cols[3] + '|' + cols[4] + '|' +
                  cols[5]);
    }
  }

  std::ofstream out;
  if (existing_lines.empty()) {
    out.open(csv_path);
    if (!out) {
      throw InvalidInputError("cannot write CSV: " + csv_path);
    }
    out << sweep_csv_header() << '\n';
    out.flush();
  } else {
    out.open(csv_path, std::ios::app);
  }

  std::vector<SweepRow> rows;
  for (std::size_t n : spec.sizes) {
    for (const auto& backend : spec.backends) {
      const detail::ParsedBackend pb = detail::parse_backend(backend);
      const bool uses_k = pb.base != "full" && pb.base != "cluster";
      const auto [m_col, l_col] = sweep_cell_m_l(spec, pb.base, n);
      for (std::size_t k : spec.ks) {
        if (!uses_k && k != spec.ks.front()) continue;  // one row per k-less backend
        for (std::uint64_t seed : spec.seeds) {
          SweepCell cell{backend, n, uses_k ? k : 0, seed};
          const std::string key = cell.key(m_col, l_col);
          if (done.count(key)) {
            if (progress) {
              *progress << "skip " << key << " (already in CSV)\n";
            }
            continue;
          }
          SweepRow row = run_sweep_cell(spec, cell);
          out << format_sweep_row(row) << '\n';
          out.flush();
          if (progress) {
            *progress << "cell " << row.cell.backend << " N=" << row.cell.n
                      << " k=" << row.cell.k << " seed=" << row.cell.seed
                      << " p50=" << row.latency.p50_us << "us f1=" << row.eval.f1 << "\n";
          }
          rows.push_back(std::move(row));
        }
      }
    }
  }

  std::ofstream mf(manifest_path);
  if (!mf) {
    throw InvalidInputError("cannot write manifest: " + manifest_path);
  }
  mf << "tool=rac-bias\n";
  mf << "format_version=1\n";
  auto join = [](const auto& items) {
    std::ostringstream os;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) os << ',';
      os << items[i];
    }
    return os.str();
  };
  mf << "sizes=" << join(spec.sizes) << '\n';
  mf << "backends=" << join(spec.backends) << '\n';
  mf << "ks=" << join(spec.ks) << '\n';
  mf << "seeds=" << join(spec.seeds) << '\n';
  mf << "eval_count=" << spec.eval_count << '\n';
  mf << "min_frames=" << spec.min_frames << '\n';
  mf << "warmup=" << spec.warmup << '\n';
  mf << "synth_seed=" << spec.synth.seed << '\n';
  mf << "noise_sigma=" << spec.synth.noise_sigma << '\n';
  mf << "params=" << (spec.params_path.empty() ? "<seeded>" : spec.params_path) << '\n';
  mf << "hardware_threads=" << std::thread::hardware_concurrency() << '\n';
  mf << "clock_warning=" << (detail::clock_too_coarse() ? 1 : 0) << '\n';
  return rows;
}

}  // namespace rac
