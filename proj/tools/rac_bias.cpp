// rac-bias: contextual-biasing workbench around retrieve-and-copy inference.
//
// Subcommands cover the whole pipeline: synthetic data generation, catalog
// encoding, adapter training, hard-negative fine-tuning, index building,
// evaluation, latency benchmarking, and CSV sweeps. Every run is a pure
// function of its flags and --seed. A --config file supplies flat key=value
// defaults for any flag; explicit flags win.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "rac/bench.hpp"
#include "rac/biasing.hpp"
#include "rac/catalog.hpp"
#include "rac/encoder.hpp"
#include "rac/index.hpp"
#include "rac/index_io.hpp"
#include "rac/synth.hpp"
#include "rac/trainer.hpp"

namespace {

std::vector<std::pair<std::string, std::string>> load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw rac::ConfigError("cannot open config file: " + path);
  }
  std::vector<std::pair<std::string, std::string>> kv;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = rac::trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw rac::ConfigError("config " + path + ":" + std::to_string(line_no) +
                             ": expected key=value");
    }
    kv.emplace_back(rac::trim(t.substr(0, eq)), rac::trim(t.substr(eq + 1)));
  }
  return kv;
}

template <typename T>
std::vector<T> parse_list(const std::string& csv, const std::string& field) {
  std::vector<T> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = rac::trim(item);
    if (item.empty()) continue;
    try {
      if constexpr (std::is_same_v<T, std::string>) {
        out.push_back(item);
      } else {
        out.push_back(static_cast<T>(std::stoull(item)));
      }
    } catch (const std::exception&) {
      throw rac::ConfigError(field + ": cannot parse '" + item + "'");
    }
  }
  if (out.empty()) {
    throw rac::ConfigError(field + ": list is empty");
  }
  return out;
}

struct CommonDims {
  std::size_t vocab = 4096;
  std::size_t entity_dim = 32;
  std::size_t audio_dim = 64;
  std::size_t joint_dim = 64;

  rac::Dims dims() const { return rac::Dims{vocab, entity_dim, audio_dim, joint_dim}; }

  void attach(CLI::App* app) {
    app->add_option("--vocab", vocab, "token hash buckets");
    app->add_option("--entity-dim", entity_dim, "entity embedding width");
    app->add_option("--audio-dim", audio_dim, "audio feature width");
    app->add_option("--joint-dim", joint_dim, "query/key attention width");
  }
};

struct SynthFlags {
  rac::SynthConfig cfg;
  std::size_t count = 1000;

  void attach(CLI::App* app) {
    app->add_option("--bases", cfg.base_count, "base word count");
    app->add_option("--variants", cfg.variants_per_base, "edit-distance-1 variants per base");
    app->add_option("--min-len", cfg.min_word_len, "min base word length");
    app->add_option("--max-len", cfg.max_word_len, "max base word length");
    app->add_option("--frames", cfg.frames, "frames per utterance (T)");
    app->add_option("--span", cfg.span, "signature frames per utterance (L)");
    app->add_option("--noise-sigma", cfg.noise_sigma, "per-coordinate noise sigma");
    app->add_option("--none-fraction", cfg.none_fraction, "share of unlabeled utterances");
    app->add_option("--count", count, "utterances to generate");
  }
};

struct RetrieveFlags {
  rac::RetrieveOptions opt;

  void attach(CLI::App* app) {
    app->add_option("--k", opt.k, "retrieved entities per frame");
    app->add_option("--l", opt.l, "clusters probed (cluster backend)");
    app->add_option("--nprobe", opt.nprobe, "cells probed (ivf backend)");
    app->add_option("--efs", opt.ef_search, "hnsw search beam width");
    app->add_flag("--union", opt.union_mode, "merge per-frame candidates per utterance");
  }
};

struct BuildFlags {
  rac::IndexBuildOptions opt;

  void attach(CLI::App* app) {
    app->add_option("--cells", opt.ivf_cells, "ivf cell count (0: sqrt(N))");
    app->add_option("--train-iters", opt.train_iters, "k-means iterations");
    app->add_option("--m-max", opt.m_max, "hnsw neighbor cap");
    app->add_option("--efc", opt.ef_construction, "hnsw construction beam width");
    app->add_option("--clusters", opt.clusters, "cluster-probe cluster count");
    app->add_option("--l-default", opt.l_default, "cluster-probe default probe count");
  }
};

rac::AdapterParams params_for(const std::string& params_path, std::uint64_t seed,
                              const CommonDims& dims) {
  if (!params_path.empty()) {
    return rac::load_params(params_path);
  }
  return rac::init_params(seed, dims.dims());
}

std::vector<rac::TrainingExample> assemble_examples(
    const std::vector<rac::LabeledUtterance>& utts, std::size_t negatives,
    rac::NegativeMode mode, const rac::Catalog& catalog,
    const rac::NegativeClusters* clusters, std::uint64_t seed) {
  std::vector<std::uint32_t> pool(catalog.size());
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<std::uint32_t>(i);
  rac::SplitMix64 seeds = rac::SplitMix64::stream(seed, 0x6e6567);
  std::vector<rac::TrainingExample> out;
  for (const auto& u : utts) {
    const std::uint64_t ex_seed = seeds.next();
    if (!u.label) continue;  // unlabeled utterances carry no positive to learn
    rac::TrainingExample ex;
    ex.utterance = u.utterance;
    ex.positive_id = *u.label;
    const std::size_t want = std::min(negatives, catalog.size() - 1);
    if (mode == rac::NegativeMode::hard) {
      ex.negative_ids = rac::sample_negatives_hard(ex.positive_id, *clusters, want, ex_seed);
    } else {
      ex.negative_ids = rac::sample_negatives_random(ex.positive_id, pool, want, ex_seed);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void print_eval(const rac::EvalReport& r) {
  std::printf("f1=%.10g\n", r.f1);
  std::printf("precision=%.10g\n", r.precision);
  std::printf("recall=%.10g\n", r.recall);
  std::printf("retrieval_acc=%.10g\n", r.retrieval_accuracy);
  std::printf("recall_at_k=%.10g\n", r.recall_at_k);
  std::printf("utterances=%zu\n", r.utterances);
}

void print_latency(const rac::LatencyStats& s) {
  std::printf("backend=%s\n", s.backend.c_str());
  std::printf("catalog_size=%zu\n", s.catalog_size);
  std::printf("p50us=%.3f\n", s.p50_us);
  std::printf("p90us=%.3f\n", s.p90_us);
  std::printf("p99us=%.3f\n", s.p99_us);
  std::printf("meanus=%.3f\n", s.mean_us);
  std::printf("frames=%zu\n", s.frames_measured);
  std::printf("warmup=%zu\n", s.warmup_frames);
  std::printf("clock_warning=%d\n", s.clock_warning ? 1 : 0);
}

int run(int argc, char** argv) {
  CLI::App app{"retrieve-and-copy contextual biasing workbench"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  std::uint64_t seed = 0;
  std::string out_path;
  std::string config_path;

  // Shared state, bound into whichever subcommand runs.
  CommonDims dims;
  SynthFlags synth;
  RetrieveFlags retrieve;
  BuildFlags build;
  std::string catalog_path, params_path, params_out, encoded_path, index_path, data_path;
  std::string backend = "hnsw";
  double tau = 0.5;
  double lr = 0.05;
  double l2 = 1e-5;
  std::size_t epochs = 10;
  std::size_t negatives = 20;
  std::string curriculum_spec;
  std::size_t hnft_clusters = 0;
  std::size_t warmup = 100;
  std::size_t min_frames = 1000;
  bool bench_full = false;
  std::string sizes_csv = "250,1000,5000,10000,20000";
  std::string backends_csv = "full,hnsw";
  std::string ks_csv = "10";
  std::string seeds_csv = "1";
  std::size_t eval_count = 300;
  std::string manifest_path;

  auto add_seed_out = [&](CLI::App* sub, bool with_out) {
    sub->add_option("--seed", seed, "master seed; all randomness derives from it");
    sub->add_option("--config", config_path, "flat key=value defaults for any flag");
    if (with_out) sub->add_option("--out", out_path, "output path")->required();
  };

  CLI::App* gen = app.add_subcommand("gen-data", "generate a confusable catalog and utterances");
  add_seed_out(gen, true);
  synth.attach(gen);

  CLI::App* enc_cmd = app.add_subcommand("encode", "encode a catalog with adapter params");
  add_seed_out(enc_cmd, true);
  enc_cmd->add_option("--catalog", catalog_path, "catalog text file")->required();
  enc_cmd->add_option("--params", params_path, "adapter checkpoint (fresh init when omitted)");
  enc_cmd->add_option("--params-out", params_out, "also write the params used");
  dims.attach(enc_cmd);

  CLI::App* train_cmd = app.add_subcommand("train", "train the adapter with random negatives");
  add_seed_out(train_cmd, true);
  train_cmd->add_option("--catalog", catalog_path)->required();
  train_cmd->add_option("--data", data_path, "training utterances (tsv)")->required();
  train_cmd->add_option("--params", params_path, "initial checkpoint (fresh init when omitted)");
  train_cmd->add_option("--epochs", epochs);
  train_cmd->add_option("--lr", lr, "sgd learning rate");
  train_cmd->add_option("--l2", l2, "weight decay on embed/theta_q/theta_k");
  train_cmd->add_option("--negatives", negatives, "negatives per example");
  train_cmd->add_option("--curriculum", curriculum_spec,
                        "start,max,step negatives growth per epoch");
  dims.attach(train_cmd);

  CLI::App* hnft = app.add_subcommand("finetune-hnft",
                                      "fine-tune with same-cluster hard negatives");
  add_seed_out(hnft, true);
  hnft->add_option("--catalog", catalog_path)->required();
  hnft->add_option("--data", data_path)->required();
  hnft->add_option("--params", params_path, "checkpoint to fine-tune from")->required();
  hnft->add_option("--epochs", epochs)->default_val(10);
  hnft->add_option("--lr", lr);
  hnft->add_option("--l2", l2);
  hnft->add_option("--negatives", negatives);
  hnft->add_option("--clusters", hnft_clusters, "hard-negative cluster count (0: N/20)");

  CLI::App* bi = app.add_subcommand("build-index", "build a retrieval index");
  add_seed_out(bi, true);
  bi->add_option("--encoded", encoded_path, "encoded catalog file")->required();
  bi->add_option("--backend", backend, "exact|aexact|ivf|hnsw|cluster")->required();
  build.attach(bi);

  CLI::App* ev = app.add_subcommand("eval", "accuracy metrics on a labeled test set");
  add_seed_out(ev, false);
  ev->add_option("--params", params_path)->required();
  ev->add_option("--encoded", encoded_path)->required();
  ev->add_option("--index", index_path, "retrieval index (full attention when omitted)");
  ev->add_option("--data", data_path)->required();
  ev->add_option("--tau", tau, "decode probability threshold");
  retrieve.attach(ev);

  CLI::App* be = app.add_subcommand("bench", "per-frame latency of the biasing step");
  add_seed_out(be, false);
  be->add_option("--params", params_path)->required();
  be->add_option("--encoded", encoded_path)->required();
  be->add_option("--index", index_path, "retrieval index");
  be->add_flag("--full", bench_full, "measure full attention (no retrieval)");
  be->add_option("--data", data_path)->required();
  be->add_option("--warmup", warmup, "frames discarded before measuring");
  be->add_option("--min-frames", min_frames, "measured frames after warmup");
  retrieve.attach(be);

  CLI::App* sw = app.add_subcommand("sweep", "catalog-size x backend x k benchmark grid");
  add_seed_out(sw, true);
  sw->add_option("--sizes", sizes_csv, "comma list of catalog sizes");
  sw->add_option("--backends", backends_csv, "comma list of backends; -union suffix allowed");
  sw->add_option("--ks", ks_csv, "comma list of k values");
  sw->add_option("--seeds", seeds_csv, "comma list of cell seeds");
  sw->add_option("--eval-count", eval_count, "utterances generated per cell");
  sw->add_option("--warmup", warmup);
  sw->add_option("--min-frames", min_frames);
  sw->add_option("--tau", tau);
  sw->add_option("--params", params_path, "checkpoint applied to every cell");
  sw->add_option("--manifest", manifest_path, "run manifest path (default <out>.manifest)");
  synth.attach(sw);
  retrieve.attach(sw);
  build.attach(sw);
  dims.attach(sw);

  // Two-pass parse: find --config, splice its key=value pairs in as flags
  // right after the subcommand so explicit flags (later, take-last) win.
  std::vector<std::string> args(argv + 1, argv + argc);
  std::string early_config;
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) {
      early_config = args[i + 1];
    } else if (args[i].rfind("--config=", 0) == 0) {
      early_config = args[i].substr(9);
    }
  }
  if (!early_config.empty() && !args.empty()) {
    CLI::App* sub = nullptr;
    std::size_t sub_at = args.size();
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (!args[i].empty() && args[i][0] != '-') {
        sub = app.get_subcommand_no_throw(args[i]);
        sub_at = i;
        break;
      }
    }
    if (sub != nullptr) {
      std::vector<std::string> injected;
      for (const auto& [key, value] : load_config_file(early_config)) {
        if (key == "config") continue;
        const std::string flag = "--" + key;
        if (sub->get_option_no_throw(flag) == nullptr) {
          throw rac::ConfigError("config: unknown key '" + key + "' for subcommand '" +
                                 sub->get_name() + "'");
        }
        injected.push_back(flag + "=" + value);
      }
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, injected.begin(),
                  injected.end());
    }
  }

  try {
    std::vector<const char*> cargs;
    cargs.push_back(argv[0]);
    for (const auto& a : args) cargs.push_back(a.c_str());
    app.parse(static_cast<int>(cargs.size()), cargs.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  if (gen->parsed()) {
    synth.cfg.seed = seed;
    std::filesystem::create_directories(out_path);
    const rac::Catalog catalog = rac::gen_catalog(synth.cfg);
    rac::save_catalog(catalog, out_path + "/catalog.txt");
    const rac::SynthDataset ds = rac::gen_dataset(catalog, synth.count, synth.cfg, seed);
    rac::save_utterances(ds.train, out_path + "/train.tsv");
    rac::save_utterances(ds.test, out_path + "/test.tsv");
    std::printf("catalog=%zu train=%zu test=%zu\n", catalog.size(), ds.train.size(),
                ds.test.size());
    return 0;
  }

  if (enc_cmd->parsed()) {
    const rac::Catalog catalog = rac::load_catalog(catalog_path);
    const rac::AdapterParams params = params_for(params_path, seed, dims);
    const rac::EncodedCatalog enc = rac::encode_catalog(catalog, params);
    rac::save_encoded(enc, out_path);
    if (!params_out.empty()) {
      rac::save_params(params, params_out);
    }
    std::printf("entities=%zu catalog_hash=%016llx\n", enc.size(),
                static_cast<unsigned long long>(enc.catalog_hash));
    return 0;
  }

  if (train_cmd->parsed() || hnft->parsed()) {
    const bool is_hnft = hnft->parsed();
    const rac::Catalog catalog = rac::load_catalog(catalog_path);
    rac::AdapterParams initial = params_for(params_path, seed, dims);
    const auto utts = rac::load_utterances(data_path, initial.dims.audio_dim);

    rac::TrainConfig cfg;
    cfg.epochs = epochs;
    cfg.learning_rate = lr;
    cfg.l2 = l2;
    cfg.seed = seed;
    cfg.negatives_per_example = negatives;
    cfg.mode = is_hnft ? rac::NegativeMode::hard : rac::NegativeMode::random;
    if (!curriculum_spec.empty()) {
      const auto parts = parse_list<std::size_t>(curriculum_spec, "curriculum");
      if (parts.size() != 3) {
        throw rac::ConfigError("curriculum: expected start,max,step");
      }
      cfg.curriculum = rac::Curriculum{parts[0], parts[1], parts[2]};
    }

    std::optional<rac::NegativeClusters> clusters;
    if (is_hnft) {
      const std::size_t s =
          hnft_clusters == 0 ? rac::default_cluster_count(catalog.size()) : hnft_clusters;
      clusters = rac::build_negative_clusters(catalog, initial, s, seed);
    }
    const std::size_t sample_width =
        cfg.curriculum ? std::max(cfg.curriculum->max_size, negatives) : negatives;
    const auto examples = assemble_examples(utts, sample_width, cfg.mode, catalog,
                                            clusters ? &*clusters : nullptr, seed);
    const rac::TrainingCatalog tcat = rac::tokenize_catalog(catalog, initial.dims);
    const rac::TrainResult result = rac::train(cfg, examples, initial, tcat);
    rac::save_params(result.params, out_path);
    for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e) {
      std::printf("epoch=%zu mean_loss=%.6f\n", e, result.epoch_mean_loss[e]);
    }
    std::printf("examples=%zu checkpoint=%s\n", examples.size(), out_path.c_str());
    return 0;
  }

  if (bi->parsed()) {
    const rac::EncodedCatalog enc = rac::load_encoded(encoded_path);
    build.opt.backend = rac::detail::backend_from_base(
        rac::detail::parse_backend(backend).base);
    build.opt.seed = seed;
    const rac::RetrievalIndex index = rac::build_index(enc, build.opt);
    rac::save_index(index, out_path);
    std::printf("backend=%s entities=%zu bytes=%zu\n", backend.c_str(), rac::index_size(index),
                rac::serialize_index(index).size());
    return 0;
  }

  if (ev->parsed() || be->parsed()) {
    const rac::AdapterParams params = rac::load_params(params_path);
    const rac::EncodedCatalog enc = rac::load_encoded(encoded_path);
    const auto utts = rac::load_utterances(data_path, params.dims.audio_dim);
    std::optional<rac::RetrievalIndex> index;
    if (!index_path.empty()) {
      index = rac::load_index(index_path);
    }
    if (ev->parsed()) {
      print_eval(rac::evaluate(params, enc, index ? &*index : nullptr, retrieve.opt, utts, tau));
    } else {
      if (!index && !bench_full) {
        throw rac::ConfigError("bench: pass --index or --full");
      }
      std::size_t frames_per_rep = 0;
      for (const auto& u : utts) frames_per_rep += u.utterance.frame_count();
      if (frames_per_rep == 0) {
        throw rac::InvalidInputError("bench: dataset has no frames");
      }
      const std::size_t reps = (min_frames + warmup + frames_per_rep - 1) / frames_per_rep + 1;
      print_latency(rac::measure_latency(params, enc, index ? &*index : nullptr, retrieve.opt,
                                         utts, reps, warmup));
    }
    return 0;
  }

  if (sw->parsed()) {
    rac::SweepSpec spec;
    spec.sizes = parse_list<std::size_t>(sizes_csv, "sizes");
    spec.backends = parse_list<std::string>(backends_csv, "backends");
    spec.ks = parse_list<std::size_t>(ks_csv, "ks");
    spec.seeds = parse_list<std::uint64_t>(seeds_csv, "seeds");
    spec.synth = synth.cfg;
    spec.eval_count = eval_count;
    spec.min_frames = min_frames;
    spec.warmup = warmup;
    spec.tau = tau;
    spec.params_path = params_path;
    spec.dims = dims.dims();
    spec.build = build.opt;
    spec.retrieve = retrieve.opt;
    if (manifest_path.empty()) manifest_path = out_path + ".manifest";
    const auto rows = rac::sweep(spec, out_path, manifest_path, &std::cout);
    std::printf("new_rows=%zu csv=%s manifest=%s\n", rows.size(), out_path.c_str(),
                manifest_path.c_str());
    return 0;
  }

  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
