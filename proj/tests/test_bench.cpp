#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>

#include "rac/bench.hpp"
#include "test_util.hpp"

using namespace rac;

namespace {

struct BenchFixture {
  SynthConfig cfg;
  Catalog catalog;
  AdapterParams params;
  EncodedCatalog enc;
  std::vector<LabeledUtterance> test;

  BenchFixture(std::size_t bases, std::size_t variants, double sigma = 0.12,
               double beta = 400.0)
      : cfg(make_cfg(bases, variants, sigma)),
        catalog(gen_catalog(cfg)),
        params(testutil::oracle_params(catalog, cfg, beta)) {
    enc = encode_catalog(catalog, params);
    const SynthDataset ds = gen_dataset(catalog, 150, cfg, 5);
    test = ds.test;
  }

  static SynthConfig make_cfg(std::size_t bases, std::size_t variants, double sigma) {
    SynthConfig cfg;
    cfg.base_count = bases;
    cfg.variants_per_base = variants;
    cfg.seed = 31;
    cfg.none_fraction = 0.1;
    cfg.noise_sigma = sigma;
    return cfg;
  }
};

}  // namespace

TEST_CASE("full-attention latency grows with the catalog") {
  BenchFixture small(20, 4);   // N = 100
  BenchFixture large(400, 4);  // N = 2000
  RetrieveOptions opt;
  const LatencyStats s_small =
      measure_latency(small.params, small.enc, nullptr, opt, small.test, 2, 50);
  const LatencyStats s_large =
      measure_latency(large.params, large.enc, nullptr, opt, large.test, 2, 50);
  INFO("p50 small=" << s_small.p50_us << "us large=" << s_large.p50_us << "us");
  REQUIRE(s_small.frames_measured >= 100);
  REQUIRE(s_small.p50_us <= s_small.p90_us);
  REQUIRE(s_small.p90_us <= s_small.p99_us);
  REQUIRE(s_large.p50_us > s_small.p50_us);
  REQUIRE(s_large.backend == "full");
}

TEST_CASE("repeated measurements agree on the median") {
  BenchFixture fx(100, 4);  // N = 500
  RetrieveOptions opt;
  bool stable = false;
  for (int attempt = 0; attempt < 2 && !stable; ++attempt) {  // one retry for noise
    const LatencyStats a = measure_latency(fx.params, fx.enc, nullptr, opt, fx.test, 2, 50);
    const LatencyStats b = measure_latency(fx.params, fx.enc, nullptr, opt, fx.test, 4, 50);
    stable = std::abs(a.p50_us - b.p50_us) <= 0.2 * std::max(a.p50_us, b.p50_us);
  }
  REQUIRE(stable);
}

TEST_CASE("too few frames after warmup is an input error") {
  BenchFixture fx(4, 4);
  RetrieveOptions opt;
  REQUIRE_THROWS_AS(measure_latency(fx.params, fx.enc, nullptr, opt, fx.test, 1, 100000),
                    InvalidInputError);
}

TEST_CASE("oracle-constructed params score a perfect F1 on exact retrieval") {
  BenchFixture fx(250, 0, 0.0);  // unrelated words, noiseless: a constructed ceiling
  const RetrievalIndex index = build_index(fx.enc, {.backend = Backend::exact});
  RetrieveOptions opt;
  opt.k = 10;
  const EvalReport report = evaluate(fx.params, fx.enc, &index, opt, fx.test, 0.5);
  INFO("f1=" << report.f1 << " precision=" << report.precision << " recall=" << report.recall);
  REQUIRE(report.retrieval_accuracy == 1.0);
  REQUIRE(report.recall_at_k == 1.0);
  REQUIRE(report.f1 == 1.0);
  REQUIRE(report.precision == 1.0);
  REQUIRE(report.recall == 1.0);
}

TEST_CASE("exact and hnsw backends agree when recall is high") {
  BenchFixture fx(250, 0, 0.05);
  const RetrievalIndex exact = build_index(fx.enc, {.backend = Backend::exact});
  IndexBuildOptions hnsw_build;
  hnsw_build.backend = Backend::hnsw;
  const RetrievalIndex hnsw = build_index(fx.enc, hnsw_build);
  RetrieveOptions opt;
  opt.k = 10;
  const EvalReport a = evaluate(fx.params, fx.enc, &exact, opt, fx.test, 0.5);
  const EvalReport b = evaluate(fx.params, fx.enc, &hnsw, opt, fx.test, 0.5);
  INFO("hnsw recall@10 = " << b.recall_at_k);
  REQUIRE(b.recall_at_k >= 0.99);
  REQUIRE(std::abs(a.f1 - b.f1) <= 0.01);
}

TEST_CASE("retrieval accuracy never drops when k grows") {
  BenchFixture fx(50, 4);
  const RetrievalIndex index = build_index(fx.enc, {.backend = Backend::hnsw});
  RetrieveOptions k1;
  k1.k = 1;
  RetrieveOptions k10;
  k10.k = 10;
  const EvalReport r1 = evaluate(fx.params, fx.enc, &index, k1, fx.test, 0.5);
  const EvalReport r10 = evaluate(fx.params, fx.enc, &index, k10, fx.test, 0.5);
  REQUIRE(r10.retrieval_accuracy >= r1.retrieval_accuracy);
}

TEST_CASE("union mode applies one merged candidate set per utterance") {
  BenchFixture fx(10, 4);
  const RetrievalIndex index = build_index(fx.enc, {.backend = Backend::exact});
  RetrieveOptions opt;
  opt.k = 3;
  opt.union_mode = true;
  for (const auto& u : fx.test) {
    const auto lists = retrieve_per_frame(u.utterance, fx.params, index, fx.enc, opt);
    for (std::size_t t = 1; t < lists.size(); ++t) {
      REQUIRE(lists[t] == lists[0]);
    }
    break;
  }
}

TEST_CASE("the CSV schema is pinned") {
  REQUIRE(std::string(sweep_csv_header()) ==
          "backend,N,k,M,l,seed,p50us,p90us,p99us,meanus,f1,precision,recall,"
          "retrieval_acc,recall_at_k,frames");
}

TEST_CASE("the f1 column reproduces from precision and recall") {
  SweepRow row;
  row.cell = SweepCell{"hnsw", 100, 10, 1};
  row.eval.precision = 0.734375;
  row.eval.recall = 0.640625;
  row.eval.f1 = 2.0 * row.eval.precision * row.eval.recall /
                (row.eval.precision + row.eval.recall);
  const std::string line = format_sweep_row(row);
  std::vector<std::string> cols;
  std::stringstream ss(line);
  std::string col;
  while (std::getline(ss, col, ',')) cols.push_back(col);
  const double f1 = std::stod(cols[10]);
  const double precision = std::stod(cols[11]);
  const double recall = std::stod(cols[12]);
  REQUIRE(std::abs(f1 - 2.0 * precision * recall / (precision + recall)) <= 1e-9);
}

TEST_CASE("sweeps resume without recomputation and reject bad manifests") {
  SweepSpec spec;
  spec.sizes = {50};
  spec.backends = {"exact"};
  spec.ks = {3};
  spec.seeds = {2};
  spec.synth.variants_per_base = 4;
  spec.eval_count = 40;
  spec.min_frames = 120;
  spec.warmup = 10;
  spec.dims = Dims{512, 16, 64, 32};

  const std::string csv = "sweep_resume_test.csv";
  const std::string manifest = "sweep_resume_test.manifest";
  std::remove(csv.c_str());

  const auto rows1 = sweep(spec, csv, manifest);
  REQUIRE(rows1.size() == 1);
  std::ifstream in1(csv);
  std::stringstream buf1;
  buf1 << in1.rdbuf();

  const auto rows2 = sweep(spec, csv, manifest);
  REQUIRE(rows2.empty());
  std::ifstream in2(csv);
  std::stringstream buf2;
  buf2 << in2.rdbuf();
  REQUIRE(buf1.str() == buf2.str());

  SECTION("unknown backends fail before any work") {
    SweepSpec bad = spec;
    bad.backends = {"faiss"};
    try {
      sweep(bad, csv, manifest);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      REQUIRE(std::string(e.what()).find("backends") != std::string::npos);
    }
  }
  SECTION("indivisible sizes name the field") {
    SweepSpec bad = spec;
    bad.sizes = {51};
    std::remove(csv.c_str());
    try {
      sweep(bad, csv, manifest);
      FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
      REQUIRE(std::string(e.what()).find("sizes") != std::string::npos);
    }
  }
  std::remove(csv.c_str());
  std::remove(manifest.c_str());
}

TEST_CASE("the run manifest records the configuration") {
  SweepSpec spec;
  spec.sizes = {50};
  spec.backends = {"exact"};
  spec.ks = {3};
  spec.seeds = {9};
  spec.synth.variants_per_base = 4;
  spec.eval_count = 40;
  spec.min_frames = 120;
  spec.warmup = 10;
  spec.dims = Dims{512, 16, 64, 32};
  const std::string csv = "sweep_manifest_test.csv";
  const std::string manifest = "sweep_manifest_test.manifest";
  std::remove(csv.c_str());
  sweep(spec, csv, manifest);
  std::ifstream in(manifest);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  REQUIRE(text.find("tool=rac-bias") != std::string::npos);
  REQUIRE(text.find("sizes=50") != std::string::npos);
  REQUIRE(text.find("seeds=9") != std::string::npos);
  REQUIRE(text.find("clock_warning=") != std::string::npos);
  std::remove(csv.c_str());
  std::remove(manifest.c_str());
}
