#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "rac/hnsw.hpp"
#include "rac/index.hpp"
#include "rac/index_io.hpp"
#include "rac/synth.hpp"
#include "test_util.hpp"

using namespace rac;

TEST_CASE("a one-node graph answers every query with id 0") {
  Matrix<float> keys(1, 4);
  keys(0, 0) = 1.0f;
  const HnswIndex index = build_hnsw(augment(keys), 4, 8, 1);
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto q = augment_query(testutil::random_vector(4, s));
    const RetrievalResult res = query_hnsw(index, q, 1, 4);
    REQUIRE(res.ids == std::vector<std::uint32_t>{0});
  }
}

TEST_CASE("a graph smaller than m_max searches exhaustively") {
  const Matrix<float> keys = testutil::random_matrix(10, 6, 3);
  const AugmentedKeys aug = augment(keys);
  const HnswIndex index = build_hnsw(augment(keys), 16, 32, 5);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto q = augment_query(testutil::random_vector(6, 50 + s));
    const RetrievalResult got = query_hnsw(index, q, 3, 10);
    const RetrievalResult oracle = exact_topk_augmented(q, aug, 3);
    REQUIRE(got.ids == oracle.ids);
  }
}

TEST_CASE("layer 0 stays connected and degree-capped") {
  const Matrix<float> keys = testutil::random_matrix(800, 16, 7, -1.0, 1.0);
  const HnswIndex index = build_hnsw(augment(keys), 8, 64, 9);
  REQUIRE(hnsw_layer0_connected(index));
  REQUIRE(index.layers[0].size() == 800);
  for (std::size_t l = 0; l < index.layers.size(); ++l) {
    for (std::size_t node = 0; node < 800; ++node) {
      const auto& nbrs = index.layers[l][node];
      REQUIRE(nbrs.size() <= index.degree_cap(l));
      REQUIRE(std::is_sorted(nbrs.begin(), nbrs.end()));
      for (std::uint32_t nb : nbrs) {
        REQUIRE(nb < 800);
        REQUIRE(nb != node);
      }
      if (l > index.levels[node]) {
        REQUIRE(nbrs.empty());
      }
    }
  }
  REQUIRE(index.levels[index.entry_point] + 1 == index.layers.size());
}

TEST_CASE("recall against the oracle stays high on catalog-shaped keys") {
  // Keys from an encoded confusable catalog, queries from projected frames:
  // the geometry every index in this project actually serves. Measured
  // 0.990 at this fixture; asserted with margin.
  SynthConfig cfg;
  cfg.base_count = 400;
  cfg.variants_per_base = 4;
  cfg.seed = 11;
  const Catalog cat = gen_catalog(cfg);
  const AdapterParams p = init_params(1, Dims{});
  const EncodedCatalog enc = encode_catalog(cat, p);
  const HnswIndex index = build_hnsw(augment(enc.keys), 16, 200, 13);
  REQUIRE(hnsw_layer0_connected(index));
  const SynthDataset ds = gen_dataset(cat, 100, cfg, 7);
  double recall_sum = 0.0;
  std::size_t queries = 0;
  for (const auto& u : ds.test) {
    for (std::size_t t = 0; t < u.utterance.frame_count(); ++t) {
      const auto qf = project_query_f32(u.utterance.frames.row(t), p);
      const RetrievalResult got = query_hnsw(index, augment_query(qf), 10, 64);
      const RetrievalResult oracle = exact_topk_mips(qf, enc.keys, 10);
      std::set<std::uint32_t> truth(oracle.ids.begin(), oracle.ids.end());
      std::size_t hit = 0;
      for (std::uint32_t id : got.ids) hit += truth.count(id);
      recall_sum += static_cast<double>(hit) / 10.0;
      ++queries;
    }
  }
  const double recall = recall_sum / static_cast<double>(queries);
  INFO("hnsw recall@10 at N=2000 on catalog keys: " << recall);
  REQUIRE(recall >= 0.95);
}

TEST_CASE("construction and queries are deterministic per seed") {
  const Matrix<float> keys = testutil::random_matrix(400, 12, 17);
  const HnswIndex a = build_hnsw(augment(keys), 8, 32, 21);
  const HnswIndex b = build_hnsw(augment(keys), 8, 32, 21);
  RetrievalIndex ia = a;
  RetrievalIndex ib = b;
  REQUIRE(serialize_index(ia) == serialize_index(ib));
  const HnswIndex c = build_hnsw(augment(keys), 8, 32, 22);
  RetrievalIndex ic = c;
  // different seed shifts node levels, which shows up in the payload
  REQUIRE(serialize_index(ia) != serialize_index(ic));
}

TEST_CASE("query and build preconditions are enforced") {
  const Matrix<float> keys = testutil::random_matrix(20, 4, 19);
  const HnswIndex index = build_hnsw(augment(keys), 4, 8, 23);
  const auto q = augment_query(testutil::random_vector(4, 1));
  REQUIRE_THROWS_AS(query_hnsw(index, q, 5, 4), InvalidInputError);   // ef < k
  REQUIRE_THROWS_AS(query_hnsw(index, q, 0, 4), InvalidInputError);
  REQUIRE_THROWS_AS(query_hnsw(index, q, 21, 30), InvalidInputError); // k > N
  REQUIRE_THROWS_AS(build_hnsw(augment(keys), 4, 2, 1), InvalidInputError);  // efc < m_max
  REQUIRE_THROWS_AS(build_hnsw(augment(keys), 1, 8, 1), InvalidInputError);  // m_max < 2
}
