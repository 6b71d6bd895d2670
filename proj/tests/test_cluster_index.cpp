#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "rac/cluster_index.hpp"
#include "test_util.hpp"

using namespace rac;

TEST_CASE("probing every cluster returns the whole catalog") {
  const Matrix<float> keys = testutil::random_matrix(120, 8, 3);
  const ClusterIndex index = build_cluster_index(keys, 10, 25, 5);
  const auto q = testutil::random_vector(8, 9);
  const auto ids = query_clusters(index, q, 10);
  REQUIRE(ids.size() == 120);
  for (std::size_t i = 0; i < 120; ++i) REQUIRE(ids[i] == i);
}

TEST_CASE("members partition the ids") {
  const Matrix<float> keys = testutil::random_matrix(200, 6, 7);
  const ClusterIndex index = build_cluster_index(keys, 16, 25, 11);
  std::vector<char> seen(200, 0);
  std::size_t total = 0;
  for (const auto& members : index.members) {
    REQUIRE(std::is_sorted(members.begin(), members.end()));
    for (std::uint32_t id : members) {
      REQUIRE(seen[id] == 0);
      seen[id] = 1;
      ++total;
    }
  }
  REQUIRE(total == 200);
}

TEST_CASE("a query at a centroid of separated blobs gets that blob") {
  SplitMix64 rng(13);
  Matrix<float> keys(60, 4);
  for (std::size_t i = 0; i < 60; ++i) {
    const bool second = i % 2 == 1;
    for (std::size_t j = 0; j < 4; ++j) {
      keys(i, j) = static_cast<float>((second ? 40.0 : -40.0) + rng.uniform(-0.5, 0.5));
    }
  }
  const ClusterIndex index = build_cluster_index(keys, 2, 25, 17);
  std::vector<float> q(4, -40.0f);
  const auto ids = query_clusters(index, q, 1);
  REQUIRE(ids.size() == 30);
  for (std::uint32_t id : ids) {
    REQUIRE(id % 2 == 0);
  }
}

TEST_CASE("candidate sets scale like N * l / M on balanced data") {
  const Matrix<float> keys = testutil::random_matrix(2000, 16, 19, -1.0, 1.0);
  const ClusterIndex index = build_cluster_index(keys, 200, 25, 23);
  double total = 0.0;
  const int queries = 200;
  for (int s = 0; s < queries; ++s) {
    const auto q = testutil::random_vector(16, 400 + s, -1.0, 1.0);
    total += static_cast<double>(query_clusters(index, q, 4).size());
  }
  const double mean_size = total / queries;
  INFO("mean candidate set size (expected about 40): " << mean_size);
  REQUIRE(mean_size >= 20.0);
  REQUIRE(mean_size <= 80.0);
}

TEST_CASE("probe counts outside [1, M] are rejected") {
  const Matrix<float> keys = testutil::random_matrix(30, 4, 29);
  const ClusterIndex index = build_cluster_index(keys, 5, 10, 31);
  const auto q = testutil::random_vector(4, 3);
  REQUIRE_THROWS_AS(query_clusters(index, q, 0), InvalidInputError);
  REQUIRE_THROWS_AS(query_clusters(index, q, 6), InvalidInputError);
  REQUIRE_THROWS_AS(build_cluster_index(keys, 31, 10, 1), InvalidInputError);
}
