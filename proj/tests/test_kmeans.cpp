#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "rac/kmeans.hpp"
#include "test_util.hpp"

using namespace rac;

TEST_CASE("one point per cluster degenerates to zero inertia") {
  const Matrix<float> points = testutil::random_matrix(6, 4, 1);
  const KmeansResult res = kmeans(points, 6, 10, 7);
  REQUIRE(res.inertia() == 0.0);
  std::set<std::uint32_t> used(res.assignment.begin(), res.assignment.end());
  REQUIRE(used.size() == 6);
  // every centroid coincides with its assigned point
  for (std::size_t i = 0; i < 6; ++i) {
    REQUIRE(squared_distance(points.row(i), res.centroids.row(res.assignment[i])) == 0.0);
  }
}

TEST_CASE("two well-separated blobs are recovered exactly") {
  SplitMix64 rng(5);
  Matrix<float> points(40, 3);
  std::vector<int> truth(40);
  for (std::size_t i = 0; i < 40; ++i) {
    const bool second = i >= 20;
    truth[i] = second;
    for (std::size_t j = 0; j < 3; ++j) {
      points(i, j) = static_cast<float>((second ? 100.0 : 0.0) + rng.uniform(-0.5, 0.5));
    }
  }
  const KmeansResult res = kmeans(points, 2, 25, 3);
  REQUIRE(res.converged);
  for (std::size_t i = 1; i < 40; ++i) {
    REQUIRE((res.assignment[i] == res.assignment[0]) == (truth[i] == truth[0]));
  }
}

TEST_CASE("inertia is non-increasing across Lloyd iterations") {
  const Matrix<float> points = testutil::random_matrix(300, 8, 11, -3.0, 3.0);
  const KmeansResult res = kmeans(points, 12, 50, 9);
  REQUIRE(res.inertia_trace.size() >= 2);
  for (std::size_t i = 1; i < res.inertia_trace.size(); ++i) {
    REQUIRE(res.inertia_trace[i] <= res.inertia_trace[i - 1]);
  }
}

TEST_CASE("converged assignments are a fixed point of one more sweep") {
  const Matrix<float> points = testutil::random_matrix(200, 6, 13, -2.0, 2.0);
  const KmeansResult res = kmeans(points, 8, 100, 17);
  REQUIRE(res.converged);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    REQUIRE(nearest_centroid(points.row(i), res.centroids) == res.assignment[i]);
  }
}

TEST_CASE("centroids equal the member means at convergence") {
  const Matrix<float> points = testutil::random_matrix(150, 5, 29, -1.0, 1.0);
  const KmeansResult res = kmeans(points, 5, 100, 31);
  REQUIRE(res.converged);
  for (std::size_t c = 0; c < 5; ++c) {
    std::vector<double> mean(5, 0.0);
    std::size_t count = 0;
    for (std::size_t i = 0; i < points.rows(); ++i) {
      if (res.assignment[i] != c) continue;
      ++count;
      for (std::size_t j = 0; j < 5; ++j) mean[j] += static_cast<double>(points(i, j));
    }
    REQUIRE(count > 0);
    for (std::size_t j = 0; j < 5; ++j) {
      REQUIRE(res.centroids(c, j) == Catch::Approx(mean[j] / count).margin(1e-6));
    }
  }
}

TEST_CASE("duplicate-heavy inputs never leave a cluster empty") {
  Matrix<float> points(9, 2);
  for (std::size_t i = 0; i < 7; ++i) {
    points(i, 0) = 1.0f;  // seven coincident points
    points(i, 1) = 1.0f;
  }
  points(7, 0) = 50.0f;
  points(8, 1) = -50.0f;
  const KmeansResult res = kmeans(points, 4, 20, 23);
  std::set<std::uint32_t> used(res.assignment.begin(), res.assignment.end());
  REQUIRE(used.size() == 4);
}

TEST_CASE("cluster count outside [1, P] is rejected") {
  const Matrix<float> points = testutil::random_matrix(5, 2, 2);
  REQUIRE_THROWS_AS(kmeans(points, 6, 10, 1), InvalidInputError);
  REQUIRE_THROWS_AS(kmeans(points, 0, 10, 1), InvalidInputError);
  REQUIRE_THROWS_AS(kmeans(points, 2, 0, 1), InvalidInputError);
}

TEST_CASE("identical seeds cluster identically") {
  const Matrix<float> points = testutil::random_matrix(120, 4, 37, -2.0, 2.0);
  const KmeansResult a = kmeans(points, 6, 30, 41);
  const KmeansResult b = kmeans(points, 6, 30, 41);
  REQUIRE(a.assignment == b.assignment);
  REQUIRE(a.centroids == b.centroids);
  REQUIRE(a.inertia_trace == b.inertia_trace);
}
