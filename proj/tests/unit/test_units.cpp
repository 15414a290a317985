#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>

#include "../oracles/gen.hpp"
#include "../oracles/ref_kmeans.hpp"
#include "omni/error.hpp"
#include "omni/units.hpp"

using namespace omni;

namespace {

oracle::Points to_points(const FeatureMatrix& m) {
  oracle::Points out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

// Three tight blobs far apart, 20 points each, interleaved.
FeatureMatrix blobs(gen::Rng& rng, std::vector<std::size_t>* truth) {
  const double centers[3][2] = {{0, 0}, {10, 0}, {0, 10}};
  FeatureMatrix m(0, 2);
  for (std::size_t i = 0; i < 60; ++i) {
    const std::size_t c = i % 3;
    m.append_row(std::vector<double>{centers[c][0] + rng.normal(0.3), centers[c][1] + rng.normal(0.3)});
    if (truth) truth->push_back(c);
  }
  return m;
}

}  // namespace

TEST_CASE("merge_consecutive examples") {
  const std::size_t raw[] = {3, 3, 7, 7, 7, 3, 1};
  CHECK(merge_consecutive(raw, 8).values() == std::vector<std::size_t>{3, 7, 3, 1});
  CHECK(merge_consecutive(std::span<const std::size_t>{}, 8).empty());
  const std::size_t out_of_range[] = {8};
  CHECK_THROWS_AS(merge_consecutive(out_of_range, 8), ConfigError);
}

TEST_CASE("merge_consecutive never leaves adjacent repeats and is idempotent") {
  gen::Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const auto raw = rng.indices(rng.index(0, 20), 0, 3);
    const UnitSequence u = merge_consecutive(raw, 4);
    CHECK_FALSE(u.has_adjacent_repeats());
    CHECK(merge_consecutive(u.values(), 4) == u);
    // Same multiset of run values, in order.
    std::vector<std::size_t> runs;
    for (std::size_t i = 0; i < raw.size(); ++i) {
      if (i == 0 || raw[i] != raw[i - 1]) runs.push_back(raw[i]);
    }
    CHECK(u.values() == runs);
  }
}

TEST_CASE("unit sequence validates its range") {
  CHECK_THROWS_AS(UnitSequence({0, 4}, 4), ConfigError);
  const UnitSequence u({1, 2, 2, 3}, 4);
  CHECK(u.has_adjacent_repeats());
  CHECK(u.slice(1, 3).values() == std::vector<std::size_t>{2, 2});
}

TEST_CASE("quantize picks the nearest centroid with lowest index on ties") {
  Codebook cb;
  cb.centroids = FeatureMatrix(3, 1, {0.0, 2.0, 2.0});
  const FeatureMatrix x(4, 1, {0.9, 1.1, 2.0, 1.0});
  CHECK(quantize(x, cb) == std::vector<std::size_t>{0, 1, 1, 0});
  CHECK_THROWS_AS(quantize(FeatureMatrix(1, 2, {0, 0}), cb), DimensionError);
}

TEST_CASE("quantize agrees with brute-force assignment") {
  gen::Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    Codebook cb;
    cb.centroids = FeatureMatrix(5, 3, rng.normals(15));
    const FeatureMatrix x(12, 3, rng.normals(36));
    CHECK(quantize(x, cb) == oracle::assign(to_points(x), to_points(cb.centroids)));
  }
}

TEST_CASE("kmeans recovers well separated clusters") {
  gen::Rng rng(9);
  std::vector<std::size_t> truth;
  const FeatureMatrix x = blobs(rng, &truth);
  const KMeansResult r = kmeans_fit(x, 3, 17);
  const auto labels = quantize(x, r.codebook);
  std::map<std::size_t, std::set<std::size_t>> mapping;
  for (std::size_t i = 0; i < labels.size(); ++i) mapping[truth[i]].insert(labels[i]);
  std::set<std::size_t> used;
  for (const auto& [t, ls] : mapping) {
    CHECK(ls.size() == 1);
    used.insert(*ls.begin());
  }
  CHECK(used.size() == 3);
}

TEST_CASE("kmeans inertia history is non-increasing and matches the reference") {
  gen::Rng rng(10);
  for (int trial = 0; trial < 10; ++trial) {
    const FeatureMatrix x(40, 2, rng.normals(80));
    const KMeansResult r = kmeans_fit(x, 4, 100 + trial);
    for (std::size_t i = 1; i < r.inertia.size(); ++i) CHECK(r.inertia[i] <= r.inertia[i - 1] + 1e-9);
    const auto pts = to_points(x);
    const auto cents = to_points(r.codebook.centroids);
    CHECK(inertia(x, r.codebook.centroids) == doctest::Approx(oracle::inertia(pts, cents)).epsilon(1e-12));
    // Converged: one more reference Lloyd step changes nothing.
    const auto next = oracle::lloyd_step(pts, cents);
    CHECK(oracle::inertia(pts, next) == doctest::Approx(oracle::inertia(pts, cents)).epsilon(1e-9));
  }
}

TEST_CASE("kmeans is deterministic under a seed and rejects too few points") {
  gen::Rng rng(11);
  const FeatureMatrix x(30, 3, rng.normals(90));
  CHECK(kmeans_fit(x, 5, 3).codebook.centroids == kmeans_fit(x, 5, 3).codebook.centroids);
  CHECK_THROWS_AS(kmeans_fit(FeatureMatrix(2, 3, rng.normals(6)), 3, 1), ConfigError);
}

TEST_CASE("extract_units quantizes then merges") {
  Codebook cb;
  cb.centroids = FeatureMatrix(2, 1, {0.0, 10.0});
  const FeatureMatrix x(5, 1, {0.1, -0.2, 9.0, 11.0, 0.0});
  CHECK(extract_units(x, cb).values() == std::vector<std::size_t>{0, 1, 0});
}

TEST_CASE("codebook save and load") {
  gen::Rng rng(12);
  const KMeansResult r = kmeans_fit(FeatureMatrix(20, 2, rng.normals(40)), 3, 5);
  const auto stem = std::filesystem::temp_directory_path() / "omni_codebook_test";
  save_codebook(stem, r.codebook);
  const Codebook back = load_codebook(stem);
  CHECK(back.size() == 3);
  CHECK(back.dim() == 2);
  CHECK(back.seed == 5);
  CHECK(back.iterations == r.codebook.iterations);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(back.centroids.data()[i] == doctest::Approx(r.codebook.centroids.data()[i]).epsilon(1e-6));
  }
  std::filesystem::remove(stem.string() + ".fmat");
  std::filesystem::remove(stem.string() + ".json");
}
