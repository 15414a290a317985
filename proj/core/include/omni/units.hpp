#pragma once

// Discrete speech units: K-means codebooks over continuous frames and the
// run-length merge that turns per-frame cluster ids into a unit sequence.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "omni/feature_matrix.hpp"

namespace omni {

// Values in [0, K). Sequences built by merge_consecutive also have no two
// consecutive entries equal; CTC collapse can legitimately yield repeats that
// were separated by a blank, e.g. [1,1,2,e,e,2,3] -> [1,2,2,3].
class UnitSequence {
 public:
  UnitSequence() = default;
  // Throws ConfigError for values outside [0, vocab).
  UnitSequence(std::vector<std::size_t> units, std::size_t vocab);

  std::size_t vocab() const noexcept { return vocab_; }
  std::size_t size() const noexcept { return units_.size(); }
  bool empty() const noexcept { return units_.empty(); }
  const std::vector<std::size_t>& values() const noexcept { return units_; }
  std::size_t operator[](std::size_t i) const { return units_[i]; }
  UnitSequence slice(std::size_t begin, std::size_t end) const;
  bool has_adjacent_repeats() const;

  bool operator==(const UnitSequence&) const = default;

 private:
  std::vector<std::size_t> units_;
  std::size_t vocab_ = 0;
};

// Run-length deduplication. `vocab` bounds the values.
UnitSequence merge_consecutive(std::span<const std::size_t> raw, std::size_t vocab);

struct Codebook {
  FeatureMatrix centroids;  // K x D
  std::uint64_t seed = 0;
  std::size_t iterations = 0;

  std::size_t size() const { return centroids.rows(); }
  std::size_t dim() const { return centroids.cols(); }
};

struct KMeansResult {
  Codebook codebook;
  // Inertia after initialisation and after each Lloyd iteration.
  std::vector<double> inertia;
};

// Lloyd's algorithm with k-means++ seeding; deterministic for a given seed.
KMeansResult kmeans_fit(const FeatureMatrix& points, std::size_t k, std::uint64_t seed,
                        std::size_t max_iters = 100);

// Sum of squared distances from each point to its nearest centroid.
double inertia(const FeatureMatrix& points, const FeatureMatrix& centroids);

// Nearest centroid per frame (Euclidean, lowest index on ties).
std::vector<std::size_t> quantize(const FeatureMatrix& features, const Codebook& codebook);

// quantize followed by merge_consecutive.
UnitSequence extract_units(const FeatureMatrix& features, const Codebook& codebook);

// `<stem>.fmat` for the centroids and `<stem>.json` for {K, D, seed, iterations}.
void save_codebook(const std::filesystem::path& stem, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& stem);

}  // namespace omni
