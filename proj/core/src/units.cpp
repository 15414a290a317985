#include "omni/units.hpp"

#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "omni/error.hpp"

namespace omni {

UnitSequence::UnitSequence(std::vector<std::size_t> units, std::size_t vocab)
    : units_(std::move(units)), vocab_(vocab) {
  for (std::size_t i = 0; i < units_.size(); ++i) {
    if (units_[i] >= vocab_) {
      throw ConfigError("UnitSequence: unit " + std::to_string(units_[i]) + " outside vocabulary of " +
                        std::to_string(vocab_));
    }
  }
}

UnitSequence UnitSequence::slice(std::size_t begin, std::size_t end) const {
  if (begin > end || end > units_.size()) throw IndexError("UnitSequence::slice: range out of bounds");
  return UnitSequence(std::vector<std::size_t>(units_.begin() + begin, units_.begin() + end), vocab_);
}

bool UnitSequence::has_adjacent_repeats() const {
  for (std::size_t i = 1; i < units_.size(); ++i)
    if (units_[i] == units_[i - 1]) return true;
  return false;
}

UnitSequence merge_consecutive(std::span<const std::size_t> raw, std::size_t vocab) {
  std::vector<std::size_t> out;
  for (std::size_t v : raw) {
    if (out.empty() || out.back() != v) out.push_back(v);
  }
  return UnitSequence(std::move(out), vocab);
}

namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::pair<std::size_t, double> nearest(std::span<const double> x, const FeatureMatrix& centroids) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = sq_dist(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return {best, best_d};
}

}  // namespace

double inertia(const FeatureMatrix& points, const FeatureMatrix& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < points.rows(); ++i) total += nearest(points.row(i), centroids).second;
  return total;
}

KMeansResult kmeans_fit(const FeatureMatrix& points, std::size_t k, std::uint64_t seed, std::size_t max_iters) {
  const std::size_t n = points.rows(), dim = points.cols();
  if (k == 0) throw ConfigError("kmeans_fit: K must be >= 1");
  if (n < k) {
    throw ConfigError("kmeans_fit: " + std::to_string(n) + " points cannot support " + std::to_string(k) +
                      " clusters");
  }
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  FeatureMatrix centroids;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centroids.append_row(points.row(pick(rng)));
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = sq_dist(points.row(i), centroids.row(0));
  while (centroids.rows() < k) {
    double total = 0.0;
    for (double v : d2) total += v;
    std::size_t chosen = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= d2[i];
        if (r < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
      // Never reseed onto an existing centroid while unused points remain.
      while (d2[chosen] == 0.0 && chosen > 0) --chosen;
    } else {
      chosen = pick(rng);  // every point already coincides with a centroid
    }
    centroids.append_row(points.row(chosen));
    const auto c = centroids.row(centroids.rows() - 1);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], sq_dist(points.row(i), c));
  }

  KMeansResult result;
  std::vector<std::size_t> assign(n, 0);
  double current = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    auto [c, d] = nearest(points.row(i), centroids);
    assign[i] = c;
    current += d;
  }
  result.inertia.push_back(current);

  std::size_t iter = 0;
  for (; iter < max_iters; ++iter) {
    // Update step; empty clusters keep their previous centroid.
    FeatureMatrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto s = sums.row(assign[i]);
      const auto p = points.row(i);
      for (std::size_t j = 0; j < dim; ++j) s[j] += p[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto dst = centroids.row(c);
      const auto s = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) dst[j] = s[j] / static_cast<double>(counts[c]);
    }
    // Assignment step.
    bool changed = false;
    double next = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto [c, d] = nearest(points.row(i), centroids);
      if (c != assign[i]) changed = true;
      assign[i] = c;
      next += d;
    }
    // Lloyd steps never increase inertia; allow only rounding slack.
    if (next > current * (1.0 + 1e-12) + 1e-12) {
      throw StateError("kmeans_fit: inertia increased from " + std::to_string(current) + " to " +
                       std::to_string(next));
    }
    result.inertia.push_back(next);
    current = next;
    if (!changed) {
      ++iter;
      break;
    }
  }
  result.codebook = Codebook{std::move(centroids), seed, iter};
  return result;
}

std::vector<std::size_t> quantize(const FeatureMatrix& features, const Codebook& codebook) {
  if (features.rows() > 0 && features.cols() != codebook.dim()) {
    throw DimensionError("quantize: features are " + std::to_string(features.cols()) +
                         " wide, codebook is " + std::to_string(codebook.dim()));
  }
  std::vector<std::size_t> out(features.rows());
  for (std::size_t i = 0; i < features.rows(); ++i) out[i] = nearest(features.row(i), codebook.centroids).first;
  return out;
}

UnitSequence extract_units(const FeatureMatrix& features, const Codebook& codebook) {
  return merge_consecutive(quantize(features, codebook), codebook.size());
}

void save_codebook(const std::filesystem::path& stem, const Codebook& codebook) {
  auto fmat = stem;
  fmat += ".fmat";
  auto json_path = stem;
  json_path += ".json";
  write_fmat(fmat, codebook.centroids);
  nlohmann::json j = {{"K", codebook.size()},
                      {"D", codebook.dim()},
                      {"seed", codebook.seed},
                      {"iterations", codebook.iterations}};
  std::ofstream out(json_path);
  if (!out) throw IoError("cannot write " + json_path.string());
  out << j.dump(2) << "\n";
}

Codebook load_codebook(const std::filesystem::path& stem) {
  auto fmat = stem;
  fmat += ".fmat";
  auto json_path = stem;
  json_path += ".json";
  Codebook cb;
  cb.centroids = read_fmat(fmat);
  std::ifstream in(json_path);
  if (in) {
    const auto j = nlohmann::json::parse(in);
    if (j.at("K").get<std::size_t>() != cb.size() || j.at("D").get<std::size_t>() != cb.dim()) {
      throw DimensionError("codebook manifest disagrees with " + fmat.string());
    }
    cb.seed = j.value("seed", std::uint64_t{0});
    cb.iterations = j.value("iterations", std::size_t{0});
  }
  if (cb.size() == 0) throw ConfigError("codebook " + fmat.string() + " is empty");
  return cb;
}

}  // namespace omni
