#include <doctest.h>

#include <cmath>

#include "../oracles/brute_ctc.hpp"
#include "../oracles/gen.hpp"
#include "omni/ctc.hpp"
#include "omni/error.hpp"

using namespace omni;

namespace {

FeatureMatrix random_logits(gen::Rng& rng, std::size_t t, std::size_t k) {
  return FeatureMatrix(t, k + 1, rng.normals(t * (k + 1), 1.5));
}

oracle::Scores to_scores(const FeatureMatrix& m) {
  oracle::Scores s;
  for (std::size_t r = 0; r < m.rows(); ++r) s.emplace_back(m.row(r).begin(), m.row(r).end());
  return s;
}

}  // namespace

TEST_CASE("collapse merges runs and then removes blanks") {
  const std::size_t e = 4;
  CHECK(collapse({{1, 1, 2, e, e, 2, 3}, 4}).values() == std::vector<std::size_t>{1, 2, 2, 3});
  CHECK(collapse({{e, 4, 4, e}, 4}).values().empty());
  CHECK(collapse({{e, 2, 2, e}, 4}).values() == std::vector<std::size_t>{2});
  CHECK(collapse({{}, 4}).empty());
  CHECK_THROWS_AS(collapse({{5}, 4}), IndexError);
}

TEST_CASE("collapse agrees with the reference squash") {
  gen::Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const std::size_t k = rng.index(1, 5);
    const auto path = rng.indices(rng.index(0, 12), 0, k);
    CHECK(collapse({path, k}).values() == oracle::squash(path, k));
  }
}

TEST_CASE("required frames counts repeats") {
  CHECK(required_frames(UnitSequence({1, 2, 3}, 4)) == 3);
  CHECK(required_frames(UnitSequence({1, 1, 2, 2}, 4)) == 6);
  CHECK(required_frames(UnitSequence({}, 4)) == 0);
}

TEST_CASE("ctc loss matches brute-force enumeration") {
  gen::Rng rng(2);
  int feasible = 0;
  for (int i = 0; i < 120; ++i) {
    const std::size_t t = rng.index(1, 5), k = rng.index(1, 3);
    const auto target = rng.indices(rng.index(0, 3), 0, k - 1);
    const FeatureMatrix logits = random_logits(rng, t, k);
    const double expect = oracle::ctc_nll(to_scores(logits), target);
    const UnitSequence y(target, k);
    if (std::isinf(expect)) {
      CHECK_THROWS_AS(ctc_neg_log_likelihood(logits, y, nullptr), InfeasibleTargetError);
    } else {
      ++feasible;
      CHECK(std::abs(ctc_neg_log_likelihood(logits, y, nullptr) - expect) < 1e-9);
    }
  }
  CHECK(feasible > 60);
}

TEST_CASE("empty input and empty target") {
  CHECK(ctc_neg_log_likelihood(FeatureMatrix(0, 3), UnitSequence({}, 2), nullptr) == 0.0);
  // All-blank path is the only alignment of the empty target.
  const FeatureMatrix logits(2, 3, {0, 0, 0, 0, 0, 0});
  CHECK(ctc_neg_log_likelihood(logits, UnitSequence({}, 2), nullptr) == doctest::Approx(2 * std::log(3.0)));
  CHECK_THROWS_AS(ctc_neg_log_likelihood(logits, UnitSequence({}, 3), nullptr), DimensionError);
}

TEST_CASE("ctc gradient matches finite differences and rows sum to zero") {
  gen::Rng rng(3);
  for (int i = 0; i < 10; ++i) {
    const std::size_t k = rng.index(2, 4);
    const auto target = rng.indices(rng.index(1, 3), 0, k - 1);
    const UnitSequence y(target, k);
    const std::size_t t = required_frames(y) + rng.index(0, 4);
    FeatureMatrix logits = random_logits(rng, t, k);
    FeatureMatrix grad;
    ctc_neg_log_likelihood(logits, y, &grad);
    double worst = 0.0, scale = 1e-8;
    for (std::size_t j = 0; j < logits.data().size(); ++j) {
      const double keep = logits.data()[j];
      logits.data()[j] = keep + 1e-6;
      const double up = ctc_neg_log_likelihood(logits, y, nullptr);
      logits.data()[j] = keep - 1e-6;
      const double down = ctc_neg_log_likelihood(logits, y, nullptr);
      logits.data()[j] = keep;
      const double numeric = (up - down) / 2e-6;
      worst = std::max(worst, std::abs(numeric - grad.data()[j]));
      scale = std::max(scale, std::abs(numeric));
    }
    CHECK(worst / scale < 1e-4);
    for (std::size_t r = 0; r < t; ++r) {
      double s = 0.0;
      for (double g : grad.row(r)) s += g;
      CHECK(std::abs(s) < 1e-12);
    }
  }
}

TEST_CASE("ctc_loss autodiff op carries the forward-backward gradient") {
  gen::Rng rng(4);
  const FeatureMatrix m = random_logits(rng, 6, 3);
  const UnitSequence y({0, 2, 2}, 3);
  Tensor logits = to_tensor(m, true);
  Tensor loss = ctc_loss(logits, y);
  FeatureMatrix grad;
  CHECK(loss.item() == doctest::Approx(ctc_neg_log_likelihood(m, y, &grad)).epsilon(1e-14));
  loss.backward();
  for (std::size_t i = 0; i < grad.data().size(); ++i) CHECK(logits.grad()[i] == doctest::Approx(grad.data()[i]));
}

TEST_CASE("best path takes the lowest index on ties, so blank loses") {
  const FeatureMatrix logits(3, 3, {1, 1, 1, 0, 5, 5, 2, 0, 1});
  CHECK(best_path(logits).tokens == std::vector<std::size_t>{0, 1, 0});
  CHECK(best_path(logits).vocab == 2);
}
