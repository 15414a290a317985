#include <doctest.h>

#include <algorithm>

#include "../oracles/edit_distance.hpp"
#include "../oracles/gen.hpp"
#include "omni/error.hpp"
#include "omni/metrics.hpp"

using namespace omni;

namespace {

std::string random_sentence(gen::Rng& rng, std::size_t max_words) {
  static const char* words[] = {"the", "cat", "Sat", "on", "a", "mat,", "dog!", "ran"};
  std::string s;
  const std::size_t n = rng.index(1, max_words);
  for (std::size_t i = 0; i < n; ++i) s += (i ? " " : "") + std::string(words[rng.index(0, 7)]);
  return s;
}

std::vector<std::string> tokens_of(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : normalize_text(s) + " ") {
    if (c == ' ') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  return out;
}

}  // namespace

TEST_CASE("normalization") {
  CHECK(normalize_text("  Hello,   World! ") == "hello world");
  CHECK(normalize_text("it's 2+2?") == "its 22");
  CHECK(normalize_text("").empty());
}

TEST_CASE("word and character error rates on small cases") {
  CHECK(wer("a b c", "a b c").rate == 0.0);
  const auto r = wer("a b c", "a x c");
  CHECK(r.substitutions == 1);
  CHECK(r.rate == doctest::Approx(1.0 / 3));
  CHECK(wer("The cat.", "the CAT").rate == 0.0);
  CHECK(wer("a b c", "").rate == 1.0);
  CHECK(wer("a b c", "").deletions == 3);
  CHECK(wer("a", "a b c").rate == 2.0);
  CHECK(cer("abc", "abd").rate == doctest::Approx(1.0 / 3));
  CHECK(cer("ab cd", "abcd").deletions == 1);
  CHECK_THROWS_AS(wer("", "a"), UndefinedRateError);
  CHECK_THROWS_AS(wer(" ?! ", "a"), UndefinedRateError);
}

TEST_CASE("edit counts agree with the brute-force distance") {
  gen::Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const auto a = rng.indices(rng.index(0, 7), 0, 3);
    const auto b = rng.indices(rng.index(0, 7), 0, 3);
    const EditCounts e = edit_counts<std::size_t>(a, b);
    CHECK(e.substitutions + e.insertions + e.deletions == oracle::brute_force_distance(a, b));
    CHECK(a.size() - e.deletions + e.insertions == b.size());
  }
}

TEST_CASE("wer matches an independent DP on random sentence pairs") {
  gen::Rng rng(4);
  for (int trial = 0; trial < 300; ++trial) {
    const std::string ref = random_sentence(rng, 8), hyp = rng.coin(0.1) ? "" : random_sentence(rng, 8);
    const auto rt = tokens_of(ref), ht = tokens_of(hyp);
    const auto report = wer(ref, hyp);
    CHECK(report.errors() == oracle::edit_distance(rt, ht));
    CHECK(report.reference_len == rt.size());
    CHECK(report.rate == doctest::Approx(static_cast<double>(report.errors()) / rt.size()));
    CHECK(wer(ref, ref).rate == 0.0);
  }
}

TEST_CASE("pooled aggregation") {
  ErrorRateReport a, b;
  a.substitutions = 1;
  a.reference_len = 1;
  a.rate = 1.0;
  b.reference_len = 9;
  std::vector<ErrorRateReport> both{a, b};
  CHECK(aggregate(both).rate == doctest::Approx(0.1));
  std::reverse(both.begin(), both.end());
  CHECK(aggregate(both).rate == doctest::Approx(0.1));
  CHECK(aggregate(std::span(&a, 1)).rate == 1.0);
  CHECK_THROWS_AS(aggregate({}), UndefinedRateError);
}
