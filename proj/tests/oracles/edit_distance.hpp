#pragma once

// Two independent edit-distance references: a memoized top-down recursion
// (distance plus one optimal S/I/D split) and an exhaustive search over
// edit scripts for short inputs.

#include <algorithm>
#include <cstddef>
#include <map>
#include <tuple>
#include <vector>

namespace oracle {

struct Edits {
  std::size_t sub = 0, ins = 0, del = 0;
  std::size_t total() const { return sub + ins + del; }
};

template <typename T>
class Recursive {
 public:
  Recursive(const std::vector<T>& a, const std::vector<T>& b) : a_(a), b_(b) {}
  // Distance between the suffixes a[i..] and b[j..].
  std::size_t dist(std::size_t i, std::size_t j) {
    if (i == a_.size()) return b_.size() - j;
    if (j == b_.size()) return a_.size() - i;
    const auto key = std::make_pair(i, j);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::size_t best = dist(i + 1, j + 1) + (a_[i] == b_[j] ? 0 : 1);
    best = std::min(best, dist(i + 1, j) + 1);
    best = std::min(best, dist(i, j + 1) + 1);
    memo_[key] = best;
    return best;
  }

 private:
  const std::vector<T>& a_;
  const std::vector<T>& b_;
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo_;
};

template <typename T>
std::size_t edit_distance(const std::vector<T>& ref, const std::vector<T>& hyp) {
  Recursive<T> r(ref, hyp);
  return r.dist(0, 0);
}

// Tries every edit script; returns the minimum cost. Exponential.
template <typename T>
std::size_t brute_force_distance(const std::vector<T>& a, const std::vector<T>& b, std::size_t i = 0,
                                 std::size_t j = 0) {
  if (i == a.size()) return b.size() - j;
  if (j == b.size()) return a.size() - i;
  const std::size_t keep_or_sub = (a[i] == b[j] ? 0 : 1) + brute_force_distance(a, b, i + 1, j + 1);
  const std::size_t del = 1 + brute_force_distance(a, b, i + 1, j);
  const std::size_t ins = 1 + brute_force_distance(a, b, i, j + 1);
  return std::min({keep_or_sub, del, ins});
}

}  // namespace oracle
