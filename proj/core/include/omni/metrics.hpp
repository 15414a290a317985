#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace omni {

struct ErrorRateReport {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t reference_len = 0;
  double rate = 0.0;

  std::size_t errors() const { return substitutions + insertions + deletions; }
};

// Lowercase, drop ASCII punctuation, collapse whitespace runs to one space.
std::string normalize_text(std::string_view text);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
};

// Unit-cost Levenshtein alignment with one optimal decomposition.
template <typename T>
EditCounts edit_counts(std::span<const T> ref, std::span<const T> hyp);

ErrorRateReport wer(std::string_view reference, std::string_view hypothesis);
ErrorRateReport cer(std::string_view reference, std::string_view hypothesis);

// Pooled: total errors over total reference length.
ErrorRateReport aggregate(std::span<const ErrorRateReport> reports);

}  // namespace omni
