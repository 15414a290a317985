#include "omni/metrics.hpp"

#include <algorithm>
#include <cctype>

#include "omni/error.hpp"
#include "omni/tokenizer.hpp"

namespace omni {

std::string normalize_text(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool space = false;
  for (unsigned char c : text) {
    if (std::ispunct(c)) continue;
    if (std::isspace(c)) {
      space = !out.empty();
      continue;
    }
    if (space) out.push_back(' ');
    space = false;
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

template <typename T>
EditCounts edit_counts(std::span<const T> ref, std::span<const T> hyp) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t j = 1; j <= m; ++j) {
      const std::size_t sub = at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1);
      at(i, j) = std::min({sub, at(i - 1, j) + 1, at(i, j - 1) + 1});
    }
  }
  EditCounts c;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1)) {
      if (ref[i - 1] != hyp[j - 1]) ++c.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++c.deletions;
      --i;
    } else {
      ++c.insertions;
      --j;
    }
  }
  return c;
}

template EditCounts edit_counts<std::string>(std::span<const std::string>, std::span<const std::string>);
template EditCounts edit_counts<char>(std::span<const char>, std::span<const char>);
template EditCounts edit_counts<std::size_t>(std::span<const std::size_t>, std::span<const std::size_t>);

namespace {

template <typename T>
ErrorRateReport report(std::span<const T> ref, std::span<const T> hyp, const char* what) {
  if (ref.empty()) throw UndefinedRateError(std::string(what) + ": reference is empty after normalization");
  const EditCounts c = edit_counts(ref, hyp);
  ErrorRateReport r{c.substitutions, c.insertions, c.deletions, ref.size(), 0.0};
  r.rate = static_cast<double>(r.errors()) / static_cast<double>(r.reference_len);
  return r;
}

}  // namespace

ErrorRateReport wer(std::string_view reference, std::string_view hypothesis) {
  const auto ref = split_words(normalize_text(reference));
  const auto hyp = split_words(normalize_text(hypothesis));
  return report<std::string>(ref, hyp, "wer");
}

ErrorRateReport cer(std::string_view reference, std::string_view hypothesis) {
  const std::string ref = normalize_text(reference);
  const std::string hyp = normalize_text(hypothesis);
  return report<char>(std::span<const char>(ref), std::span<const char>(hyp), "cer");
}

ErrorRateReport aggregate(std::span<const ErrorRateReport> reports) {
  if (reports.empty()) throw UndefinedRateError("aggregate: no reports");
  ErrorRateReport total;
  for (const auto& r : reports) {
    total.substitutions += r.substitutions;
    total.insertions += r.insertions;
    total.deletions += r.deletions;
    total.reference_len += r.reference_len;
  }
  if (total.reference_len == 0) throw UndefinedRateError("aggregate: total reference length is zero");
  total.rate = static_cast<double>(total.errors()) / static_cast<double>(total.reference_len);
  return total;
}

}  // namespace omni
