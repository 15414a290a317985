#include "omni/transcriber.hpp"

#include <cmath>
#include <limits>

#include "omni/error.hpp"

namespace omni {

MockTranscriber::MockTranscriber(MockVocoderConfig vocoder, std::size_t unit_vocab, Lexicon lexicon)
    : cfg_(vocoder), vocab_(unit_vocab), lexicon_(std::move(lexicon)) {
  cfg_.validate();
  MockVocoder voc(cfg_);
  for (std::size_t u = 0; u < vocab_; ++u) {
    const std::size_t one[] = {u};
    const Waveform w = voc.synthesize(one);
    templates_.emplace_back(w.samples.begin(), w.samples.end());
  }
  for (const auto& [word, pattern] : lexicon_) {
    if (pattern.empty()) throw ConfigError("transcriber: empty pattern for '" + word + "'");
  }
}

std::vector<std::size_t> MockTranscriber::recover_units(const Waveform& wave) const {
  const std::size_t n = cfg_.samples_per_unit();
  if (wave.samples.size() % n != 0) {
    throw LengthError("transcriber: " + std::to_string(wave.samples.size()) + " samples is not a whole number of " +
                      std::to_string(n) + "-sample segments");
  }
  std::vector<std::size_t> units;
  for (std::size_t s = 0; s < wave.samples.size(); s += n) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t u = 0; u < vocab_; ++u) {
      double dot = 0.0, norm = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        dot += wave.samples[s + i] * templates_[u][i];
        norm += templates_[u][i] * templates_[u][i];
      }
      const double score = norm > 0.0 ? dot / std::sqrt(norm) : 0.0;
      if (score > best_score) {
        best_score = score;
        best = u;
      }
    }
    units.push_back(best);
  }
  return units;
}

std::string MockTranscriber::units_to_text(const std::vector<std::size_t>& units) const {
  const std::size_t n = units.size();
  // best[i]: fewest uncovered units over units[0, i); ties prefer fewer words.
  struct Cell {
    std::size_t cost = std::numeric_limits<std::size_t>::max();
    std::size_t words = 0;
    std::size_t from = 0;
    const std::string* word = nullptr;
  };
  std::vector<Cell> best(n + 1);
  best[0].cost = 0;
  auto relax = [&](std::size_t to, std::size_t cost, std::size_t words, std::size_t from, const std::string* w) {
    Cell& c = best[to];
    if (cost < c.cost || (cost == c.cost && words < c.words)) c = {cost, words, from, w};
  };
  for (std::size_t i = 0; i < n; ++i) {
    if (best[i].cost == std::numeric_limits<std::size_t>::max()) continue;
    relax(i + 1, best[i].cost + 1, best[i].words, i, nullptr);
    for (const auto& [word, pattern] : lexicon_) {
      // A word whose first unit equals the previous unit was merged into it.
      const std::size_t skip = (i > 0 && best[i].word && pattern.front() == units[i - 1]) ? 1 : 0;
      const std::size_t len = pattern.size() - skip;
      if (len == 0 || i + len > n) continue;
      bool match = true;
      for (std::size_t k = 0; k < len && match; ++k) match = units[i + k] == pattern[skip + k];
      if (match) relax(i + len, best[i].cost, best[i].words + 1, i, &word);
    }
  }
  std::vector<const std::string*> words;
  for (std::size_t i = n; i > 0; i = best[i].from) {
    if (best[i].word) words.push_back(best[i].word);
  }
  std::string text;
  for (auto it = words.rbegin(); it != words.rend(); ++it) {
    if (!text.empty()) text += ' ';
    text += **it;
  }
  return text;
}

}  // namespace omni
