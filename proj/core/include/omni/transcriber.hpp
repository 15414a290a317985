#pragma once

// Exact stand-in for an ASR system over mock-vocoder audio: recovers units
// segment by segment, then words through a unit-pattern lexicon.

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "omni/vocoder.hpp"

namespace omni {

using Lexicon = std::map<std::string, std::vector<std::size_t>>;

class MockTranscriber {
 public:
  MockTranscriber(MockVocoderConfig vocoder, std::size_t unit_vocab, Lexicon lexicon);

  // Best-matching unit per segment (largest correlation, lowest index on ties).
  std::vector<std::size_t> recover_units(const Waveform& wave) const;
  // Segmentation into lexicon words covering the most units. Neighbouring
  // words may share a boundary unit, as merged unit sequences do.
  std::string units_to_text(const std::vector<std::size_t>& units) const;
  std::string transcribe(const Waveform& wave) const { return units_to_text(recover_units(wave)); }

 private:
  MockVocoderConfig cfg_;
  std::size_t vocab_;
  Lexicon lexicon_;
  std::vector<std::vector<double>> templates_;  // one synthesized segment per unit
};

}  // namespace omni
