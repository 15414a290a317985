#pragma once

#include <cstdint>
#include <span>
#include <string>

#include "omni/units.hpp"
#include "omni/wav.hpp"

namespace omni {

class Vocoder {
 public:
  virtual ~Vocoder() = default;
  virtual Waveform synthesize(std::span<const std::size_t> units) = 0;
  virtual std::uint32_t sample_rate() const = 0;
  Waveform synthesize(const UnitSequence& units) { return synthesize(units.values()); }
};

struct MockVocoderConfig {
  double unit_duration_ms = 20.0;
  double base_freq_hz = 100.0;
  double freq_step_hz = 5.0;
  double amplitude = 0.3;  // fraction of full scale
  std::uint32_t sample_rate = 16000;

  void validate() const;
  std::size_t samples_per_unit() const;
};

// Unit u becomes a sine at base + u * step for one unit duration, phase reset
// at every segment, so synthesis of a concatenation is the concatenation of
// the syntheses.
class MockVocoder final : public Vocoder {
 public:
  explicit MockVocoder(MockVocoderConfig cfg = {});
  using Vocoder::synthesize;
  Waveform synthesize(std::span<const std::size_t> units) override;
  std::uint32_t sample_rate() const override { return cfg_.sample_rate; }
  const MockVocoderConfig& config() const { return cfg_; }

 private:
  MockVocoderConfig cfg_;
};

// Talks to an external unit vocoder over HTTP: POSTs
// {"units":[...],"sample_rate":R} and expects WAV bytes back.
class HttpVocoder final : public Vocoder {
 public:
  HttpVocoder(std::string host, int port, std::string path = "/synthesize", std::uint32_t sample_rate = 16000,
              int timeout_s = 30);
  using Vocoder::synthesize;
  Waveform synthesize(std::span<const std::size_t> units) override;
  std::uint32_t sample_rate() const override { return sample_rate_; }

 private:
  std::string host_;
  int port_;
  std::string path_;
  std::uint32_t sample_rate_;
  int timeout_s_;
};

}  // namespace omni
