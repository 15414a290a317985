#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace omni {

struct Waveform {
  std::vector<std::int16_t> samples;
  std::uint32_t sample_rate = 16000;

  double duration_ms() const { return 1000.0 * static_cast<double>(samples.size()) / sample_rate; }
  void append(const Waveform& other);
  bool operator==(const Waveform&) const = default;
};

// RIFF/WAVE, PCM 16-bit little-endian, mono, canonical 44-byte header.
std::vector<std::uint8_t> encode_wav(const Waveform& w);
// Accepts extra chunks before "data"; rejects anything but mono PCM16.
Waveform decode_wav(std::span<const std::uint8_t> bytes);

void write_wav(const std::filesystem::path& path, const Waveform& w);
Waveform read_wav(const std::filesystem::path& path);

}  // namespace omni
