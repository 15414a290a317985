#include "omni/vocoder.hpp"

#include <cmath>
#include <numbers>

#include <httplib.h>
#include <json.hpp>

#include "omni/error.hpp"

namespace omni {

void MockVocoderConfig::validate() const {
  if (!(unit_duration_ms > 0.0)) throw ConfigError("vocoder: unit_duration_ms must be positive");
  if (!(amplitude > 0.0 && amplitude <= 1.0)) throw ConfigError("vocoder: amplitude must be in (0, 1]");
  if (sample_rate == 0) throw ConfigError("vocoder: sample_rate must be positive");
  if (samples_per_unit() == 0) throw ConfigError("vocoder: unit duration shorter than one sample");
}

std::size_t MockVocoderConfig::samples_per_unit() const {
  return static_cast<std::size_t>(std::llround(sample_rate * unit_duration_ms / 1000.0));
}

MockVocoder::MockVocoder(MockVocoderConfig cfg) : cfg_(cfg) { cfg_.validate(); }

Waveform MockVocoder::synthesize(std::span<const std::size_t> units) {
  const std::size_t n = cfg_.samples_per_unit();
  Waveform w;
  w.sample_rate = cfg_.sample_rate;
  w.samples.reserve(units.size() * n);
  const double full = cfg_.amplitude * 32767.0;
  for (std::size_t u : units) {
    const double freq = cfg_.base_freq_hz + static_cast<double>(u) * cfg_.freq_step_hz;
    const double step = 2.0 * std::numbers::pi * freq / cfg_.sample_rate;
    for (std::size_t i = 0; i < n; ++i) {
      w.samples.push_back(static_cast<std::int16_t>(std::lround(full * std::sin(step * static_cast<double>(i)))));
    }
  }
  return w;
}

HttpVocoder::HttpVocoder(std::string host, int port, std::string path, std::uint32_t sample_rate, int timeout_s)
    : host_(std::move(host)), port_(port), path_(std::move(path)), sample_rate_(sample_rate), timeout_s_(timeout_s) {}

Waveform HttpVocoder::synthesize(std::span<const std::size_t> units) {
  const nlohmann::json req = {{"units", std::vector<std::size_t>(units.begin(), units.end())},
                              {"sample_rate", sample_rate_}};
  httplib::Client cli(host_, port_);
  cli.set_read_timeout(timeout_s_, 0);
  cli.set_connection_timeout(timeout_s_, 0);
  auto res = cli.Post(path_, req.dump(), "application/json");
  if (!res) throw IoError("vocoder: request to " + host_ + ":" + std::to_string(port_) + " failed: " +
                          httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("vocoder: server answered HTTP " + std::to_string(res->status));
  const auto* p = reinterpret_cast<const std::uint8_t*>(res->body.data());
  Waveform w = decode_wav(std::span<const std::uint8_t>(p, res->body.size()));
  if (w.sample_rate != sample_rate_) {
    throw IoError("vocoder: server returned " + std::to_string(w.sample_rate) + " Hz, expected " +
                  std::to_string(sample_rate_));
  }
  return w;
}

}  // namespace omni
