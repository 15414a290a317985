#include "omni/wav.hpp"

#include <bit>
#include <cstring>
#include <string>
#include <string_view>

#include "omni/error.hpp"
#include "omni/feature_matrix.hpp"

namespace omni {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

void Waveform::append(const Waveform& other) {
  if (other.samples.empty()) return;
  if (!samples.empty() && other.sample_rate != sample_rate) {
    throw ConfigError("Waveform::append: sample rates differ (" + std::to_string(sample_rate) + " vs " +
                      std::to_string(other.sample_rate) + ")");
  }
  if (samples.empty()) sample_rate = other.sample_rate;
  samples.insert(samples.end(), other.samples.begin(), other.samples.end());
}

namespace {

void put_tag(std::vector<std::uint8_t>& out, std::string_view tag) { out.insert(out.end(), tag.begin(), tag.end()); }

template <typename T>
void put(std::vector<std::uint8_t>& out, T v) {
  std::uint8_t buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.insert(out.end(), buf, buf + sizeof(T));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : b_(b) {}
  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return b_.size() - pos_; }
  void need(std::size_t n, const char* what) const {
    if (remaining() < n) throw ParseError(std::string("wav: truncated ") + what, b_.size());
  }
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v;
    std::memcpy(&v, b_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  std::string_view tag(const char* what) {
    need(4, what);
    std::string_view t(reinterpret_cast<const char*>(b_.data() + pos_), 4);
    pos_ += 4;
    return t;
  }
  void skip(std::size_t n, const char* what) {
    need(n, what);
    pos_ += n;
  }
  const std::uint8_t* here() const { return b_.data() + pos_; }

 private:
  std::span<const std::uint8_t> b_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode_wav(const Waveform& w) {
  if (w.sample_rate == 0) throw ConfigError("encode_wav: sample rate must be positive");
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put<std::uint32_t>(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, 1);  // PCM
  put<std::uint16_t>(out, 1);  // mono
  put<std::uint32_t>(out, w.sample_rate);
  put<std::uint32_t>(out, w.sample_rate * 2);
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  put_tag(out, "data");
  put<std::uint32_t>(out, data_bytes);
  for (std::int16_t s : w.samples) put(out, s);
  return out;
}

Waveform decode_wav(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.tag("RIFF header") != "RIFF") throw ParseError("wav: missing RIFF tag", 0);
  r.get<std::uint32_t>("RIFF size");
  if (r.tag("WAVE tag") != "WAVE") throw ParseError("wav: missing WAVE tag", 8);

  bool have_fmt = false;
  Waveform w;
  while (true) {
    const std::size_t at = r.pos();
    const std::string_view id = r.tag("chunk header");
    const auto size = r.get<std::uint32_t>("chunk size");
    if (id == "fmt ") {
      if (size < 16) throw ParseError("wav: fmt chunk too small", at);
      const std::size_t body = r.pos();
      const auto format = r.get<std::uint16_t>("fmt");
      const auto channels = r.get<std::uint16_t>("fmt");
      w.sample_rate = r.get<std::uint32_t>("fmt");
      r.get<std::uint32_t>("fmt");
      r.get<std::uint16_t>("fmt");
      const auto bits = r.get<std::uint16_t>("fmt");
      if (format != 1) throw ParseError("wav: only PCM is supported", body);
      if (channels != 1) throw ParseError("wav: expected mono, got " + std::to_string(channels) + " channels", body + 2);
      if (w.sample_rate == 0) throw ParseError("wav: zero sample rate", body + 4);
      if (bits != 16) throw ParseError("wav: expected 16-bit samples, got " + std::to_string(bits), body + 14);
      r.skip(size - 16 + (size & 1), "fmt chunk");
      have_fmt = true;
    } else if (id == "data") {
      if (!have_fmt) throw ParseError("wav: data chunk before fmt chunk", at);
      if (size % 2 != 0) throw ParseError("wav: odd data size for 16-bit samples", at + 4);
      r.need(size, "sample data");
      w.samples.resize(size / 2);
      std::memcpy(w.samples.data(), r.here(), size);
      r.skip(size, "sample data");
      return w;
    } else {
      r.skip(size + (size & 1), "chunk");
    }
  }
}

void write_wav(const std::filesystem::path& path, const Waveform& w) { write_file_bytes(path, encode_wav(w)); }

Waveform read_wav(const std::filesystem::path& path) { return decode_wav(read_file_bytes(path)); }

}  // namespace omni
