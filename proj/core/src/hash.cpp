#include "omni/hash.hpp"

#include <cstdio>

namespace omni {

void Fnv1a::update(std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) {
    state_ ^= b;
    state_ *= 0x100000001b3ull;
  }
}

void Fnv1a::update(std::string_view text) {
  update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void Fnv1a::update(std::span<const double> values) {
  update(std::span<const std::uint8_t>(reinterpret_cast<const std::uint8_t*>(values.data()),
                                       values.size_bytes()));
}

std::string Fnv1a::hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(state_));
  return buf;
}

std::string fnv1a_hex(std::string_view text) {
  Fnv1a h;
  h.update(text);
  return h.hex();
}

}  // namespace omni
