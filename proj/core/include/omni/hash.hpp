#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>

namespace omni {

// 64-bit FNV-1a. Used for content-addressed record ids and frozen-parameter
// fingerprints; not a cryptographic hash.
class Fnv1a {
 public:
  void update(std::span<const std::uint8_t> bytes);
  void update(std::string_view text);
  void update(std::span<const double> values);
  std::uint64_t digest() const noexcept { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ull;
};

std::string fnv1a_hex(std::string_view text);

}  // namespace omni
