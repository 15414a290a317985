#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace omni {

// Word-level tokenizer with byte fallback.
//
// Text is split on single spaces. Known words map to one id each; any other
// word is spelled as byte tokens, prefixed by a space byte when it is not the
// first word. detokenize(tokenize(s)) == s for every string of non-empty words
// joined by single spaces.
class Tokenizer {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  // Chat-template markers follow, then 256 byte tokens, then words.
  static constexpr std::string_view kMarkers[] = {"<|begin_of_text|>", "<|start_header_id|>",
                                                  "<|end_header_id|>", "<|eot_id|>"};
  static constexpr std::size_t kFirstMarker = 3;
  static constexpr std::size_t kFirstByte = kFirstMarker + std::size(kMarkers);
  static constexpr std::size_t kFirstWord = kFirstByte + 256;

  Tokenizer() = default;
  explicit Tokenizer(std::vector<std::string> words);

  std::size_t size() const noexcept { return kFirstWord + words_.size(); }
  std::size_t eos_id() const noexcept { return kEos; }
  const std::vector<std::string>& words() const noexcept { return words_; }

  std::vector<std::size_t> tokenize(std::string_view text) const;
  // Special tokens other than template markers render as nothing.
  std::string detokenize(std::span<const std::size_t> ids) const;
  // Splits template text on any whitespace and on chat markers.
  std::vector<std::size_t> tokenize_template(std::string_view text) const;

  bool is_word(std::size_t id) const noexcept { return id >= kFirstWord && id < size(); }
  bool is_byte(std::size_t id) const noexcept { return id >= kFirstByte && id < kFirstWord; }
  std::string token_string(std::size_t id) const;
  // Id of a known word, or size() when unknown.
  std::size_t word_id(std::string_view word) const;

 private:
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Whitespace-separated words of `text`, ignoring empty pieces.
std::vector<std::string> split_words(std::string_view text);

}  // namespace omni
