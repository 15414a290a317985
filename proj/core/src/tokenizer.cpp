#include "omni/tokenizer.hpp"

#include <cctype>
#include <cstdio>

#include "omni/error.hpp"

namespace omni {

Tokenizer::Tokenizer(std::vector<std::string> words) {
  for (auto& w : words) {
    if (w.empty() || w.find(' ') != std::string::npos) {
      throw ConfigError("tokenizer: word '" + w + "' is empty or contains a space");
    }
    if (index_.count(w)) continue;
    index_.emplace(w, kFirstWord + words_.size());
    words_.push_back(std::move(w));
  }
}

std::size_t Tokenizer::word_id(std::string_view word) const {
  auto it = index_.find(std::string(word));
  return it == index_.end() ? size() : it->second;
}

std::vector<std::size_t> Tokenizer::tokenize(std::string_view text) const {
  std::vector<std::size_t> ids;
  std::size_t start = 0;
  bool first = true;
  while (start <= text.size()) {
    std::size_t end = text.find(' ', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view piece = text.substr(start, end - start);
    const std::size_t id = piece.empty() ? size() : word_id(piece);
    if (id < size()) {
      ids.push_back(id);
    } else {
      if (!first) ids.push_back(kFirstByte + static_cast<unsigned char>(' '));
      for (unsigned char c : piece) ids.push_back(kFirstByte + c);
    }
    first = false;
    if (end == text.size()) break;
    start = end + 1;
  }
  if (text.empty()) ids.clear();
  return ids;
}

std::string Tokenizer::detokenize(std::span<const std::size_t> ids) const {
  std::string out;
  for (std::size_t id : ids) {
    if (id >= size()) throw IndexError("detokenize: id " + std::to_string(id) + " outside vocabulary");
    if (is_word(id)) {
      if (!out.empty()) out.push_back(' ');
      out += words_[id - kFirstWord];
    } else if (is_byte(id)) {
      out.push_back(static_cast<char>(id - kFirstByte));
    } else if (id >= kFirstMarker) {
      out += kMarkers[id - kFirstMarker];
    }
  }
  return out;
}

std::vector<std::size_t> Tokenizer::tokenize_template(std::string_view text) const {
  std::vector<std::size_t> ids;
  std::size_t i = 0;
  std::string word;
  auto flush = [&] {
    if (word.empty()) return;
    const std::size_t id = word_id(word);
    if (id < size()) {
      ids.push_back(id);
    } else {
      for (unsigned char c : word) ids.push_back(kFirstByte + c);
    }
    word.clear();
  };
  while (i < text.size()) {
    bool matched = false;
    for (std::size_t m = 0; m < std::size(kMarkers); ++m) {
      if (text.substr(i, kMarkers[m].size()) == kMarkers[m]) {
        flush();
        ids.push_back(kFirstMarker + m);
        i += kMarkers[m].size();
        matched = true;
        break;
      }
    }
    if (matched) continue;
    if (std::isspace(static_cast<unsigned char>(text[i]))) {
      flush();
    } else {
      word.push_back(text[i]);
    }
    ++i;
  }
  flush();
  return ids;
}

std::string Tokenizer::token_string(std::size_t id) const {
  if (id == kPad) return "<pad>";
  if (id == kBos) return "<bos>";
  if (id == kEos) return "<eos>";
  if (id < kFirstByte) return std::string(kMarkers[id - kFirstMarker]);
  if (id < kFirstWord) {
    char buf[8];
    std::snprintf(buf, sizeof buf, "<0x%02X>", static_cast<unsigned>(id - kFirstByte));
    return buf;
  }
  if (id < size()) return words_[id - kFirstWord];
  throw IndexError("token_string: id " + std::to_string(id) + " outside vocabulary");
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

}  // namespace omni
