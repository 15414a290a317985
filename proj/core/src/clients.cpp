#include "omni/clients.hpp"

#include <algorithm>
#include <cstdlib>
#include <random>

#include <httplib.h>
#include <json.hpp>

#include "omni/error.hpp"
#include "omni/hash.hpp"
#include "omni/tokenizer.hpp"

namespace omni {

StubLlmClient::StubLlmClient(std::string canned_response) : canned_(std::move(canned_response)) {}

std::string StubLlmClient::complete(const std::string& prompt) {
  const std::string marker = "[instruction]: ";
  const auto at = prompt.find(marker);
  if (at == std::string::npos) throw ValidationError("stub llm: prompt has no instruction field", prompt);
  const auto begin = at + marker.size();
  const auto end = prompt.find("\n\n", begin);
  const std::string instruction = prompt.substr(begin, end == std::string::npos ? std::string::npos : end - begin);
  nlohmann::json out;
  if (prompt.find("{\"question\"") != std::string::npos) {
    out["question"] = instruction;
  } else {
    out["response"] = canned_;
  }
  return out.dump();
}

StubTtsClient::StubTtsClient(std::size_t dim, std::size_t frames_per_word, std::uint64_t seed)
    : dim_(dim), frames_per_word_(frames_per_word), seed_(seed) {
  if (dim == 0 || frames_per_word == 0) throw ConfigError("stub tts: dim and frames_per_word must be positive");
}

FeatureMatrix StubTtsClient::synthesize(const std::string& text, const std::string& voice) {
  FeatureMatrix out(0, dim_);
  std::vector<double> proto(dim_), frame(dim_);
  Fnv1a key;
  key.update(voice + "|" + text);
  std::mt19937_64 noise(key.digest() ^ seed_);
  std::normal_distribution<double> jitter(0.0, 0.05);
  for (const auto& word : split_words(text)) {
    Fnv1a h;
    h.update(word);
    std::mt19937_64 rng(h.digest() ^ seed_);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : proto) v = dist(rng);
    for (std::size_t f = 0; f < frames_per_word_; ++f) {
      for (std::size_t d = 0; d < dim_; ++d) frame[d] = proto[d] + jitter(noise);
      out.append_row(frame);
    }
  }
  return out;
}

FailingLlmClient::FailingLlmClient(LlmClient& inner, std::vector<std::size_t> failing_calls, bool invalid_json)
    : inner_(inner), failing_(std::move(failing_calls)), invalid_json_(invalid_json) {}

std::string FailingLlmClient::complete(const std::string& prompt) {
  const std::size_t call = calls_.fetch_add(1);
  if (std::find(failing_.begin(), failing_.end(), call) != failing_.end()) {
    if (invalid_json_) return "I am sorry, I cannot produce JSON for this.";
    throw IoError("injected failure on call " + std::to_string(call));
  }
  return inner_.complete(prompt);
}

HttpLlmClient::HttpLlmClient(std::string host, int port, std::string model, std::string api_key_env,
                             std::string path, int timeout_s)
    : host_(std::move(host)), port_(port), model_(std::move(model)), key_env_(std::move(api_key_env)),
      path_(std::move(path)), timeout_s_(timeout_s) {}

std::string HttpLlmClient::complete(const std::string& prompt) {
  const nlohmann::json req = {{"model", model_},
                              {"messages", {{{"role", "user"}, {"content", prompt}}}},
                              {"temperature", 0}};
  httplib::Client cli(host_, port_);
  cli.set_read_timeout(timeout_s_, 0);
  httplib::Headers headers;
  if (const char* key = std::getenv(key_env_.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }
  auto res = cli.Post(path_, headers, req.dump(), "application/json");
  if (!res) throw IoError("llm: request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("llm: server answered HTTP " + std::to_string(res->status));
  try {
    const auto j = nlohmann::json::parse(res->body);
    return j.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("llm: unexpected response shape: ") + e.what(), res->body);
  }
}

HttpTtsClient::HttpTtsClient(std::string host, int port, std::size_t dim, std::string path, int timeout_s)
    : host_(std::move(host)), port_(port), dim_(dim), path_(std::move(path)), timeout_s_(timeout_s) {}

FeatureMatrix HttpTtsClient::synthesize(const std::string& text, const std::string& voice) {
  const nlohmann::json req = {{"text", text}, {"voice", voice}};
  httplib::Client cli(host_, port_);
  cli.set_read_timeout(timeout_s_, 0);
  auto res = cli.Post(path_, req.dump(), "application/json");
  if (!res) throw IoError("tts: request failed: " + httplib::to_string(res.error()));
  if (res->status != 200) throw IoError("tts: server answered HTTP " + std::to_string(res->status));
  const auto* p = reinterpret_cast<const std::uint8_t*>(res->body.data());
  FeatureMatrix m = decode_fmat(std::span<const std::uint8_t>(p, res->body.size()));
  if (m.cols() != dim_) {
    throw DimensionError("tts: features are " + std::to_string(m.cols()) + " wide, expected " + std::to_string(dim_));
  }
  return m;
}

}  // namespace omni
