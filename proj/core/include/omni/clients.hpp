#pragma once

// External services used to build instruction data: a text LLM for rewriting
// and answering, and a TTS system producing speech features.

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>

#include "omni/feature_matrix.hpp"

namespace omni {

class LlmClient {
 public:
  virtual ~LlmClient() = default;
  virtual std::string complete(const std::string& prompt) = 0;
  virtual std::string model_name() const = 0;
};

class TtsClient {
 public:
  virtual ~TtsClient() = default;
  // Speech features (frames x dim) for `text` spoken by `voice`.
  virtual FeatureMatrix synthesize(const std::string& text, const std::string& voice) = 0;
  virtual std::size_t feature_dim() const = 0;
};

// Answers rewrite prompts with the instruction unchanged and response prompts
// with a fixed reply, both wrapped in the requested JSON.
class StubLlmClient final : public LlmClient {
 public:
  explicit StubLlmClient(std::string canned_response = "sure here is a short answer");
  std::string complete(const std::string& prompt) override;
  std::string model_name() const override { return "stub-llm"; }

 private:
  std::string canned_;
};

// Per-word deterministic frames: each word gets a seeded prototype vector and
// `frames_per_word` noisy copies of it.
class StubTtsClient final : public TtsClient {
 public:
  StubTtsClient(std::size_t dim = 16, std::size_t frames_per_word = 5, std::uint64_t seed = 7);
  FeatureMatrix synthesize(const std::string& text, const std::string& voice) override;
  std::size_t feature_dim() const override { return dim_; }

 private:
  std::size_t dim_;
  std::size_t frames_per_word_;
  std::uint64_t seed_;
};

// Fails the calls whose 0-based index is listed, delegating the rest.
class FailingLlmClient final : public LlmClient {
 public:
  FailingLlmClient(LlmClient& inner, std::vector<std::size_t> failing_calls, bool invalid_json = false);
  std::string complete(const std::string& prompt) override;
  std::string model_name() const override { return inner_.model_name(); }
  std::size_t calls() const { return calls_.load(); }

 private:
  LlmClient& inner_;
  std::vector<std::size_t> failing_;
  bool invalid_json_;
  std::atomic<std::size_t> calls_{0};
};

// OpenAI-style chat completions over plain HTTP. The API key is read from
// the named environment variable at call time; an unset variable sends no
// Authorization header.
class HttpLlmClient final : public LlmClient {
 public:
  HttpLlmClient(std::string host, int port, std::string model, std::string api_key_env = "OMNI_LLM_API_KEY",
                std::string path = "/v1/chat/completions", int timeout_s = 120);
  std::string complete(const std::string& prompt) override;
  std::string model_name() const override { return model_; }

 private:
  std::string host_;
  int port_;
  std::string model_;
  std::string key_env_;
  std::string path_;
  int timeout_s_;
};

// POSTs {"text", "voice"} and expects FMAT bytes back.
class HttpTtsClient final : public TtsClient {
 public:
  HttpTtsClient(std::string host, int port, std::size_t dim, std::string path = "/tts", int timeout_s = 120);
  FeatureMatrix synthesize(const std::string& text, const std::string& voice) override;
  std::size_t feature_dim() const override { return dim_; }

 private:
  std::string host_;
  int port_;
  std::size_t dim_;
  std::string path_;
  int timeout_s_;
};

}  // namespace omni
