#pragma once

// The full toy system in one bundle: frozen encoder, adaptor, language model,
// speech decoder and tokenizer, with a directory checkpoint format.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "omni/decoder.hpp"
#include "omni/llm.hpp"
#include "omni/nn.hpp"
#include "omni/tokenizer.hpp"

namespace omni {

struct OmniConfig {
  std::size_t raw_dim = 16;      // encoder input width
  std::size_t encoder_dim = 32;  // encoder output width
  AdaptorConfig adaptor{5, 32, 64, 64};
  LmConfig lm;
  DecoderConfig decoder;
  std::uint64_t seed = 1;

  // Small defaults: d=64, 4 heads, FFN 176, 2 layers everywhere; lambda=4.
  static OmniConfig toy(std::size_t unit_vocab = 16);
  void validate() const;
};

class OmniModel {
 public:
  // vocab_size in cfg.lm is overwritten with the tokenizer size.
  OmniModel(OmniConfig cfg, Tokenizer tokenizer);
  OmniModel(const OmniModel&) = delete;
  OmniModel& operator=(const OmniModel&) = delete;

  const OmniConfig& config() const { return cfg_; }
  const Tokenizer& tokenizer() const { return tokenizer_; }
  const ToyEncoder& encoder() const { return encoder_; }
  AdaptorParams& adaptor() { return adaptor_; }
  const AdaptorParams& adaptor() const { return adaptor_; }
  LmParams& lm() { return lm_; }
  const LmParams& lm() const { return lm_; }
  DecoderParams& decoder() { return decoder_; }
  const DecoderParams& decoder() const { return decoder_; }

  ParamList encoder_params() const { return encoder_.params(); }
  ParamList adaptor_params() const { return adaptor_.named(); }
  ParamList lm_params() const { return lm_.named(); }
  ParamList decoder_params() const { return decoder_.named(); }
  ParamList all_params() const;

  // Prompt for one utterance of raw frames.
  PromptInput prompt_for(const FeatureMatrix& raw, bool track_grad = false) const;

  // Views tied to this object's lifetime.
  std::unique_ptr<ResponseGenerator> generator() const;
  std::unique_ptr<CtcSpeechDecoder> speech_decoder() const;

  void save(const std::filesystem::path& dir) const;
  static std::unique_ptr<OmniModel> load(const std::filesystem::path& dir);

 private:
  OmniConfig cfg_;
  Tokenizer tokenizer_;
  ToyEncoder encoder_;
  AdaptorParams adaptor_;
  LmParams lm_;
  DecoderParams decoder_;
};

// Tokenizer whose words are the chat template words followed by `extra`.
Tokenizer make_toy_tokenizer(const std::vector<std::string>& extra);

// Exact float64 parameter snapshot: <dir>/params.bin plus an index in <dir>/params.json.
void save_params(const std::filesystem::path& dir, const ParamList& params);
// Loads into tensors of matching names and shapes; missing or mis-shaped
// entries raise ParseError.
void load_params(const std::filesystem::path& dir, const ParamList& params);

}  // namespace omni
