#pragma once

// Text-response generation behind a uniform token-source interface: a small
// LLaMA-style language model prompted with adapted speech, and scripted
// replays for deterministic pipeline runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/feature_matrix.hpp"
#include "omni/nn.hpp"
#include "omni/tensor.hpp"
#include "omni/tokenizer.hpp"

namespace omni {

struct TextResponse {
  std::vector<std::size_t> tokens;
  std::string text;
  bool eos_seen = false;
};

// Chat template with a <speech> slot for adapted speech rows.
struct PromptTemplate {
  std::string before_speech;
  std::string after_speech;

  static PromptTemplate standard();
  static constexpr std::string_view kSpeechSlot = "<speech>";
  std::string render() const;
};

struct LmConfig {
  TransformerConfig transformer;
  std::size_t vocab_size = 0;
  std::size_t max_new_tokens = 48;
};

struct LmParams {
  Tensor embedding;  // V x d
  TransformerParams transformer;
  Tensor output_norm;
  Tensor head;  // d x V

  static LmParams init(const LmConfig& cfg, std::uint64_t seed);
  ParamList named(const std::string& prefix = "lm.") const;
};

// Template embeddings with the speech rows spliced in at the slot.
struct PromptInput {
  Tensor embeddings;
  std::size_t speech_begin = 0;
  std::size_t speech_len = 0;
};

PromptInput assemble_prompt(const Tensor& speech, const Tokenizer& tokenizer, const LmParams& params,
                            const PromptTemplate& tmpl = PromptTemplate::standard());

// Gold-prefix forward pass. Row i of `hidden` is the final-layer state c_i
// (after the output norm) at the position that predicts response token i;
// `logits` row i is the distribution over that token.
struct TeacherForced {
  Tensor logits;
  Tensor hidden;
};
TeacherForced lm_teacher_forced(const PromptInput& prompt, std::span<const std::size_t> response,
                                const LmConfig& cfg, const LmParams& params);

struct GeneratedToken {
  std::size_t id = 0;
  std::vector<double> hidden;
  std::optional<double> delay_ms;
};

class TokenSource {
 public:
  virtual ~TokenSource() = default;
  // Throws StreamExhaustedError once EOS has been produced.
  virtual GeneratedToken generate_next() = 0;
  virtual bool exhausted() const = 0;
};

class ResponseGenerator {
 public:
  virtual ~ResponseGenerator() = default;
  // `instruction` is the raw encoder input for one utterance.
  virtual std::unique_ptr<TokenSource> start(const FeatureMatrix& instruction, const std::string& source_id) = 0;
  virtual std::size_t hidden_dim() const = 0;
  virtual const Tokenizer& tokenizer() const = 0;
};

// Greedy decoding with a key/value cache over the prompt and generated prefix.
class LmTokenSource final : public TokenSource {
 public:
  LmTokenSource(const PromptInput& prompt, const LmConfig& cfg, const LmParams& params);
  GeneratedToken generate_next() override;
  bool exhausted() const override { return done_; }

 private:
  const LmConfig& cfg_;
  const LmParams& params_;
  KvCache cache_;
  Tensor pending_;  // next input rows for the cache
  std::size_t emitted_ = 0;
  bool done_ = false;
};

// Encoder -> adaptor -> prompt -> LM, computed once per utterance.
class ToyLmGenerator final : public ResponseGenerator {
 public:
  ToyLmGenerator(const SpeechEncoder& encoder, const AdaptorConfig& adaptor_cfg, const AdaptorParams& adaptor,
                 const LmConfig& lm_cfg, const LmParams& lm, const Tokenizer& tokenizer);
  std::unique_ptr<TokenSource> start(const FeatureMatrix& instruction, const std::string& source_id) override;
  std::size_t hidden_dim() const override { return lm_cfg_.transformer.model_dim; }
  const Tokenizer& tokenizer() const override { return tokenizer_; }

 private:
  const SpeechEncoder& encoder_;
  const AdaptorConfig& adaptor_cfg_;
  const AdaptorParams& adaptor_;
  const LmConfig& lm_cfg_;
  const LmParams& lm_;
  const Tokenizer& tokenizer_;
};

// A recorded response: tokens (last one EOS), one hidden row per token and
// optional per-token delays. `alignments` optionally fixes the decoder output,
// one block per token, with -1 for blank.
struct Script {
  std::vector<std::size_t> tokens;
  FeatureMatrix hidden;
  std::vector<double> delays_ms;
  std::vector<std::vector<int>> alignments;
  std::size_t unit_vocab = 0;  // 0: infer from the largest unit in alignments

  std::size_t resolved_unit_vocab() const;
  // Blocks with blank mapped to resolved_unit_vocab().
  std::vector<std::vector<std::size_t>> alignment_blocks() const;
};

class ScriptedSource final : public TokenSource {
 public:
  ScriptedSource(std::vector<std::size_t> tokens, FeatureMatrix hidden, std::vector<double> delays_ms = {},
                 std::size_t eos_id = Tokenizer::kEos);
  explicit ScriptedSource(const Script& script, std::size_t eos_id = Tokenizer::kEos)
      : ScriptedSource(script.tokens, script.hidden, script.delays_ms, eos_id) {}
  GeneratedToken generate_next() override;
  bool exhausted() const override { return next_ >= tokens_.size(); }

 private:
  std::vector<std::size_t> tokens_;
  FeatureMatrix hidden_;
  std::vector<double> delays_;
  std::size_t next_ = 0;
};

class ScriptedGenerator final : public ResponseGenerator {
 public:
  ScriptedGenerator(Script script, const Tokenizer& tokenizer);
  std::unique_ptr<TokenSource> start(const FeatureMatrix& instruction, const std::string& source_id) override;
  std::size_t hidden_dim() const override { return script_.hidden.cols(); }
  const Tokenizer& tokenizer() const override { return tokenizer_; }
  const Script& script() const { return script_; }

 private:
  Script script_;
  const Tokenizer& tokenizer_;
};

// Distinct words of the standard template, for building tokenizers in which
// the template is word-level rather than spelled out in bytes.
std::vector<std::string> template_words(const PromptTemplate& tmpl = PromptTemplate::standard());

// Deterministic pseudo-embedding rows for token ids (seeded per id).
FeatureMatrix hashed_token_rows(std::span<const std::size_t> ids, std::size_t dim, std::uint64_t seed);

// JSONL, one script per line:
//   {"tokens": [...], "delays_ms": [...], "hidden": [[...]], "alignments": [[...]], "unit_vocab": K}
// tokens are ids or words; a missing trailing EOS is appended. Absent hidden
// rows come from hashed_token_rows. delays_ms may hold one value per token or
// a single value applied to all.
std::vector<Script> load_scripts_jsonl(const std::filesystem::path& path, const Tokenizer& tokenizer,
                                       std::size_t hidden_dim, std::uint64_t seed);

}  // namespace omni
