#pragma once

// Non-autoregressive streaming speech decoder: hidden states are upsampled by
// lambda, run through causal transformer layers and projected by a CTC head.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "omni/ctc.hpp"
#include "omni/feature_matrix.hpp"
#include "omni/nn.hpp"
#include "omni/tensor.hpp"
#include "omni/units.hpp"

namespace omni {

struct DecoderConfig {
  std::size_t upsample_lambda = 4;
  TransformerConfig transformer;
  std::size_t unit_vocab = 32;

  void validate() const;
};

// logits = o W^T + b with W of shape (K+1) x d.
struct CtcHead {
  Tensor weight;
  Tensor bias;
};

struct DecoderParams {
  TransformerParams transformer;
  Tensor output_norm;
  CtcHead head;

  static DecoderParams init(const DecoderConfig& cfg, std::uint64_t seed);
  ParamList named(const std::string& prefix = "decoder.") const;
};

// Row i (0-based) of the result is row i / lambda of `hidden`.
Tensor upsample(const Tensor& hidden, std::size_t lambda);

Tensor apply_ctc_head(const Tensor& states, const CtcHead& head);

// (lambda * M) x (K + 1) logits for M hidden states.
Tensor decode_full(const Tensor& hidden, const DecoderConfig& cfg, const DecoderParams& params);

// Incremental decoding state for one stream.
class DecoderState {
 public:
  DecoderState(const DecoderConfig& cfg, const DecoderParams& params);

  std::size_t tokens() const noexcept { return tokens_; }
  // All logit rows produced so far, in order.
  const FeatureMatrix& logits() const noexcept { return logits_; }
  void reset();

 private:
  friend FeatureMatrix decode_extend(DecoderState&, std::span<const double>, const DecoderParams&);
  DecoderConfig cfg_;
  const DecoderParams* params_;
  KvCache cache_;
  FeatureMatrix logits_;
  std::size_t tokens_ = 0;
};

// Feeds one hidden state and returns its lambda new logit rows. Earlier rows
// are never revisited. Throws StateError if `params` is not the set the state
// was created for.
FeatureMatrix decode_extend(DecoderState& state, std::span<const double> hidden_row, const DecoderParams& params);

// collapse(best_path(rows)).
UnitSequence units_for_prefix(const FeatureMatrix& logits);

// Speech-decoder backend seen by the streaming pipeline.
class UnitDecoder {
 public:
  virtual ~UnitDecoder() = default;
  virtual std::size_t lambda() const = 0;
  virtual std::size_t unit_vocab() const = 0;
  virtual std::size_t input_dim() const = 0;
  virtual void reset() = 0;
  virtual FeatureMatrix extend(std::span<const double> hidden_row) = 0;
};

class CtcSpeechDecoder final : public UnitDecoder {
 public:
  CtcSpeechDecoder(DecoderConfig cfg, DecoderParams params);
  CtcSpeechDecoder(const CtcSpeechDecoder&) = delete;
  CtcSpeechDecoder& operator=(const CtcSpeechDecoder&) = delete;

  std::size_t lambda() const override { return cfg_.upsample_lambda; }
  std::size_t unit_vocab() const override { return cfg_.unit_vocab; }
  std::size_t input_dim() const override { return cfg_.transformer.model_dim; }
  void reset() override { state_.reset(); }
  FeatureMatrix extend(std::span<const double> hidden_row) override;

  const DecoderConfig& config() const { return cfg_; }
  const DecoderParams& params() const { return params_; }

 private:
  DecoderConfig cfg_;
  DecoderParams params_;
  DecoderState state_;
};

// Replays fixed alignment blocks, one per generated token, as one-hot logits.
// Hidden rows are ignored. Used to drive the pipeline through hand-traced cases.
class ScriptedAlignmentDecoder final : public UnitDecoder {
 public:
  // Every block must have exactly `lambda` entries, each <= vocab (vocab = blank).
  ScriptedAlignmentDecoder(std::vector<std::vector<std::size_t>> blocks, std::size_t lambda, std::size_t vocab,
                           std::size_t input_dim);

  std::size_t lambda() const override { return lambda_; }
  std::size_t unit_vocab() const override { return vocab_; }
  std::size_t input_dim() const override { return input_dim_; }
  void reset() override { next_ = 0; }
  FeatureMatrix extend(std::span<const double> hidden_row) override;

 private:
  std::vector<std::vector<std::size_t>> blocks_;
  std::size_t lambda_;
  std::size_t vocab_;
  std::size_t input_dim_;
  std::size_t next_ = 0;
};

}  // namespace omni
