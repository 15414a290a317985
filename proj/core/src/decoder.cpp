#include "omni/decoder.hpp"

#include <cmath>
#include <random>

#include "omni/error.hpp"

namespace omni {

void DecoderConfig::validate() const {
  if (upsample_lambda == 0) throw ConfigError("decoder: upsample_lambda must be >= 1");
  if (unit_vocab == 0) throw ConfigError("decoder: unit_vocab must be >= 1");
  if (!transformer.causal) throw ConfigError("decoder: transformer must be causal for streaming");
  transformer.validate();
}

DecoderParams DecoderParams::init(const DecoderConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  DecoderParams p;
  p.transformer = TransformerParams::init(cfg.transformer, seed);
  const std::size_t d = cfg.transformer.model_dim;
  p.output_norm = Tensor::full({d}, 1.0, true);
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  p.head.weight = random_normal({cfg.unit_vocab + 1, d}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  p.head.bias = Tensor::zeros({cfg.unit_vocab + 1}, true);
  return p;
}

ParamList DecoderParams::named(const std::string& prefix) const {
  ParamList out = transformer.named(prefix);
  out.push_back({prefix + "output_norm", output_norm});
  out.push_back({prefix + "head.weight", head.weight});
  out.push_back({prefix + "head.bias", head.bias});
  return out;
}

Tensor upsample(const Tensor& hidden, std::size_t lambda) {
  if (lambda == 0) throw ConfigError("upsample: lambda must be >= 1");
  return repeat_rows(hidden, lambda);
}

Tensor apply_ctc_head(const Tensor& states, const CtcHead& head) {
  return add_bias(matmul(states, transpose(head.weight)), head.bias);
}

Tensor decode_full(const Tensor& hidden, const DecoderConfig& cfg, const DecoderParams& params) {
  const std::size_t width = cfg.unit_vocab + 1;
  if (hidden.dim() == 2 && hidden.rows() == 0) return Tensor::zeros({0, width});
  const Tensor up = upsample(hidden, cfg.upsample_lambda);
  const Tensor states = transformer_forward(up, cfg.transformer, params.transformer);
  return apply_ctc_head(rms_norm(states, params.output_norm, cfg.transformer.norm_eps), params.head);
}

DecoderState::DecoderState(const DecoderConfig& cfg, const DecoderParams& params)
    : cfg_(cfg), params_(&params), cache_(params.transformer.layers.size()) {
  cfg_.validate();
}

void DecoderState::reset() {
  cache_.clear();
  logits_ = FeatureMatrix();
  tokens_ = 0;
}

FeatureMatrix decode_extend(DecoderState& state, std::span<const double> hidden_row, const DecoderParams& params) {
  if (&params != state.params_) throw StateError("decode_extend: state belongs to a different parameter set");
  const auto& cfg = state.cfg_;
  if (hidden_row.size() != cfg.transformer.model_dim) {
    throw DimensionError("decode_extend: hidden row is " + std::to_string(hidden_row.size()) +
                         " wide, decoder expects " + std::to_string(cfg.transformer.model_dim));
  }
  const Tensor row = Tensor::matrix(1, hidden_row.size(), std::vector<double>(hidden_row.begin(), hidden_row.end()));
  const Tensor out = transformer_extend(state.cache_, upsample(row, cfg.upsample_lambda), cfg.transformer,
                                        params.transformer);
  FeatureMatrix block =
      to_matrix(apply_ctc_head(rms_norm(out, params.output_norm, cfg.transformer.norm_eps), params.head));
  state.logits_.append_rows(block);
  ++state.tokens_;
  return block;
}

UnitSequence units_for_prefix(const FeatureMatrix& logits) { return collapse(best_path(logits)); }

CtcSpeechDecoder::CtcSpeechDecoder(DecoderConfig cfg, DecoderParams params)
    : cfg_(std::move(cfg)), params_(std::move(params)), state_(cfg_, params_) {}

FeatureMatrix CtcSpeechDecoder::extend(std::span<const double> hidden_row) {
  return decode_extend(state_, hidden_row, params_);
}

ScriptedAlignmentDecoder::ScriptedAlignmentDecoder(std::vector<std::vector<std::size_t>> blocks, std::size_t lambda,
                                                   std::size_t vocab, std::size_t input_dim)
    : blocks_(std::move(blocks)), lambda_(lambda), vocab_(vocab), input_dim_(input_dim) {
  if (lambda_ == 0) throw ConfigError("scripted decoder: lambda must be >= 1");
  for (const auto& b : blocks_) {
    if (b.size() != lambda_) {
      throw ConfigError("scripted decoder: block of " + std::to_string(b.size()) + " tokens, lambda is " +
                        std::to_string(lambda_));
    }
    for (std::size_t t : b)
      if (t > vocab_) throw ConfigError("scripted decoder: token " + std::to_string(t) + " outside vocabulary");
  }
}

FeatureMatrix ScriptedAlignmentDecoder::extend(std::span<const double> hidden_row) {
  if (hidden_row.size() != input_dim_) throw DimensionError("scripted decoder: hidden row width mismatch");
  if (next_ >= blocks_.size()) throw StreamExhaustedError("scripted decoder: no alignment block left");
  FeatureMatrix out(lambda_, vocab_ + 1);
  const auto& block = blocks_[next_++];
  for (std::size_t i = 0; i < lambda_; ++i) out.at(i, block[i]) = 1.0;
  return out;
}

}  // namespace omni
