#pragma once

// Speech adaptor, frozen speech encoder stand-ins, and LLaMA-style transformer
// blocks (pre-RMSNorm, rotary positions, SwiGLU, bias-free attention).

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "omni/feature_matrix.hpp"
#include "omni/tensor.hpp"

namespace omni {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

std::vector<Tensor> tensors_of(const ParamList& params);
void set_trainable(const ParamList& params, bool on);
// Order-sensitive fingerprint over names, shapes and raw values.
std::string fingerprint(const ParamList& params);

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad = true);

// Encoder output H for one utterance.
struct SpeechFeatures {
  FeatureMatrix frames;
  std::string source_id;
};

// The frozen speech encoder E. Implementations never train.
class SpeechEncoder {
 public:
  virtual ~SpeechEncoder() = default;
  virtual SpeechFeatures encode(const FeatureMatrix& input, std::string source_id) const = 0;
  virtual std::size_t output_dim() const = 0;
};

// Features that already are encoder output (e.g. FMAT files dumped offline).
class PrecomputedEncoder final : public SpeechEncoder {
 public:
  explicit PrecomputedEncoder(std::size_t dim) : dim_(dim) {}
  SpeechFeatures encode(const FeatureMatrix& input, std::string source_id) const override;
  std::size_t output_dim() const override { return dim_; }

 private:
  std::size_t dim_;
};

// Fixed random projection followed by tanh.
class ToyEncoder final : public SpeechEncoder {
 public:
  ToyEncoder(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed);
  ToyEncoder(Tensor weight);
  SpeechFeatures encode(const FeatureMatrix& input, std::string source_id) const override;
  std::size_t input_dim() const { return weight_.rows(); }
  std::size_t output_dim() const override { return weight_.cols(); }
  ParamList params() const { return {{"encoder.weight", weight_}}; }

 private:
  Tensor weight_;
};

SpeechFeatures load_features(const std::string& fmat_path);

// --- adaptor --------------------------------------------------------------------------

struct AdaptorConfig {
  std::size_t downsample_k = 5;
  std::size_t input_dim = 32;
  std::size_t hidden_dim = 64;
  std::size_t out_dim = 64;
};

struct AdaptorParams {
  Tensor w1, b1, w2, b2;

  static AdaptorParams init(const AdaptorConfig& cfg, std::uint64_t seed);
  ParamList named(const std::string& prefix = "adaptor.") const;
};

// Concatenates every k consecutive frames; the N mod k trailing frames are dropped.
FeatureMatrix downsample(const FeatureMatrix& frames, std::size_t k);

// S = Linear(ReLU(Linear(DownSample(H)))).
Tensor adapt(const SpeechFeatures& features, const AdaptorConfig& cfg, const AdaptorParams& params);

// --- transformer ----------------------------------------------------------------------

struct TransformerConfig {
  std::size_t layers = 2;
  std::size_t model_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 176;
  std::size_t max_seq_len = 512;
  bool causal = true;
  double rope_theta = 10000.0;
  double norm_eps = 1e-6;

  void validate() const;
};

struct TransformerLayerParams {
  Tensor attn_norm;
  Tensor wq, wk, wv, wo;
  Tensor ffn_norm;
  Tensor w_gate, w_up, w_down;
};

struct TransformerParams {
  std::vector<TransformerLayerParams> layers;

  static TransformerParams init(const TransformerConfig& cfg, std::uint64_t seed);
  ParamList named(const std::string& prefix) const;
};

// Key/value memory for incremental causal decoding, one entry per layer.
class KvCache {
 public:
  KvCache() = default;
  explicit KvCache(std::size_t layers) : keys_(layers), values_(layers) {}
  std::size_t length() const noexcept { return length_; }
  std::size_t layers() const noexcept { return keys_.size(); }
  void clear();

 private:
  friend Tensor transformer_extend(KvCache&, const Tensor&, const TransformerConfig&,
                                   const TransformerParams&);
  std::vector<Tensor> keys_, values_;
  std::size_t length_ = 0;
};

// One block; `position_offset` is the absolute position of x's first row.
Tensor transformer_layer_forward(const Tensor& x, const TransformerLayerParams& layer,
                                 const TransformerConfig& cfg, std::size_t position_offset = 0);

// All layers over a full sequence (no final norm; heads own that).
Tensor transformer_forward(const Tensor& x, const TransformerConfig& cfg, const TransformerParams& params);

// Appends x_new after the cached prefix and returns the new rows' outputs.
// Causal configs only; the result never depends on later rows.
Tensor transformer_extend(KvCache& cache, const Tensor& x_new, const TransformerConfig& cfg,
                          const TransformerParams& params);

}  // namespace omni
