#include "omni/nn.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "omni/error.hpp"
#include "omni/hash.hpp"

namespace omni {

std::vector<Tensor> tensors_of(const ParamList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

void set_trainable(const ParamList& params, bool on) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.set_requires_grad(on);
  }
}

std::string fingerprint(const ParamList& params) {
  Fnv1a h;
  for (const auto& p : params) {
    h.update(p.name);
    for (std::size_t d : p.tensor.shape()) h.update(std::to_string(d) + ",");
    h.update(p.tensor.data());
  }
  return h.hex();
}

Tensor random_normal(Shape shape, double stddev, std::mt19937_64& rng, bool requires_grad) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> data(shape_size(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data), requires_grad);
}

// --- encoders -------------------------------------------------------------------------

SpeechFeatures PrecomputedEncoder::encode(const FeatureMatrix& input, std::string source_id) const {
  if (input.cols() != dim_) {
    throw DimensionError("PrecomputedEncoder: features are " + std::to_string(input.cols()) +
                         " wide, expected " + std::to_string(dim_));
  }
  return {input, std::move(source_id)};
}

ToyEncoder::ToyEncoder(std::size_t input_dim, std::size_t output_dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  weight_ = random_normal({input_dim, output_dim}, 1.0 / std::sqrt(static_cast<double>(input_dim)), rng,
                          false);
}

ToyEncoder::ToyEncoder(Tensor weight) : weight_(std::move(weight)) {
  if (weight_.dim() != 2) throw DimensionError("ToyEncoder: weight must be a matrix");
  weight_.set_requires_grad(false);
}

SpeechFeatures ToyEncoder::encode(const FeatureMatrix& input, std::string source_id) const {
  if (input.cols() != input_dim()) {
    throw DimensionError("ToyEncoder: input is " + std::to_string(input.cols()) + " wide, expected " +
                         std::to_string(input_dim()));
  }
  FeatureMatrix out = to_matrix(matmul(to_tensor(input), weight_));
  for (double& v : out.data()) v = std::tanh(v);
  return {std::move(out), std::move(source_id)};
}

SpeechFeatures load_features(const std::string& fmat_path) {
  return {read_fmat(fmat_path), std::filesystem::path(fmat_path).stem().string()};
}

// --- adaptor --------------------------------------------------------------------------

AdaptorParams AdaptorParams::init(const AdaptorConfig& cfg, std::uint64_t seed) {
  if (cfg.downsample_k == 0) throw ConfigError("adaptor: downsample_k must be >= 1");
  std::mt19937_64 rng(seed);
  const std::size_t in = cfg.downsample_k * cfg.input_dim;
  AdaptorParams p;
  p.w1 = random_normal({in, cfg.hidden_dim}, 1.0 / std::sqrt(static_cast<double>(in)), rng);
  p.b1 = Tensor::zeros({cfg.hidden_dim}, true);
  p.w2 = random_normal({cfg.hidden_dim, cfg.out_dim}, 1.0 / std::sqrt(static_cast<double>(cfg.hidden_dim)), rng);
  p.b2 = Tensor::zeros({cfg.out_dim}, true);
  return p;
}

ParamList AdaptorParams::named(const std::string& prefix) const {
  return {{prefix + "w1", w1}, {prefix + "b1", b1}, {prefix + "w2", w2}, {prefix + "b2", b2}};
}

FeatureMatrix downsample(const FeatureMatrix& frames, std::size_t k) {
  if (k == 0) throw ConfigError("downsample: k must be >= 1");
  const std::size_t n = frames.rows(), d = frames.cols();
  if (n < k) {
    throw LengthError("downsample: " + std::to_string(n) + " frames cannot fill one group of " +
                      std::to_string(k) + "; output would be empty");
  }
  const std::size_t out_rows = n / k;
  // Row-major storage makes k consecutive frames already contiguous.
  std::vector<double> data(frames.data().begin(), frames.data().begin() + out_rows * k * d);
  return FeatureMatrix(out_rows, k * d, std::move(data));
}

Tensor adapt(const SpeechFeatures& features, const AdaptorConfig& cfg, const AdaptorParams& params) {
  const Tensor h = to_tensor(downsample(features.frames, cfg.downsample_k));
  return linear(relu(linear(h, params.w1, params.b1)), params.w2, params.b2);
}

// --- transformer ----------------------------------------------------------------------

void TransformerConfig::validate() const {
  if (heads == 0 || model_dim % heads != 0) {
    throw ConfigError("transformer: model_dim " + std::to_string(model_dim) + " not divisible by " +
                      std::to_string(heads) + " heads");
  }
  if ((model_dim / heads) % 2 != 0) throw ConfigError("transformer: head width must be even for rotary positions");
}

TransformerParams TransformerParams::init(const TransformerConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.model_dim, f = cfg.ffn_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  const double sf = 1.0 / std::sqrt(static_cast<double>(f));
  // Residual-branch outputs start small so deep stacks begin near identity.
  const double out_scale = 1.0 / std::sqrt(2.0 * static_cast<double>(std::max<std::size_t>(cfg.layers, 1)));
  TransformerParams p;
  for (std::size_t l = 0; l < cfg.layers; ++l) {
    TransformerLayerParams L;
    L.attn_norm = Tensor::full({d}, 1.0, true);
    L.wq = random_normal({d, d}, sd, rng);
    L.wk = random_normal({d, d}, sd, rng);
    L.wv = random_normal({d, d}, sd, rng);
    L.wo = random_normal({d, d}, sd * out_scale, rng);
    L.ffn_norm = Tensor::full({d}, 1.0, true);
    L.w_gate = random_normal({d, f}, sd, rng);
    L.w_up = random_normal({d, f}, sd, rng);
    L.w_down = random_normal({f, d}, sf * out_scale, rng);
    p.layers.push_back(std::move(L));
  }
  return p;
}

ParamList TransformerParams::named(const std::string& prefix) const {
  ParamList out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& L = layers[l];
    const std::string p = prefix + "layers." + std::to_string(l) + ".";
    out.push_back({p + "attn_norm", L.attn_norm});
    out.push_back({p + "wq", L.wq});
    out.push_back({p + "wk", L.wk});
    out.push_back({p + "wv", L.wv});
    out.push_back({p + "wo", L.wo});
    out.push_back({p + "ffn_norm", L.ffn_norm});
    out.push_back({p + "w_gate", L.w_gate});
    out.push_back({p + "w_up", L.w_up});
    out.push_back({p + "w_down", L.w_down});
  }
  return out;
}

void KvCache::clear() {
  for (auto& k : keys_) k = Tensor();
  for (auto& v : values_) v = Tensor();
  length_ = 0;
}

namespace {

struct PastKv {
  const Tensor* keys = nullptr;
  const Tensor* values = nullptr;
  std::size_t length = 0;
};

// Shared by full and incremental paths. `position_offset` feeds the rotary
// phase; `past` supplies earlier keys/values (already rotated).
Tensor layer_forward(const Tensor& x, const TransformerLayerParams& L, const TransformerConfig& cfg,
                     std::size_t position_offset, const PastKv& past, Tensor* keys_out, Tensor* values_out) {
  const std::size_t d = cfg.model_dim, heads = cfg.heads, hd = d / heads;
  if (x.cols() != d) {
    throw DimensionError("transformer: input width " + std::to_string(x.cols()) + " != model_dim " +
                         std::to_string(d));
  }
  const Tensor h = rms_norm(x, L.attn_norm, cfg.norm_eps);
  const Tensor q = rope(matmul(h, L.wq), heads, position_offset, cfg.rope_theta);
  Tensor k = rope(matmul(h, L.wk), heads, position_offset, cfg.rope_theta);
  Tensor v = matmul(h, L.wv);
  if (past.length > 0) {
    k = concat_rows({*past.keys, k});
    v = concat_rows({*past.values, v});
  }
  if (keys_out) *keys_out = k.detach();
  if (values_out) *values_out = v.detach();

  const double inv = 1.0 / std::sqrt(static_cast<double>(hd));
  std::vector<Tensor> head_out;
  head_out.reserve(heads);
  for (std::size_t i = 0; i < heads; ++i) {
    const Tensor qh = slice_cols(q, i * hd, (i + 1) * hd);
    const Tensor kh = slice_cols(k, i * hd, (i + 1) * hd);
    const Tensor vh = slice_cols(v, i * hd, (i + 1) * hd);
    Tensor scores = scale(matmul(qh, transpose(kh)), inv);
    if (cfg.causal) scores = causal_mask(scores, past.length);
    head_out.push_back(matmul(softmax(scores, 1), vh));
  }
  const Tensor x1 = add(x, matmul(concat_last_dim(head_out), L.wo));
  const Tensor h2 = rms_norm(x1, L.ffn_norm, cfg.norm_eps);
  const Tensor ff = matmul(mul(silu(matmul(h2, L.w_gate)), matmul(h2, L.w_up)), L.w_down);
  return add(x1, ff);
}

}  // namespace

Tensor transformer_layer_forward(const Tensor& x, const TransformerLayerParams& layer,
                                 const TransformerConfig& cfg, std::size_t position_offset) {
  return layer_forward(x, layer, cfg, position_offset, {}, nullptr, nullptr);
}

Tensor transformer_forward(const Tensor& x, const TransformerConfig& cfg, const TransformerParams& params) {
  if (x.rows() > cfg.max_seq_len) {
    throw LengthError("transformer: sequence of " + std::to_string(x.rows()) + " rows exceeds max_seq_len " +
                      std::to_string(cfg.max_seq_len));
  }
  Tensor h = x;
  for (const auto& L : params.layers) h = layer_forward(h, L, cfg, 0, {}, nullptr, nullptr);
  return h;
}

Tensor transformer_extend(KvCache& cache, const Tensor& x_new, const TransformerConfig& cfg,
                          const TransformerParams& params) {
  if (!cfg.causal) throw ConfigError("transformer_extend: incremental decoding needs causal attention");
  if (cache.layers() != params.layers.size()) {
    throw StateError("transformer_extend: cache has " + std::to_string(cache.layers()) + " layers, model has " +
                     std::to_string(params.layers.size()));
  }
  const std::size_t offset = cache.length_;
  if (offset + x_new.rows() > cfg.max_seq_len) {
    throw LengthError("transformer_extend: length " + std::to_string(offset + x_new.rows()) +
                      " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
  }
  Tensor h = x_new;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    PastKv past{&cache.keys_[l], &cache.values_[l], offset};
    Tensor k, v;
    h = layer_forward(h, params.layers[l], cfg, offset, past, &k, &v);
    cache.keys_[l] = std::move(k);
    cache.values_[l] = std::move(v);
  }
  cache.length_ = offset + x_new.rows();
  return h;
}

}  // namespace omni
