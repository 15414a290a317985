#include <doctest.h>

#include <cmath>

#include "../oracles/gen.hpp"
#include "../support/gradcheck.hpp"
#include "omni/error.hpp"
#include "omni/nn.hpp"

using namespace omni;

namespace {

FeatureMatrix counting_frames(std::size_t n, std::size_t d) {
  FeatureMatrix m(n, d);
  for (std::size_t i = 0; i < n * d; ++i) m.data()[i] = static_cast<double>(i);
  return m;
}

Tensor random_input(gen::Rng& rng, std::size_t rows, std::size_t cols) {
  return Tensor::matrix(rows, cols, rng.normals(rows * cols));
}

TransformerConfig small_config(std::size_t layers = 2) {
  TransformerConfig c;
  c.layers = layers;
  c.model_dim = 16;
  c.heads = 2;
  c.ffn_dim = 24;
  c.max_seq_len = 64;
  return c;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  REQUIRE(a.shape() == b.shape());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

}  // namespace

TEST_CASE("downsample concatenates groups of k frames and drops the remainder") {
  const FeatureMatrix h = counting_frames(12, 2);
  const FeatureMatrix z = downsample(h, 5);
  REQUIRE(z.rows() == 2);
  REQUIRE(z.cols() == 10);
  for (std::size_t c = 0; c < 10; ++c) {
    CHECK(z.at(0, c) == static_cast<double>(c));
    CHECK(z.at(1, c) == static_cast<double>(10 + c));
  }
  CHECK(downsample(h, 1) == h);
  CHECK(downsample(counting_frames(5, 3), 5).rows() == 1);
  CHECK_THROWS_AS(downsample(counting_frames(4, 3), 5), LengthError);
  CHECK_THROWS_AS(downsample(h, 0), ConfigError);
}

TEST_CASE("adaptor output shape and ReLU bottleneck") {
  AdaptorConfig cfg{5, 4, 8, 6};
  const AdaptorParams p = AdaptorParams::init(cfg, 3);
  const Tensor s = adapt({counting_frames(23, 4), "x"}, cfg, p);
  CHECK(s.shape() == Shape{4, 6});
  CHECK(p.named().size() == 4);
}

TEST_CASE("adaptor gradients match finite differences") {
  AdaptorConfig cfg{2, 3, 5, 4};
  AdaptorParams p = AdaptorParams::init(cfg, 5);
  gen::Rng rng(5);
  FeatureMatrix h(6, 3, rng.normals(18));
  const double err = support::gradcheck(
      [&](const std::vector<Tensor>& in) {
        AdaptorParams q{in[0], in[1], in[2], in[3]};
        return support::probe(adapt({h, "x"}, cfg, q));
      },
      {p.w1, p.b1, p.w2, p.b2});
  CHECK(err < 1e-5);
}

TEST_CASE("toy encoder is a frozen tanh projection") {
  const ToyEncoder enc(4, 3, 9);
  const auto out = enc.encode(counting_frames(2, 4), "utt");
  CHECK(out.frames.rows() == 2);
  CHECK(out.frames.cols() == 3);
  CHECK(out.source_id == "utt");
  for (double v : out.frames.data()) CHECK(std::abs(v) <= 1.0);
  CHECK_FALSE(enc.params()[0].tensor.requires_grad());
  CHECK_THROWS_AS(enc.encode(counting_frames(2, 5), "bad"), DimensionError);
  CHECK_THROWS_AS(PrecomputedEncoder(3).encode(counting_frames(2, 4), "bad"), DimensionError);
}

TEST_CASE("transformer config validation") {
  TransformerConfig c = small_config();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.heads = 16;  // head width 1 is odd
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("incremental transformer equals full forward for every split") {
  gen::Rng rng(21);
  const TransformerConfig cfg = small_config();
  const TransformerParams p = TransformerParams::init(cfg, 4);
  const Tensor x = random_input(rng, 9, cfg.model_dim);
  const Tensor full = transformer_forward(x, cfg, p);
  for (std::size_t split = 0; split <= 9; ++split) {
    KvCache cache(cfg.layers);
    std::vector<Tensor> parts;
    if (split > 0) parts.push_back(transformer_extend(cache, slice_rows(x, 0, split), cfg, p));
    for (std::size_t r = split; r < 9; ++r) parts.push_back(transformer_extend(cache, slice_rows(x, r, r + 1), cfg, p));
    CHECK(cache.length() == 9);
    CHECK(max_abs_diff(concat_rows(parts), full) < 1e-10);
  }
}

TEST_CASE("causal transformer output rows ignore later inputs") {
  gen::Rng rng(22);
  const TransformerConfig cfg = small_config(1);
  const TransformerParams p = TransformerParams::init(cfg, 6);
  const Tensor x = random_input(rng, 6, cfg.model_dim);
  Tensor y = x.detach();
  for (std::size_t c = 0; c < cfg.model_dim; ++c) y.mutable_data()[5 * cfg.model_dim + c] += 1.0;
  const Tensor a = slice_rows(transformer_forward(x, cfg, p), 0, 5);
  const Tensor b = slice_rows(transformer_forward(y, cfg, p), 0, 5);
  CHECK(max_abs_diff(a, b) == 0.0);
}

TEST_CASE("transformer layer gradients match finite differences") {
  gen::Rng rng(23);
  TransformerConfig cfg = small_config(1);
  cfg.model_dim = 8;
  cfg.ffn_dim = 6;
  const TransformerParams p = TransformerParams::init(cfg, 8);
  const auto& L = p.layers[0];
  const Tensor x = random_input(rng, 4, 8);
  const double err = support::gradcheck(
      [&](const std::vector<Tensor>& in) {
        TransformerLayerParams q{in[1], in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9]};
        return support::probe(transformer_layer_forward(in[0], q, cfg, 2));
      },
      {x, L.attn_norm, L.wq, L.wk, L.wv, L.wo, L.ffn_norm, L.w_gate, L.w_up, L.w_down});
  CHECK(err < 1e-5);
}

TEST_CASE("sequence length and cache errors") {
  TransformerConfig cfg = small_config(1);
  cfg.max_seq_len = 4;
  const TransformerParams p = TransformerParams::init(cfg, 1);
  CHECK_THROWS_AS(transformer_forward(Tensor::zeros({5, 16}), cfg, p), LengthError);
  KvCache cache(1);
  transformer_extend(cache, Tensor::zeros({3, 16}), cfg, p);
  CHECK_THROWS_AS(transformer_extend(cache, Tensor::zeros({2, 16}), cfg, p), LengthError);
  KvCache wrong(2);
  CHECK_THROWS_AS(transformer_extend(wrong, Tensor::zeros({1, 16}), cfg, p), StateError);
  CHECK_THROWS_AS(transformer_forward(Tensor::zeros({2, 15}), cfg, p), DimensionError);
  cfg.causal = false;
  CHECK_THROWS_AS(transformer_extend(cache, Tensor::zeros({1, 16}), cfg, p), ConfigError);
}

TEST_CASE("fingerprint tracks values, names and shapes") {
  const TransformerParams p = TransformerParams::init(small_config(1), 2);
  const std::string a = fingerprint(p.named("t."));
  CHECK(a == fingerprint(p.named("t.")));
  CHECK(a != fingerprint(p.named("u.")));
  Tensor w = p.layers[0].wq;
  w.mutable_data()[0] += 1e-12;
  CHECK(a != fingerprint(p.named("t.")));
}
