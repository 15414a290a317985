#include <doctest.h>

#include <cmath>

#include "../oracles/brute_ctc.hpp"
#include "../oracles/gen.hpp"
#include "omni/decoder.hpp"
#include "omni/error.hpp"

using namespace omni;

namespace {

DecoderConfig small_config(std::size_t lambda = 3, std::size_t vocab = 5) {
  DecoderConfig c;
  c.upsample_lambda = lambda;
  c.unit_vocab = vocab;
  c.transformer.layers = 2;
  c.transformer.model_dim = 8;
  c.transformer.heads = 2;
  c.transformer.ffn_dim = 12;
  c.transformer.max_seq_len = 128;
  return c;
}

Tensor random_hidden(gen::Rng& rng, std::size_t m, std::size_t d) { return Tensor::matrix(m, d, rng.normals(m * d)); }

}  // namespace

TEST_CASE("upsample repeats each hidden state lambda times") {
  const Tensor h = Tensor::matrix(2, 2, {1, 2, 3, 4});
  const Tensor u = upsample(h, 3);
  REQUIRE(u.rows() == 6);
  for (std::size_t i = 0; i < 6; ++i) CHECK(u.at(i, 1) == h.at(i / 3, 1));
  CHECK(upsample(h, 1).rows() == 2);
}

TEST_CASE("decode_full produces lambda rows per state and K+1 columns") {
  const DecoderConfig cfg = small_config(4, 6);
  const DecoderParams p = DecoderParams::init(cfg, 2);
  gen::Rng rng(1);
  const Tensor logits = decode_full(random_hidden(rng, 3, 8), cfg, p);
  CHECK(logits.shape() == Shape{12, 7});
  CHECK(decode_full(Tensor::zeros({0, 8}), cfg, p).shape() == Shape{0, 7});
}

TEST_CASE("incremental decoding reproduces full decoding and never revisits rows") {
  gen::Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const DecoderConfig cfg = small_config(rng.index(1, 4), rng.index(2, 6));
    const DecoderParams p = DecoderParams::init(cfg, 10 + trial);
    const std::size_t m = rng.index(1, 6);
    const Tensor h = random_hidden(rng, m, 8);
    const FeatureMatrix full = to_matrix(decode_full(h, cfg, p));
    DecoderState st(cfg, p);
    FeatureMatrix seen(0, cfg.unit_vocab + 1);
    for (std::size_t i = 0; i < m; ++i) {
      const FeatureMatrix block = decode_extend(st, h.row(i), p);
      CHECK(block.rows() == cfg.upsample_lambda);
      seen.append_rows(block);
      CHECK(st.logits() == seen);
    }
    REQUIRE(seen.rows() == full.rows());
    for (std::size_t j = 0; j < full.data().size(); ++j) CHECK(std::abs(seen.data()[j] - full.data()[j]) < 1e-9);
    CHECK(st.tokens() == m);
  }
}

TEST_CASE("decoder state rejects foreign params and bad widths") {
  const DecoderConfig cfg = small_config();
  const DecoderParams p = DecoderParams::init(cfg, 1);
  const DecoderParams q = DecoderParams::init(cfg, 2);
  DecoderState st(cfg, p);
  const std::vector<double> row(8, 0.1), wide(9, 0.1);
  CHECK_THROWS_AS(decode_extend(st, row, q), StateError);
  CHECK_THROWS_AS(decode_extend(st, wide, p), DimensionError);
  decode_extend(st, row, p);
  st.reset();
  CHECK(st.tokens() == 0);
  CHECK(st.logits().rows() == 0);
}

TEST_CASE("decoder config must be causal") {
  DecoderConfig cfg = small_config();
  cfg.transformer.causal = false;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("units_for_prefix examples") {
  const std::size_t e = 4;
  auto one_hot = [](const std::vector<std::size_t>& path, std::size_t k) {
    FeatureMatrix m(path.size(), k + 1);
    for (std::size_t i = 0; i < path.size(); ++i) m.at(i, path[i]) = 1.0;
    return m;
  };
  CHECK(units_for_prefix(one_hot({e, 3, 3, e}, 4)).values() == std::vector<std::size_t>{3});
  CHECK(units_for_prefix(one_hot({e, e, e}, 4)).empty());
}

TEST_CASE("unit prefixes only grow, with the last unit able to absorb repeats") {
  gen::Rng rng(3);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t k = rng.index(1, 4);
    const auto path = rng.indices(rng.index(1, 16), 0, k);
    const std::size_t cut = rng.index(0, path.size());
    const std::vector<std::size_t> p(path.begin(), path.begin() + static_cast<std::ptrdiff_t>(cut));
    const auto a = oracle::squash(p, k);
    const auto b = oracle::squash(path, k);
    CHECK(collapse({p, k}).size() <= collapse({path, k}).size());
    REQUIRE(a.size() <= b.size());
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("CtcSpeechDecoder wraps the incremental state") {
  const DecoderConfig cfg = small_config(2, 3);
  CtcSpeechDecoder dec(cfg, DecoderParams::init(cfg, 4));
  CHECK(dec.lambda() == 2);
  CHECK(dec.input_dim() == 8);
  gen::Rng rng(4);
  const Tensor h = random_hidden(rng, 3, 8);
  const FeatureMatrix full = to_matrix(decode_full(h, cfg, dec.params()));
  FeatureMatrix got(0, 4);
  for (std::size_t i = 0; i < 3; ++i) got.append_rows(dec.extend(h.row(i)));
  for (std::size_t j = 0; j < full.data().size(); ++j) CHECK(std::abs(got.data()[j] - full.data()[j]) < 1e-9);
  dec.reset();
  CHECK(to_matrix(decode_full(slice_rows(h, 0, 1), cfg, dec.params())).row(0)[0] == doctest::Approx(dec.extend(h.row(0)).row(0)[0]));
}

TEST_CASE("scripted alignment decoder replays one-hot blocks") {
  ScriptedAlignmentDecoder dec({{1, 3}, {3, 0}}, 2, 3, 4);
  const std::vector<double> row(4, 0.0);
  const FeatureMatrix a = dec.extend(row);
  CHECK(best_path(a).tokens == std::vector<std::size_t>{1, 3});
  CHECK(best_path(dec.extend(row)).tokens == std::vector<std::size_t>{3, 0});
  CHECK_THROWS_AS(dec.extend(row), StreamExhaustedError);
  dec.reset();
  CHECK(best_path(dec.extend(row)).tokens == std::vector<std::size_t>{1, 3});
  CHECK_THROWS_AS(ScriptedAlignmentDecoder({{1}}, 2, 3, 4), ConfigError);
  CHECK_THROWS_AS(ScriptedAlignmentDecoder({{1, 4}}, 2, 3, 4), ConfigError);
}
