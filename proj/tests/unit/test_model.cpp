#include <doctest.h>

#include <filesystem>

#include "omni/error.hpp"
#include "omni/model.hpp"

using namespace omni;

TEST_CASE("toy config validates and links component widths") {
  OmniConfig cfg = OmniConfig::toy(12);
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.decoder.unit_vocab == 12);
  CHECK(cfg.decoder.transformer.model_dim == cfg.lm.transformer.model_dim);
  cfg.adaptor.out_dim = 7;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("model parameters are grouped and seeded deterministically") {
  OmniModel a(OmniConfig::toy(8), make_toy_tokenizer({"x"}));
  OmniModel b(OmniConfig::toy(8), make_toy_tokenizer({"x"}));
  CHECK(a.config().lm.vocab_size == a.tokenizer().size());
  CHECK(fingerprint(a.all_params()) == fingerprint(b.all_params()));
  CHECK(a.all_params().size() == a.encoder_params().size() + a.adaptor_params().size() + a.lm_params().size() +
                                     a.decoder_params().size());
  OmniConfig other = OmniConfig::toy(8);
  other.seed = 2;
  OmniModel c(other, make_toy_tokenizer({"x"}));
  CHECK(fingerprint(a.lm_params()) != fingerprint(c.lm_params()));
}

TEST_CASE("checkpoints round trip exactly") {
  const auto dir = std::filesystem::temp_directory_path() / "omni_model_ckpt";
  std::filesystem::remove_all(dir);
  OmniModel m(OmniConfig::toy(8), make_toy_tokenizer({"alpha", "beta"}));
  // Perturb so the checkpoint differs from a fresh init.
  m.decoder().head.bias.mutable_data()[0] = 0.125;
  m.save(dir);
  const auto loaded = OmniModel::load(dir);
  CHECK(fingerprint(loaded->all_params()) == fingerprint(m.all_params()));
  CHECK(loaded->tokenizer().words() == m.tokenizer().words());
  CHECK(loaded->config().decoder.upsample_lambda == m.config().decoder.upsample_lambda);

  // A mis-shaped parameter index is rejected.
  OmniModel small(OmniConfig::toy(5), make_toy_tokenizer({"alpha", "beta"}));
  CHECK_THROWS_AS(load_params(dir, small.decoder_params()), ParseError);
  std::filesystem::remove_all(dir);
  CHECK_THROWS(OmniModel::load(dir));
}

TEST_CASE("generator and speech decoder share the model's widths") {
  OmniModel m(OmniConfig::toy(8), make_toy_tokenizer({}));
  const auto gen = m.generator();
  const auto dec = m.speech_decoder();
  CHECK(gen->hidden_dim() == dec->input_dim());
  CHECK(dec->unit_vocab() == 8);
  const PromptInput p = m.prompt_for(FeatureMatrix(10, m.config().raw_dim));
  CHECK(p.speech_len == 2);
  CHECK_THROWS_AS(m.prompt_for(FeatureMatrix(10, 3)), DimensionError);
}
