#include "omni/model.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include <json.hpp>

#include "omni/error.hpp"
#include "omni/feature_matrix.hpp"

namespace omni {

using nlohmann::json;

OmniConfig OmniConfig::toy(std::size_t unit_vocab) {
  OmniConfig c;
  TransformerConfig t;
  t.layers = 2;
  t.model_dim = 64;
  t.heads = 4;
  t.ffn_dim = 176;
  t.max_seq_len = 512;
  c.lm.transformer = t;
  c.lm.max_new_tokens = 24;
  c.decoder.transformer = t;
  c.decoder.upsample_lambda = 4;
  c.decoder.unit_vocab = unit_vocab;
  return c;
}

void OmniConfig::validate() const {
  if (adaptor.input_dim != encoder_dim) throw ConfigError("config: adaptor input_dim must equal encoder_dim");
  if (adaptor.out_dim != lm.transformer.model_dim) throw ConfigError("config: adaptor out_dim must equal LM model_dim");
  if (decoder.transformer.model_dim != lm.transformer.model_dim) {
    throw ConfigError("config: decoder and LM model_dim differ");
  }
  lm.transformer.validate();
  decoder.validate();
}

Tokenizer make_toy_tokenizer(const std::vector<std::string>& extra) {
  std::vector<std::string> words = template_words();
  for (const auto& w : extra) {
    if (std::find(words.begin(), words.end(), w) == words.end()) words.push_back(w);
  }
  return Tokenizer(std::move(words));
}

namespace {

OmniConfig with_vocab(OmniConfig cfg, const Tokenizer& tok) {
  cfg.lm.vocab_size = tok.size();
  cfg.validate();
  return cfg;
}

}  // namespace

OmniModel::OmniModel(OmniConfig cfg, Tokenizer tokenizer)
    : cfg_(with_vocab(std::move(cfg), tokenizer)),
      tokenizer_(std::move(tokenizer)),
      encoder_(cfg_.raw_dim, cfg_.encoder_dim, cfg_.seed * 4 + 0),
      adaptor_(AdaptorParams::init(cfg_.adaptor, cfg_.seed * 4 + 1)),
      lm_(LmParams::init(cfg_.lm, cfg_.seed * 4 + 2)),
      decoder_(DecoderParams::init(cfg_.decoder, cfg_.seed * 4 + 3)) {}

ParamList OmniModel::all_params() const {
  ParamList out = encoder_params();
  for (auto& p : adaptor_params()) out.push_back(p);
  for (auto& p : lm_params()) out.push_back(p);
  for (auto& p : decoder_params()) out.push_back(p);
  return out;
}

PromptInput OmniModel::prompt_for(const FeatureMatrix& raw, bool track_grad) const {
  const SpeechFeatures f = encoder_.encode(raw, "");
  Tensor s = adapt(f, cfg_.adaptor, adaptor_);
  if (!track_grad) s = s.detach();
  PromptInput p = assemble_prompt(s, tokenizer_, lm_);
  if (!track_grad) p.embeddings = p.embeddings.detach();
  return p;
}

std::unique_ptr<ResponseGenerator> OmniModel::generator() const {
  return std::make_unique<ToyLmGenerator>(encoder_, cfg_.adaptor, adaptor_, cfg_.lm, lm_, tokenizer_);
}

std::unique_ptr<CtcSpeechDecoder> OmniModel::speech_decoder() const {
  // Shares parameter storage with this model.
  return std::make_unique<CtcSpeechDecoder>(cfg_.decoder, decoder_);
}

// --- parameter snapshots ---------------------------------------------------------------

void save_params(const std::filesystem::path& dir, const ParamList& params) {
  static_assert(std::endian::native == std::endian::little, "snapshots assume a little-endian host");
  std::filesystem::create_directories(dir);
  json index = json::array();
  std::vector<std::uint8_t> blob;
  for (const auto& p : params) {
    const auto data = p.tensor.data();
    index.push_back({{"name", p.name}, {"shape", p.tensor.shape()}, {"offset", blob.size()}});
    const auto* bytes = reinterpret_cast<const std::uint8_t*>(data.data());
    blob.insert(blob.end(), bytes, bytes + data.size() * sizeof(double));
  }
  write_file_bytes(dir / "params.bin", blob);
  std::ofstream out(dir / "params.json");
  if (!out) throw IoError("cannot write " + (dir / "params.json").string());
  out << index.dump(1) << '\n';
}

void load_params(const std::filesystem::path& dir, const ParamList& params) {
  const auto blob = read_file_bytes(dir / "params.bin");
  std::ifstream in(dir / "params.json");
  if (!in) throw IoError("cannot open " + (dir / "params.json").string());
  json index;
  try {
    index = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("params.json: ") + e.what(), e.byte);
  }
  std::map<std::string, json> by_name;
  for (const auto& e : index) by_name[e.at("name").get<std::string>()] = e;
  for (const auto& p : params) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) throw ParseError("snapshot: no entry for " + p.name, 0);
    const auto shape = it->second.at("shape").get<Shape>();
    const auto offset = it->second.at("offset").get<std::size_t>();
    if (shape != p.tensor.shape()) throw ParseError("snapshot: shape mismatch for " + p.name, offset);
    Tensor t = p.tensor;
    auto dst = t.mutable_data();
    const std::size_t bytes = dst.size() * sizeof(double);
    if (offset + bytes > blob.size()) throw ParseError("snapshot: truncated data for " + p.name, blob.size());
    std::memcpy(dst.data(), blob.data() + offset, bytes);
  }
}

void OmniModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_params(dir, all_params());
  const auto t = [](const TransformerConfig& c) {
    return json{{"layers", c.layers},       {"model_dim", c.model_dim}, {"heads", c.heads},
                {"ffn_dim", c.ffn_dim},     {"max_seq_len", c.max_seq_len}, {"causal", c.causal},
                {"rope_theta", c.rope_theta}, {"norm_eps", c.norm_eps}};
  };
  const json m = {
      {"raw_dim", cfg_.raw_dim},
      {"encoder_dim", cfg_.encoder_dim},
      {"adaptor",
       {{"downsample_k", cfg_.adaptor.downsample_k},
        {"input_dim", cfg_.adaptor.input_dim},
        {"hidden_dim", cfg_.adaptor.hidden_dim},
        {"out_dim", cfg_.adaptor.out_dim}}},
      {"lm", {{"transformer", t(cfg_.lm.transformer)}, {"max_new_tokens", cfg_.lm.max_new_tokens}}},
      {"decoder",
       {{"transformer", t(cfg_.decoder.transformer)},
        {"upsample_lambda", cfg_.decoder.upsample_lambda},
        {"unit_vocab", cfg_.decoder.unit_vocab}}},
      {"seed", cfg_.seed},
      {"words", tokenizer_.words()}};
  std::ofstream out(dir / "model.json");
  if (!out) throw IoError("cannot write " + (dir / "model.json").string());
  out << m.dump(2) << '\n';
}

std::unique_ptr<OmniModel> OmniModel::load(const std::filesystem::path& dir) {
  std::ifstream in(dir / "model.json");
  if (!in) throw IoError("cannot open " + (dir / "model.json").string());
  json m;
  try {
    m = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("model.json: ") + e.what(), e.byte);
  }
  const auto t = [](const json& j) {
    TransformerConfig c;
    c.layers = j.at("layers");
    c.model_dim = j.at("model_dim");
    c.heads = j.at("heads");
    c.ffn_dim = j.at("ffn_dim");
    c.max_seq_len = j.at("max_seq_len");
    c.causal = j.at("causal");
    c.rope_theta = j.at("rope_theta");
    c.norm_eps = j.at("norm_eps");
    return c;
  };
  OmniConfig cfg;
  try {
    cfg.raw_dim = m.at("raw_dim");
    cfg.encoder_dim = m.at("encoder_dim");
    const auto& a = m.at("adaptor");
    cfg.adaptor = {a.at("downsample_k"), a.at("input_dim"), a.at("hidden_dim"), a.at("out_dim")};
    cfg.lm.transformer = t(m.at("lm").at("transformer"));
    cfg.lm.max_new_tokens = m.at("lm").at("max_new_tokens");
    cfg.decoder.transformer = t(m.at("decoder").at("transformer"));
    cfg.decoder.upsample_lambda = m.at("decoder").at("upsample_lambda");
    cfg.decoder.unit_vocab = m.at("decoder").at("unit_vocab");
    cfg.seed = m.at("seed");
  } catch (const json::exception& e) {
    throw ParseError(std::string("model.json: ") + e.what(), 0);
  }
  auto model = std::make_unique<OmniModel>(cfg, Tokenizer(m.at("words").get<std::vector<std::string>>()));
  load_params(dir, model->all_params());
  return model;
}

}  // namespace omni
