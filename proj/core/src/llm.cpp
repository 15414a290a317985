#include "omni/llm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "omni/error.hpp"

namespace omni {

PromptTemplate PromptTemplate::standard() {
  PromptTemplate t;
  t.before_speech =
      "<|begin_of_text|><|start_header_id|>system<|end_header_id|>\n"
      "\n"
      "You are a helpful language and speech assistant. You are able to\n"
      "understand the speech content that the user provides, and assist the \n"
      "user with a variety of tasks using natural language.<|eot_id|>\n"
      "<|start_header_id|>user<|end_header_id|>\n";
  t.after_speech =
      "\n"
      "Please answer the questions in the user's input speech.<|eot_id|>\n"
      "<|start_header_id|>assistant<|end_header_id|>\n";
  return t;
}

std::string PromptTemplate::render() const {
  return before_speech + std::string(kSpeechSlot) + after_speech;
}

std::vector<std::string> template_words(const PromptTemplate& tmpl) {
  std::vector<std::string> out;
  std::set<std::string> seen;
  for (const std::string* part : {&tmpl.before_speech, &tmpl.after_speech}) {
    std::string text = *part;
    for (std::string_view m : Tokenizer::kMarkers) {
      for (std::size_t pos; (pos = text.find(m)) != std::string::npos;) text.replace(pos, m.size(), " ");
    }
    for (auto& w : split_words(text)) {
      if (seen.insert(w).second) out.push_back(w);
    }
  }
  return out;
}

LmParams LmParams::init(const LmConfig& cfg, std::uint64_t seed) {
  if (cfg.vocab_size == 0) throw ConfigError("lm: vocab_size must be positive");
  std::mt19937_64 rng(seed);
  const std::size_t d = cfg.transformer.model_dim;
  LmParams p;
  p.embedding = random_normal({cfg.vocab_size, d}, 1.0, rng);
  p.transformer = TransformerParams::init(cfg.transformer, rng());
  p.output_norm = Tensor::full({d}, 1.0, true);
  p.head = random_normal({d, cfg.vocab_size}, 1.0 / std::sqrt(static_cast<double>(d)), rng);
  return p;
}

ParamList LmParams::named(const std::string& prefix) const {
  ParamList out{{prefix + "embedding", embedding}};
  for (auto& p : transformer.named(prefix + "transformer.")) out.push_back(std::move(p));
  out.push_back({prefix + "output_norm", output_norm});
  out.push_back({prefix + "head", head});
  return out;
}

PromptInput assemble_prompt(const Tensor& speech, const Tokenizer& tokenizer, const LmParams& params,
                            const PromptTemplate& tmpl) {
  const std::size_t d = params.embedding.cols();
  const bool empty = speech.size() == 0;
  if (!empty && (speech.dim() != 2 || speech.cols() != d)) {
    throw DimensionError("assemble_prompt: speech rows are " + std::to_string(speech.cols()) +
                         " wide, model_dim is " + std::to_string(d));
  }
  const auto pre = tokenizer.tokenize_template(tmpl.before_speech);
  const auto post = tokenizer.tokenize_template(tmpl.after_speech);
  std::vector<Tensor> parts;
  if (!pre.empty()) parts.push_back(embedding_lookup(params.embedding, pre));
  if (!empty) parts.push_back(speech);
  if (!post.empty()) parts.push_back(embedding_lookup(params.embedding, post));
  PromptInput in;
  in.embeddings = parts.empty() ? Tensor::zeros({0, d}) : concat_rows(parts);
  in.speech_begin = pre.size();
  in.speech_len = empty ? 0 : speech.rows();
  return in;
}

TeacherForced lm_teacher_forced(const PromptInput& prompt, std::span<const std::size_t> response,
                                const LmConfig& cfg, const LmParams& params) {
  const std::size_t p = prompt.embeddings.rows();
  const std::size_t m = response.size();
  if (p == 0) throw LengthError("lm_teacher_forced: empty prompt");
  if (m == 0) throw LengthError("lm_teacher_forced: empty response");
  Tensor input = prompt.embeddings;
  if (m > 1) input = concat_rows({input, embedding_lookup(params.embedding, response.first(m - 1))});
  const Tensor h = transformer_forward(input, cfg.transformer, params.transformer);
  TeacherForced out;
  out.hidden = rms_norm(slice_rows(h, p - 1, p - 1 + m), params.output_norm, cfg.transformer.norm_eps);
  out.logits = matmul(out.hidden, params.head);
  return out;
}

// --- LM token source ------------------------------------------------------------------

LmTokenSource::LmTokenSource(const PromptInput& prompt, const LmConfig& cfg, const LmParams& params)
    : cfg_(cfg), params_(params), cache_(params.transformer.layers.size()), pending_(prompt.embeddings.detach()) {
  if (pending_.rows() == 0) throw LengthError("LmTokenSource: empty prompt");
  if (cfg.max_new_tokens == 0) throw ConfigError("LmTokenSource: max_new_tokens must be positive");
}

GeneratedToken LmTokenSource::generate_next() {
  if (done_) throw StreamExhaustedError("LmTokenSource: EOS already emitted");
  const Tensor h = transformer_extend(cache_, pending_, cfg_.transformer, params_.transformer);
  const Tensor last = rms_norm(slice_rows(h, h.rows() - 1, h.rows()), params_.output_norm,
                               cfg_.transformer.norm_eps)
                          .detach();
  const Tensor logits = matmul(last, params_.head);
  const auto row = logits.data();
  std::size_t id = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  ++emitted_;
  if (emitted_ >= cfg_.max_new_tokens) id = Tokenizer::kEos;
  if (id == Tokenizer::kEos) done_ = true;
  const std::size_t ids[] = {id};
  pending_ = embedding_lookup(params_.embedding, ids).detach();
  GeneratedToken tok;
  tok.id = id;
  tok.hidden.assign(last.data().begin(), last.data().end());
  return tok;
}

ToyLmGenerator::ToyLmGenerator(const SpeechEncoder& encoder, const AdaptorConfig& adaptor_cfg,
                               const AdaptorParams& adaptor, const LmConfig& lm_cfg, const LmParams& lm,
                               const Tokenizer& tokenizer)
    : encoder_(encoder), adaptor_cfg_(adaptor_cfg), adaptor_(adaptor), lm_cfg_(lm_cfg), lm_(lm),
      tokenizer_(tokenizer) {
  if (adaptor_cfg.out_dim != lm_cfg.transformer.model_dim) {
    throw ConfigError("ToyLmGenerator: adaptor out_dim " + std::to_string(adaptor_cfg.out_dim) +
                      " != LM model_dim " + std::to_string(lm_cfg.transformer.model_dim));
  }
  if (encoder.output_dim() != adaptor_cfg.input_dim) {
    throw ConfigError("ToyLmGenerator: encoder output_dim " + std::to_string(encoder.output_dim()) +
                      " != adaptor input_dim " + std::to_string(adaptor_cfg.input_dim));
  }
}

std::unique_ptr<TokenSource> ToyLmGenerator::start(const FeatureMatrix& instruction, const std::string& source_id) {
  const SpeechFeatures feats = encoder_.encode(instruction, source_id);
  const Tensor s = adapt(feats, adaptor_cfg_, adaptor_).detach();
  return std::make_unique<LmTokenSource>(assemble_prompt(s, tokenizer_, lm_), lm_cfg_, lm_);
}

// --- scripted sources -----------------------------------------------------------------

std::size_t Script::resolved_unit_vocab() const {
  if (unit_vocab > 0) return unit_vocab;
  int hi = -1;
  for (const auto& b : alignments) {
    for (int u : b) hi = std::max(hi, u);
  }
  return static_cast<std::size_t>(hi + 1);
}

std::vector<std::vector<std::size_t>> Script::alignment_blocks() const {
  const std::size_t k = resolved_unit_vocab();
  std::vector<std::vector<std::size_t>> out;
  out.reserve(alignments.size());
  for (const auto& b : alignments) {
    std::vector<std::size_t> block;
    block.reserve(b.size());
    for (int u : b) {
      if (u < -1 || (u >= 0 && static_cast<std::size_t>(u) >= k)) {
        throw ConfigError("script: alignment entry " + std::to_string(u) + " outside [-1, " + std::to_string(k) +
                          ")");
      }
      block.push_back(u < 0 ? k : static_cast<std::size_t>(u));
    }
    out.push_back(std::move(block));
  }
  return out;
}

ScriptedSource::ScriptedSource(std::vector<std::size_t> tokens, FeatureMatrix hidden, std::vector<double> delays_ms,
                               std::size_t eos_id)
    : tokens_(std::move(tokens)), hidden_(std::move(hidden)), delays_(std::move(delays_ms)) {
  if (tokens_.empty()) throw ConfigError("ScriptedSource: empty script");
  if (tokens_.back() != eos_id) throw ConfigError("ScriptedSource: last token must be EOS");
  if (hidden_.rows() != tokens_.size()) {
    throw ConfigError("ScriptedSource: " + std::to_string(tokens_.size()) + " tokens but " +
                      std::to_string(hidden_.rows()) + " hidden rows");
  }
  if (!delays_.empty() && delays_.size() != tokens_.size()) {
    throw ConfigError("ScriptedSource: " + std::to_string(tokens_.size()) + " tokens but " +
                      std::to_string(delays_.size()) + " delays");
  }
  for (double d : delays_) {
    if (!(d >= 0.0)) throw ConfigError("ScriptedSource: delays must be non-negative");
  }
}

GeneratedToken ScriptedSource::generate_next() {
  if (exhausted()) throw StreamExhaustedError("ScriptedSource: script exhausted");
  GeneratedToken tok;
  tok.id = tokens_[next_];
  const auto row = hidden_.row(next_);
  tok.hidden.assign(row.begin(), row.end());
  if (!delays_.empty()) tok.delay_ms = delays_[next_];
  ++next_;
  return tok;
}

ScriptedGenerator::ScriptedGenerator(Script script, const Tokenizer& tokenizer)
    : script_(std::move(script)), tokenizer_(tokenizer) {
  // Validate eagerly so a bad script fails at load rather than mid-stream.
  ScriptedSource probe(script_, tokenizer_.eos_id());
}

std::unique_ptr<TokenSource> ScriptedGenerator::start(const FeatureMatrix&, const std::string&) {
  return std::make_unique<ScriptedSource>(script_, tokenizer_.eos_id());
}

FeatureMatrix hashed_token_rows(std::span<const std::size_t> ids, std::size_t dim, std::uint64_t seed) {
  FeatureMatrix out(0, dim);
  std::vector<double> row(dim);
  for (std::size_t id : ids) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(id), static_cast<std::uint32_t>(id >> 32)};
    std::mt19937_64 rng(seq);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (double& v : row) v = dist(rng);
    out.append_row(row);
  }
  return out;
}

namespace {

Script parse_script(const nlohmann::json& j, const Tokenizer& tok, std::size_t hidden_dim, std::uint64_t seed,
                    std::size_t offset) {
  auto fail = [&](const std::string& what) { return ParseError("script: " + what, offset); };
  if (!j.is_object()) throw fail("line is not a JSON object");
  if (!j.contains("tokens") || !j["tokens"].is_array()) throw fail("missing \"tokens\" array");
  Script s;
  for (const auto& t : j["tokens"]) {
    if (t.is_number_unsigned()) {
      const auto id = t.get<std::size_t>();
      if (id >= tok.size()) throw fail("token id " + std::to_string(id) + " outside vocabulary");
      s.tokens.push_back(id);
    } else if (t.is_string()) {
      const auto w = t.get<std::string>();
      const std::size_t id = tok.word_id(w);
      if (id < tok.size()) {
        s.tokens.push_back(id);
      } else {
        for (std::size_t b : tok.tokenize(s.tokens.empty() ? w : " " + w)) s.tokens.push_back(b);
      }
    } else {
      throw fail("tokens must be ids or words");
    }
  }
  if (s.tokens.empty() || s.tokens.back() != tok.eos_id()) s.tokens.push_back(tok.eos_id());

  if (j.contains("delays_ms")) {
    const auto d = j["delays_ms"].get<std::vector<double>>();
    if (d.size() == 1) {
      s.delays_ms.assign(s.tokens.size(), d[0]);
    } else if (d.size() == s.tokens.size()) {
      s.delays_ms = d;
    } else if (!d.empty()) {
      throw fail(std::to_string(d.size()) + " delays for " + std::to_string(s.tokens.size()) + " tokens");
    }
  }
  if (j.contains("hidden")) {
    for (const auto& r : j["hidden"]) s.hidden.append_row(r.get<std::vector<double>>());
    if (s.hidden.rows() != s.tokens.size()) throw fail("hidden row count differs from token count");
  } else {
    s.hidden = hashed_token_rows(s.tokens, hidden_dim, seed);
  }
  if (j.contains("alignments")) {
    s.alignments = j["alignments"].get<std::vector<std::vector<int>>>();
    if (s.alignments.size() != s.tokens.size()) throw fail("alignment block count differs from token count");
  }
  if (j.contains("unit_vocab")) s.unit_vocab = j["unit_vocab"].get<std::size_t>();
  return s;
}

}  // namespace

std::vector<Script> load_scripts_jsonl(const std::filesystem::path& path, const Tokenizer& tokenizer,
                                       std::size_t hidden_dim, std::uint64_t seed) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<Script> out;
  std::string line;
  std::size_t offset = 0;
  while (std::getline(in, line)) {
    const std::size_t start = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(std::string("script: ") + e.what(), start + (e.byte > 0 ? e.byte - 1 : 0));
    }
    try {
      out.push_back(parse_script(j, tokenizer, hidden_dim, seed, start));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(std::string("script: ") + e.what(), start);
    }
  }
  return out;
}

}  // namespace omni
