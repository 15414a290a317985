#include "omni/data.hpp"

#include <algorithm>
#include <fstream>
#include <future>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "omni/error.hpp"
#include "omni/hash.hpp"
#include "omni/tokenizer.hpp"

namespace omni {

using nlohmann::json;

// --- records --------------------------------------------------------------------------

std::string record_to_json(const TripletRecord& r) {
  const json j = {{"id", r.id},
                  {"instruction_text", r.instruction_text},
                  {"instruction_features_path", r.instruction_features_path},
                  {"response_text", r.response_text},
                  {"response_units", r.response_units.values()},
                  {"unit_vocab", r.response_units.vocab()},
                  {"provenance",
                   {{"source_dataset", r.provenance.source_dataset},
                    {"rewrite_model", r.provenance.rewrite_model},
                    {"tts_voice", r.provenance.tts_voice}}}};
  return j.dump();
}

TripletRecord record_from_json(std::string_view line) {
  const std::string raw(line);
  json j;
  try {
    j = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("record: ") + e.what(), raw);
  }
  auto str = [&](const json& obj, const char* key) {
    if (!obj.is_object() || !obj.contains(key) || !obj[key].is_string()) {
      throw ValidationError(std::string("record: missing string field '") + key + "'", raw);
    }
    return obj[key].get<std::string>();
  };
  TripletRecord r;
  r.id = str(j, "id");
  r.instruction_text = str(j, "instruction_text");
  r.instruction_features_path = str(j, "instruction_features_path");
  r.response_text = str(j, "response_text");
  if (!j.contains("response_units") || !j["response_units"].is_array() || !j.contains("unit_vocab") ||
      !j["unit_vocab"].is_number_unsigned()) {
    throw ValidationError("record: missing response_units/unit_vocab", raw);
  }
  std::vector<std::size_t> units;
  for (const auto& u : j["response_units"]) {
    if (!u.is_number_unsigned()) throw ValidationError("record: units must be non-negative integers", raw);
    units.push_back(u.get<std::size_t>());
  }
  try {
    r.response_units = UnitSequence(std::move(units), j["unit_vocab"].get<std::size_t>());
  } catch (const ConfigError& e) {
    throw ValidationError(std::string("record: ") + e.what(), raw);
  }
  if (!j.contains("provenance")) throw ValidationError("record: missing provenance", raw);
  const json& p = j["provenance"];
  r.provenance = {str(p, "source_dataset"), str(p, "rewrite_model"), str(p, "tts_voice")};
  if (r.id.empty()) throw ValidationError("record: empty id", raw);
  return r;
}

std::vector<TripletRecord> read_records(const std::filesystem::path& jsonl) {
  std::ifstream in(jsonl);
  if (!in) throw IoError("cannot open " + jsonl.string());
  std::vector<TripletRecord> out;
  for (std::string line; std::getline(in, line);) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(record_from_json(line));
  }
  return out;
}

void validate_record(const TripletRecord& r, const std::filesystem::path& dataset_dir) {
  if (r.id.empty()) throw ValidationError("record: empty id", record_to_json(r));
  if (r.response_units.has_adjacent_repeats()) {
    throw ValidationError("record " + r.id + ": response units contain adjacent repeats", record_to_json(r));
  }
  const auto path = dataset_dir / r.instruction_features_path;
  if (!std::filesystem::exists(path)) {
    throw ValidationError("record " + r.id + ": missing features file " + path.string(), record_to_json(r));
  }
}

// --- prompt templates -----------------------------------------------------------------

const std::string_view kRewritePromptTemplate =
    "Below is an instruction data containing the user's instruction. I would like to generate a speech version "
    "of this instruction for training a large language model that supports speech input. Therefore, please "
    "rewrite my instruction data according to the following requirements:\n"
    "\n"
    "1. Modify the instruction to simulate human speech, adding fillers as appropriate (but not too many "
    "'you know', 'like', etc.).\n"
    "\n"
    "2. The question should not contain content that cannot be synthesized by the TTS model. Numbers should be "
    "written in English words rather than Arabic numerals.\n"
    "\n"
    "3. The question should be relatively brief without excessive verbiage.\n"
    "\n"
    "[instruction]: {instruction}\n"
    "\n"
    "Please output in JSON format as follows: {\"question\": {question}}.";

const std::string_view kResponsePromptTemplate =
    "Below is the transcribed text of a user's speech query. Please provide a response to this question, which "
    "will be converted to speech using TTS. Please follow these requirements for your response:\n"
    "\n"
    "1. Your response should not contain content that cannot be synthesized by the TTS model, such as "
    "parentheses, ordered lists, etc. Numbers should be written in English words rather than Arabic numerals.\n"
    "\n"
    "2. Your response should be very concise and to the point, avoiding lengthy explanations.\n"
    "\n"
    "[instruction]: {instruction}\n"
    "\n"
    "Please output in JSON format as follows: {\"response\": {response}}.";

const std::string_view kScoringPromptTemplate =
    "I need your help to evaluate the performance of several models in the speech interaction scenario. The "
    "models will receive a speech input from the user, which they need to understand and respond to with a speech "
    "output. Your task is to rate the model's responses based on the provided user input transcription "
    "[Instruction] and the model's output transcription [Response]. Please evaluate the response from two "
    "perspectives: content and style, and provide a score for each on a scale of 1 to 5.\n"
    "\n"
    "Content (1-5 points):\n"
    "\n"
    "1 point: The response is largely irrelevant, incorrect, or fails to address the user's query. It may be "
    "off-topic or provide incorrect information.\n"
    "\n"
    "2 points: The response is somewhat relevant but lacks accuracy or completeness. It may only partially answer "
    "the user's question or include extraneous information.\n"
    "\n"
    "3 points: The response is relevant and mostly accurate, but it may lack conciseness or include unnecessary "
    "details that don't contribute to the main point.\n"
    "\n"
    "4 points: The response is relevant, accurate, and concise, providing a clear answer to the user's question "
    "without unnecessary elaboration.\n"
    "\n"
    "5 points: The response is exceptionally relevant, accurate, and to the point. It directly addresses the "
    "user's query in a highly effective and efficient manner, providing exactly the information needed.\n"
    "\n"
    "Style (1-5 points):\n"
    "\n"
    "1 point: The response is poorly suited for speech interaction, possibly including structured elements like "
    "lists or being overly complex, disjointed, or difficult to understand.\n"
    "\n"
    "2 points: The response is somewhat suitable but may be too long, too short, or awkwardly phrased, making it "
    "less effective in a speech interaction context.\n"
    "\n"
    "3 points: The response is generally suitable for speech interaction, but it may have minor issues with "
    "length, clarity, or fluency that detract slightly from the overall effectiveness.\n"
    "\n"
    "4 points: The response is well-suited for speech interaction, with appropriate length, clear language, and a "
    "natural flow. It is easy to understand when spoken aloud.\n"
    "\n"
    "5 points: The response is perfectly suited for speech interaction. It is the ideal length, highly clear, and "
    "flows naturally, making it easy to follow and understand when spoken.\n"
    "\n"
    "Below are the transcription of user's instruction and models' response:\n"
    "\n"
    "### [Instruction]: {instruction}\n"
    "\n"
    "### [Response]: {response}\n"
    "\n"
    "After evaluating, please output the scores in JSON format: {\"content\": content score, \"style\": style "
    "score}. You don't need to provide any explanations. ";

namespace {

// Replaces the single occurrence of `slot`; the value is inserted verbatim.
std::string splice(std::string_view tmpl, std::string_view slot, std::string_view value) {
  std::string out(tmpl);
  const auto at = out.find(slot);
  if (at == std::string::npos) throw StateError("template has no " + std::string(slot) + " slot");
  out.replace(at, slot.size(), value);
  return out;
}

}  // namespace

std::string render_rewrite_prompt(std::string_view instruction) {
  if (instruction.empty()) throw ConfigError("render_rewrite_prompt: empty instruction");
  return splice(kRewritePromptTemplate, "{instruction}", instruction);
}

std::string render_response_prompt(std::string_view instruction) {
  if (instruction.empty()) throw ConfigError("render_response_prompt: empty instruction");
  return splice(kResponsePromptTemplate, "{instruction}", instruction);
}

std::string render_scoring_prompt(std::string_view instruction, std::string_view response) {
  // Splice the response first so an instruction containing "{response}" stays literal.
  const std::string with_response = splice(kScoringPromptTemplate, "{response}", response);
  return splice(with_response, "{instruction}", instruction);
}

std::string parse_model_json(std::string_view raw, std::string_view expected_key) {
  const std::string text(raw);
  for (std::size_t start = text.find('{'); start != std::string::npos; start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false, escaped = false;
    std::size_t end = std::string::npos;
    for (std::size_t i = start; i < text.size(); ++i) {
      const char c = text[i];
      if (in_string) {
        if (escaped) {
          escaped = false;
        } else if (c == '\\') {
          escaped = true;
        } else if (c == '"') {
          in_string = false;
        }
      } else if (c == '"') {
        in_string = true;
      } else if (c == '{') {
        ++depth;
      } else if (c == '}' && --depth == 0) {
        end = i;
        break;
      }
    }
    if (end == std::string::npos) continue;
    json j;
    try {
      j = json::parse(text.substr(start, end - start + 1));
    } catch (const json::parse_error&) {
      continue;
    }
    if (!j.is_object() || j.size() != 1 || !j.contains(std::string(expected_key))) {
      throw ValidationError("model output: expected exactly the key \"" + std::string(expected_key) + "\"", text);
    }
    const json& v = j[std::string(expected_key)];
    if (!v.is_string()) {
      throw ValidationError("model output: \"" + std::string(expected_key) + "\" is not a string", text);
    }
    return v.get<std::string>();
  }
  throw ValidationError("model output: no JSON object found", text);
}

// --- sources --------------------------------------------------------------------------

std::vector<SourceInstruction> load_alpaca(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("alpaca: ") + e.what(), e.byte);
  }
  if (!j.is_array()) throw DatasetError("alpaca: top level must be an array");
  std::vector<SourceInstruction> out;
  for (const auto& item : j) {
    if (!item.is_object() || !item.contains("instruction") || !item["instruction"].is_string()) {
      throw DatasetError("alpaca: item without an instruction string");
    }
    std::string text = item["instruction"].get<std::string>();
    if (item.contains("input") && item["input"].is_string() && !item["input"].get<std::string>().empty()) {
      text += "\n" + item["input"].get<std::string>();
    }
    out.push_back({"alpaca", std::move(text)});
  }
  return out;
}

std::vector<SourceInstruction> load_ultrachat(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<SourceInstruction> out;
  std::size_t offset = 0;
  for (std::string line; std::getline(in, line); offset += line.size() + 1) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("ultrachat: ") + e.what(), offset);
    }
    if (!j.contains("data") || !j["data"].is_array() || j["data"].empty() || !j["data"][0].is_string()) {
      throw DatasetError("ultrachat: line without a first turn at byte " + std::to_string(offset));
    }
    out.push_back({"ultrachat", j["data"][0].get<std::string>()});
  }
  return out;
}

// --- build ----------------------------------------------------------------------------

std::string record_id(const SourceInstruction& s) {
  Fnv1a h;
  h.update(s.source_dataset);
  h.update(std::string_view("\x1f", 1));
  h.update(s.text);
  return h.hex();
}

namespace {

struct Built {
  std::optional<TripletRecord> record;
  FeatureMatrix features;
  std::string failure;
};

std::string call_json(LlmClient& client, const std::string& prompt, std::string_view key, std::size_t attempts) {
  std::string last;
  for (std::size_t a = 0; a < std::max<std::size_t>(attempts, 1); ++a) {
    try {
      return parse_model_json(client.complete(prompt), key);
    } catch (const std::exception& e) {
      last = e.what();
    }
  }
  throw DatasetError(std::string(key) + " failed after " + std::to_string(attempts) + " attempts: " + last);
}

Built build_one(const SourceInstruction& src, const std::string& id, BuildClients clients, const Codebook& codebook,
                const BuildConfig& cfg) {
  Built b;
  try {
    const std::string question = call_json(clients.rewrite, render_rewrite_prompt(src.text), "question",
                                           cfg.max_attempts);
    const std::string answer = call_json(clients.respond, render_response_prompt(question), "response",
                                         cfg.max_attempts);
    Fnv1a h;
    h.update(id);
    const std::string voice = cfg.voices.empty() ? "" : cfg.voices[(h.digest() ^ cfg.seed) % cfg.voices.size()];
    b.features = clients.tts.synthesize(question, voice);
    const FeatureMatrix answer_speech = clients.tts.synthesize(answer, voice);
    TripletRecord r;
    r.id = id;
    r.instruction_text = question;
    r.instruction_features_path = "features/" + id + ".fmat";
    r.response_text = answer;
    r.response_units = answer_speech.empty() ? UnitSequence({}, codebook.size()) : extract_units(answer_speech, codebook);
    r.provenance = {src.source_dataset, clients.rewrite.model_name(), voice};
    b.record = std::move(r);
  } catch (const std::exception& e) {
    b.failure = e.what();
  }
  return b;
}

std::string hash_file(const std::filesystem::path& p) {
  Fnv1a h;
  if (std::filesystem::exists(p)) h.update(read_file_bytes(p));
  return h.hex();
}

void write_manifest(const BuildConfig& cfg, std::size_t count, const std::string& content_hash) {
  const json m = {{"count", count},
                  {"content_hash", content_hash},
                  {"config",
                   {{"max_attempts", cfg.max_attempts},
                    {"concurrency", cfg.concurrency},
                    {"seed", cfg.seed},
                    {"voices", cfg.voices}}}};
  const auto tmp = cfg.out_dir / "manifest.json.tmp";
  {
    std::ofstream out(tmp);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << m.dump(2) << '\n';
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, cfg.out_dir / "manifest.json");
}

}  // namespace

BuildReport build_dataset(const std::vector<SourceInstruction>& sources, BuildClients clients,
                          const Codebook& codebook, const BuildConfig& cfg) {
  if (cfg.out_dir.empty()) throw ConfigError("build_dataset: out_dir is required");
  std::filesystem::create_directories(cfg.out_dir / "features");
  const auto records_path = cfg.out_dir / "records.jsonl";

  std::set<std::string> present;
  std::size_t total = 0;
  if (std::filesystem::exists(records_path)) {
    for (const auto& r : read_records(records_path)) {
      present.insert(r.id);
      ++total;
    }
  }

  BuildReport report;
  std::vector<std::size_t> todo;
  std::vector<std::string> ids(sources.size());
  for (std::size_t i = 0; i < sources.size(); ++i) {
    ids[i] = record_id(sources[i]);
    if (present.count(ids[i])) {
      ++report.already_present;
    } else if (std::find_if(todo.begin(), todo.end(), [&](std::size_t t) { return ids[t] == ids[i]; }) != todo.end()) {
      ++report.already_present;  // duplicate within this input
    } else {
      todo.push_back(i);
    }
  }

  std::ofstream sink(records_path, std::ios::app);
  if (!sink) throw IoError("cannot append to " + records_path.string());
  const std::size_t width = std::max<std::size_t>(cfg.concurrency, 1);
  for (std::size_t begin = 0; begin < todo.size(); begin += width) {
    const std::size_t end = std::min(todo.size(), begin + width);
    std::vector<Built> batch(end - begin);
    if (width == 1) {
      batch[0] = build_one(sources[todo[begin]], ids[todo[begin]], clients, codebook, cfg);
    } else {
      std::vector<std::future<Built>> futures;
      for (std::size_t k = begin; k < end; ++k) {
        futures.push_back(std::async(std::launch::async, build_one, std::cref(sources[todo[k]]), std::cref(ids[todo[k]]),
                                     clients, std::cref(codebook), std::cref(cfg)));
      }
      for (std::size_t k = 0; k < futures.size(); ++k) batch[k] = futures[k].get();
    }
    // Single appender, input order.
    for (std::size_t k = 0; k < batch.size(); ++k) {
      const std::size_t idx = todo[begin + k];
      if (!batch[k].record) {
        report.skipped.push_back({idx, sources[idx].text, batch[k].failure});
        continue;
      }
      write_fmat(cfg.out_dir / batch[k].record->instruction_features_path, batch[k].features);
      sink << record_to_json(*batch[k].record) << '\n';
      sink.flush();
      if (!sink) throw IoError("write failed for " + records_path.string());
      ++report.added;
      ++total;
      write_manifest(cfg, total, hash_file(records_path));
    }
  }
  sink.close();
  report.total_records = total;
  report.content_hash = hash_file(records_path);
  write_manifest(cfg, total, report.content_hash);
  return report;
}

// --- toy data -------------------------------------------------------------------------

std::vector<std::string> toy_word_list(std::size_t n) {
  static const char* const kWords[] = {
      "apple", "river", "stone", "cloud",  "green", "light", "music", "paper", "table", "water", "house", "bird",
      "train", "smile", "night", "chair",  "sugar", "plant", "ocean", "dream", "storm", "bread", "glass", "horse",
      "tiger", "lemon", "candle", "forest", "silver", "window", "garden", "pencil", "rocket", "shadow", "winter",
      "valley", "copper", "island", "marble", "planet", "castle", "meadow", "harbor", "violet", "summer", "basket",
      "mirror", "thunder"};
  if (n > std::size(kWords)) {
    throw ConfigError("toy data: at most " + std::to_string(std::size(kWords)) + " words available");
  }
  return {kWords, kWords + n};
}

ToyDataset synth_toy_dataset(const ToyDatasetConfig& cfg) {
  if (cfg.n == 0) throw ConfigError("synth_toy_dataset: n must be >= 1");
  if (cfg.vocab < 2) throw ConfigError("synth_toy_dataset: need at least 2 words");
  if (cfg.unit_vocab < 2) throw ConfigError("synth_toy_dataset: need at least 2 units");
  if (cfg.min_words == 0 || cfg.min_words > cfg.max_words) throw ConfigError("synth_toy_dataset: bad word range");
  std::mt19937_64 rng(cfg.seed);
  ToyDataset ds;
  ds.words = toy_word_list(cfg.vocab);

  std::uniform_int_distribution<std::size_t> unit(0, cfg.unit_vocab - 1);
  std::uniform_int_distribution<std::size_t> plen(2, 3);
  std::set<std::vector<std::size_t>> used;
  for (const auto& w : ds.words) {
    std::vector<std::size_t> p;
    do {
      p.assign(plen(rng), 0);
      for (std::size_t i = 0; i < p.size(); ++i) {
        do {
          p[i] = unit(rng);
        } while (i > 0 && p[i] == p[i - 1]);
      }
    } while (used.count(p));
    used.insert(p);
    ds.lexicon[w] = p;
  }

  // One cycle through all words, so chains never revisit a word early.
  std::vector<std::size_t> cycle(cfg.vocab);
  std::iota(cycle.begin(), cycle.end(), 0);
  std::shuffle(cycle.begin(), cycle.end(), rng);
  for (std::size_t i = 0; i < cfg.vocab; ++i) {
    ds.successor[ds.words[cycle[i]]] = ds.words[cycle[(i + 1) % cfg.vocab]];
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  std::map<std::string, std::vector<double>> proto;
  for (const auto& w : ds.words) {
    auto& v = proto[w];
    for (std::size_t d = 0; d < cfg.feature_dim; ++d) v.push_back(normal(rng));
  }

  std::uniform_int_distribution<std::size_t> nwords(cfg.min_words, cfg.max_words);
  std::uniform_int_distribution<std::size_t> pick(0, cfg.vocab - 1);
  std::vector<double> frame(cfg.feature_dim);
  for (std::size_t e = 0; e < cfg.n; ++e) {
    ToyExample ex;
    std::vector<std::string> instr(nwords(rng));
    for (auto& w : instr) w = ds.words[pick(rng)];
    ex.features = FeatureMatrix(0, cfg.feature_dim);
    for (const auto& w : instr) {
      for (std::size_t f = 0; f < cfg.frames_per_word; ++f) {
        for (std::size_t d = 0; d < cfg.feature_dim; ++d) frame[d] = proto[w][d] + cfg.noise * normal(rng);
        ex.features.append_row(frame);
      }
    }
    std::vector<std::string> resp;
    std::string cur = instr.front();
    std::vector<std::size_t> raw;
    for (std::size_t i = 0; i < instr.size(); ++i) {
      cur = ds.successor[cur];
      resp.push_back(cur);
      const auto& p = ds.lexicon[cur];
      raw.insert(raw.end(), p.begin(), p.end());
    }
    auto join = [](const std::vector<std::string>& ws) {
      std::string s;
      for (const auto& w : ws) s += (s.empty() ? "" : " ") + w;
      return s;
    };
    TripletRecord& r = ex.record;
    r.instruction_text = join(instr);
    r.response_text = join(resp);
    r.response_units = merge_consecutive(raw, cfg.unit_vocab);
    r.id = "toy-" + std::to_string(cfg.seed) + "-" + std::to_string(e);
    r.instruction_features_path = "features/" + r.id + ".fmat";
    r.provenance = {"synthetic", "none", "none"};
    ds.examples.push_back(std::move(ex));
  }
  return ds;
}

}  // namespace omni
