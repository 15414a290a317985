#pragma once

// Speech-instruction data construction: prompt templates, strict parsing of
// model JSON, the triplet store, and synthetic toy data for training runs.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "omni/clients.hpp"
#include "omni/feature_matrix.hpp"
#include "omni/transcriber.hpp"
#include "omni/units.hpp"

namespace omni {

struct Provenance {
  std::string source_dataset;
  std::string rewrite_model;
  std::string tts_voice;
  bool operator==(const Provenance&) const = default;
};

struct TripletRecord {
  std::string id;
  std::string instruction_text;
  std::string instruction_features_path;  // relative to the dataset directory
  std::string response_text;
  UnitSequence response_units;
  Provenance provenance;
  bool operator==(const TripletRecord&) const = default;
};

std::string record_to_json(const TripletRecord& r);
// Throws ValidationError on schema violations.
TripletRecord record_from_json(std::string_view line);
std::vector<TripletRecord> read_records(const std::filesystem::path& jsonl);
// Checks the schema and that the features file exists under `dataset_dir`.
void validate_record(const TripletRecord& r, const std::filesystem::path& dataset_dir);

extern const std::string_view kRewritePromptTemplate;
extern const std::string_view kResponsePromptTemplate;
extern const std::string_view kScoringPromptTemplate;  // documentation only; never executed

std::string render_rewrite_prompt(std::string_view instruction);
std::string render_response_prompt(std::string_view instruction);
std::string render_scoring_prompt(std::string_view instruction, std::string_view response);

// Value of `expected_key` from the outermost JSON object in `raw`. Prose
// around the object is ignored; the object must have exactly that one key
// with a string value. Throws ValidationError carrying `raw`.
std::string parse_model_json(std::string_view raw, std::string_view expected_key);

struct SourceInstruction {
  std::string source_dataset;
  std::string text;
};

// Alpaca: JSON array of {"instruction", "input", "output"}.
std::vector<SourceInstruction> load_alpaca(const std::filesystem::path& path);
// UltraChat: JSONL of {"id", "data": [turn, ...]}; the first turn is used.
std::vector<SourceInstruction> load_ultrachat(const std::filesystem::path& path);

struct BuildConfig {
  std::filesystem::path out_dir;
  std::size_t max_attempts = 3;  // per model call; then the item is skipped
  std::size_t concurrency = 1;
  std::uint64_t seed = 1;
  std::vector<std::string> voices{"female", "male"};
};

struct SkippedItem {
  std::size_t index = 0;
  std::string instruction;
  std::string reason;
};

struct BuildReport {
  std::size_t added = 0;
  std::size_t already_present = 0;
  std::vector<SkippedItem> skipped;
  std::size_t total_records = 0;
  std::string content_hash;
};

struct BuildClients {
  LlmClient& rewrite;
  LlmClient& respond;
  TtsClient& tts;
};

// Writes <out_dir>/records.jsonl, <out_dir>/features/<id>.fmat and
// <out_dir>/manifest.json. Records whose id is already stored are not
// rebuilt; the manifest is rewritten after every appended record.
BuildReport build_dataset(const std::vector<SourceInstruction>& sources, BuildClients clients,
                          const Codebook& codebook, const BuildConfig& cfg);

std::string record_id(const SourceInstruction& s);

// --- synthetic data for toy training ---

struct ToyDatasetConfig {
  std::uint64_t seed = 1;
  std::size_t n = 200;
  std::size_t vocab = 20;  // distinct words
  std::size_t unit_vocab = 16;
  std::size_t feature_dim = 16;
  std::size_t frames_per_word = 5;
  std::size_t min_words = 2;
  std::size_t max_words = 4;
  double noise = 0.1;
};

struct ToyExample {
  TripletRecord record;
  FeatureMatrix features;  // raw instruction frames
};

struct ToyDataset {
  std::vector<std::string> words;
  Lexicon lexicon;           // word -> unit pattern
  std::map<std::string, std::string> successor;
  std::vector<ToyExample> examples;
};

// Every word has a fixed unit pattern of 2-3 units and a fixed successor. An
// instruction of w words yields the successor chain of length w starting at
// succ(first word); its units are the merged concatenation of the patterns.
ToyDataset synth_toy_dataset(const ToyDatasetConfig& cfg);

std::vector<std::string> toy_word_list(std::size_t n);

}  // namespace omni
