// omni: streaming speech-response experiments from the command line.
//
// Exit codes: 0 success, 1 runtime failure, 2 usage error.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "omni/data.hpp"
#include "omni/error.hpp"
#include "omni/metrics.hpp"
#include "omni/model.hpp"
#include "omni/pipeline.hpp"
#include "omni/train.hpp"
#include "omni/transcriber.hpp"
#include "omni/units.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace omni;

namespace {

// Raised for bad flag combinations and invalid values; maps to exit code 2.
class UsageError : public std::runtime_error {
  using std::runtime_error::runtime_error;
};

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(p.string() + ": " + e.what(), e.byte);
  }
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw IoError("cannot write " + p.string());
  out << text;
  if (!out) throw IoError("write failed for " + p.string());
}

// --- toy data description stored next to trained models ---

json toy_config_to_json(const ToyDatasetConfig& c) {
  return {{"seed", c.seed},       {"n", c.n},
          {"vocab", c.vocab},     {"unit_vocab", c.unit_vocab},
          {"feature_dim", c.feature_dim}, {"frames_per_word", c.frames_per_word},
          {"min_words", c.min_words},     {"max_words", c.max_words},
          {"noise", c.noise}};
}

ToyDatasetConfig toy_config_from_json(const json& j) {
  ToyDatasetConfig c;
  c.seed = j.value("seed", c.seed);
  c.n = j.value("n", c.n);
  c.vocab = j.value("vocab", c.vocab);
  c.unit_vocab = j.value("unit_vocab", c.unit_vocab);
  c.feature_dim = j.value("feature_dim", c.feature_dim);
  c.frames_per_word = j.value("frames_per_word", c.frames_per_word);
  c.min_words = j.value("min_words", c.min_words);
  c.max_words = j.value("max_words", c.max_words);
  c.noise = j.value("noise", c.noise);
  return c;
}

// --- stream options shared by run and sweep ---

struct StreamOptions {
  std::string config;
  std::string script;
  std::size_t script_index = 0;
  std::string model;
  std::string features;
  std::optional<std::size_t> toy_example;
  std::string omega;
  std::optional<double> encode_ms, prefill_ms, token_ms, vocoder_fixed_ms, vocoder_per_unit_ms;
  bool queue_playback = false;
  bool overlap = false;
  bool wall_clock = false;
  std::uint64_t seed = 1;

  void add_to(CLI::App* app, bool single_omega) {
    app->add_option("--config", config, "JSON file with omega and timing settings; flags override it")
        ->check(CLI::ExistingFile);
    app->add_option("--script,--scripted", script, "JSONL scripted responses with alignments");
    app->add_option("--script-index", script_index, "Which script line to replay (0-based)");
    app->add_option("--model", model, "Trained model directory (written by `omni train`)");
    app->add_option("--features", features, "Instruction frames (FMAT) for the model backend");
    app->add_option("--toy-example", toy_example, "Use toy example N from the model's training data instead");
    if (single_omega) {
      app->add_option("--omega", omega, "Unit chunk size: a positive integer or inf");
    }
    app->add_option("--encode-ms", encode_ms, "Simulated encoder time");
    app->add_option("--prefill-ms", prefill_ms, "Simulated prompt prefill time");
    app->add_option("--token-ms", token_ms, "Simulated time per generated token");
    app->add_option("--vocoder-fixed-ms", vocoder_fixed_ms, "Simulated vocoder cost per chunk");
    app->add_option("--vocoder-per-unit-ms", vocoder_per_unit_ms, "Simulated vocoder cost per unit");
    app->add_flag("--queue-playback", queue_playback, "Chunks wait for the previous chunk to finish playing");
    app->add_flag("--overlap", overlap, "Run the vocoder on a consumer thread");
    app->add_flag("--wall-clock", wall_clock, "Timestamp with the wall clock instead of the simulated clock");
    app->add_option("--seed", seed, "Seed for hashed hidden rows of scripted streams");
  }

  StreamConfig stream_config() const {
    StreamConfig cfg;
    if (!config.empty()) {
      const json j = read_json_file(config);
      if (j.contains("omega")) cfg.omega = Omega::parse(j["omega"].is_string() ? j["omega"].get<std::string>()
                                                                               : j["omega"].dump());
      if (j.contains("timing")) {
        const json& t = j["timing"];
        cfg.timing.encode_ms = t.value("encode_ms", cfg.timing.encode_ms);
        cfg.timing.prefill_ms = t.value("prefill_ms", cfg.timing.prefill_ms);
        cfg.timing.token_ms = t.value("token_ms", cfg.timing.token_ms);
        cfg.timing.vocoder_fixed_ms = t.value("vocoder_fixed_ms", cfg.timing.vocoder_fixed_ms);
        cfg.timing.vocoder_per_unit_ms = t.value("vocoder_per_unit_ms", cfg.timing.vocoder_per_unit_ms);
      }
      cfg.play_immediately = !j.value("queue_playback", !cfg.play_immediately);
      cfg.overlap_vocoder = j.value("overlap", cfg.overlap_vocoder);
    }
    if (!omega.empty()) cfg.omega = Omega::parse(omega);
    if (encode_ms) cfg.timing.encode_ms = *encode_ms;
    if (prefill_ms) cfg.timing.prefill_ms = *prefill_ms;
    if (token_ms) cfg.timing.token_ms = *token_ms;
    if (vocoder_fixed_ms) cfg.timing.vocoder_fixed_ms = *vocoder_fixed_ms;
    if (vocoder_per_unit_ms) cfg.timing.vocoder_per_unit_ms = *vocoder_per_unit_ms;
    if (queue_playback) cfg.play_immediately = false;
    if (overlap) cfg.overlap_vocoder = true;
    if (wall_clock) cfg.clock = ClockMode::Wall;
    cfg.timing.validate();
    return cfg;
  }
};

// Owns whichever generator/decoder pair the flags select.
class Backend {
 public:
  explicit Backend(const StreamOptions& o) {
    if (o.script.empty() == o.model.empty()) throw UsageError("give exactly one of --script or --model");
    if (!o.script.empty()) {
      tokenizer_ = std::make_unique<Tokenizer>(make_toy_tokenizer(script_words(o.script)));
      auto scripts = load_scripts_jsonl(o.script, *tokenizer_, 16, o.seed);
      if (o.script_index >= scripts.size()) {
        throw UsageError("--script-index " + std::to_string(o.script_index) + " but the file has " +
                         std::to_string(scripts.size()) + " scripts");
      }
      Script s = std::move(scripts[o.script_index]);
      if (s.alignments.empty()) throw UsageError("scripted stream has no alignments; use --model to decode");
      decoder_ = std::make_unique<ScriptedAlignmentDecoder>(s.alignment_blocks(), s.alignments.front().size(),
                                                            s.resolved_unit_vocab(), s.hidden.cols());
      generator_ = std::make_unique<ScriptedGenerator>(std::move(s), *tokenizer_);
      instruction_ = FeatureMatrix(1, 1);
      source_id_ = "script-" + std::to_string(o.script_index);
      return;
    }
    model_ = OmniModel::load(o.model);
    generator_ = model_->generator();
    decoder_ = model_->speech_decoder();
    if (o.features.empty() == !o.toy_example.has_value()) {
      throw UsageError("the model backend needs exactly one of --features or --toy-example");
    }
    if (!o.features.empty()) {
      instruction_ = read_fmat(o.features);
      source_id_ = fs::path(o.features).stem().string();
    } else {
      const fs::path data_cfg = fs::path(o.model) / "toy_data.json";
      const ToyDataset ds = synth_toy_dataset(toy_config_from_json(read_json_file(data_cfg)));
      if (*o.toy_example >= ds.examples.size()) throw UsageError("--toy-example out of range");
      instruction_ = ds.examples[*o.toy_example].features;
      source_id_ = ds.examples[*o.toy_example].record.id;
      reference_ = ds.examples[*o.toy_example].record.response_text;
    }
  }

  StreamResult run(const StreamConfig& cfg) {
    MockVocoder voc;
    return run_stream(instruction_, source_id_, {*generator_, *decoder_, voc}, cfg);
  }

  std::size_t unit_vocab() const { return decoder_->unit_vocab(); }
  const std::string& reference() const { return reference_; }

 private:
  // Words used in a script file, so the tokenizer keeps them word-level.
  static std::vector<std::string> script_words(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open " + p.string());
    std::vector<std::string> words;
    for (std::string line; std::getline(in, line);) {
      try {
        const json j = json::parse(line);
        if (j.contains("tokens")) {
          for (const auto& t : j["tokens"])
            if (t.is_string()) words.push_back(t.get<std::string>());
        }
      } catch (const json::exception&) {
        // Reported with its offset by the script loader.
      }
    }
    return words;
  }

  std::unique_ptr<Tokenizer> tokenizer_;
  std::unique_ptr<OmniModel> model_;
  std::unique_ptr<ResponseGenerator> generator_;
  std::unique_ptr<UnitDecoder> decoder_;
  FeatureMatrix instruction_;
  std::string source_id_;
  std::string reference_;
};

json summary_of(const StreamResult& r) {
  json s = {{"lagging_words", r.lagging_words},
            {"n_units", r.units.size()},
            {"n_chunks", r.chunks.size()},
            {"text", r.text.text}};
  s["latency_ms"] = r.latency_ms ? json(*r.latency_ms) : json(nullptr);
  return s;
}

// Units read back from the streamed audio scored against the decoded units,
// one unit per word.
double unit_error_proxy(const StreamResult& r, std::size_t vocab) {
  if (r.units.empty()) return 0.0;
  const MockTranscriber tr(MockVocoderConfig{}, vocab, {});
  auto as_text = [](const std::vector<std::size_t>& u) {
    std::string s;
    for (std::size_t x : u) s += "u" + std::to_string(x) + " ";
    return s;
  };
  return wer(as_text(r.units.values()), as_text(tr.recover_units(r.waveform))).rate;
}

// --- run ---

int cmd_run(const StreamOptions& o, const std::string& out_dir) {
  Backend backend(o);
  const StreamConfig cfg = o.stream_config();
  const StreamResult r = backend.run(cfg);
  const fs::path out(out_dir);
  fs::create_directories(out);
  write_wav(out / "response.wav", r.waveform);
  write_text(out / "events.jsonl", events_to_jsonl(r.events));
  json summary = summary_of(r);
  summary["omega"] = cfg.omega.str();
  if (!backend.reference().empty()) summary["reference_text"] = backend.reference();
  write_text(out / "summary.json", summary.dump(2) + "\n");
  std::cout << summary.dump() << "\n";
  return 0;
}

// --- sweep ---

std::string render_svg(const std::vector<std::pair<std::string, double>>& points) {
  const double w = 480, h = 300, pad = 50;
  double hi = 1.0;
  for (const auto& p : points) hi = std::max(hi, p.second);
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << h - pad << "\" x2=\"" << w - pad / 2 << "\" y2=\"" << h - pad
    << "\" stroke=\"black\"/>\n"
    << "<line x1=\"" << pad << "\" y1=\"" << pad / 2 << "\" x2=\"" << pad << "\" y2=\"" << h - pad
    << "\" stroke=\"black\"/>\n"
    << "<text x=\"" << w / 2 << "\" y=\"" << h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">omega</text>\n"
    << "<text x=\"12\" y=\"" << h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 " << h / 2
    << ")\" text-anchor=\"middle\">latency (ms)</text>\n";
  const double step = points.size() > 1 ? (w - 1.5 * pad) / static_cast<double>(points.size() - 1) : 0;
  std::string path;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double x = pad + step * static_cast<double>(i);
    const double y = h - pad - (h - 1.5 * pad) * points[i].second / hi;
    path += (i ? " L " : "M ") + std::to_string(x) + " " + std::to_string(y);
    s << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"3\" fill=\"steelblue\"/>\n"
      << "<text x=\"" << x << "\" y=\"" << h - pad + 16 << "\" text-anchor=\"middle\" font-size=\"11\">"
      << points[i].first << "</text>\n"
      << "<text x=\"" << x << "\" y=\"" << y - 8 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << static_cast<long long>(std::llround(points[i].second)) << "</text>\n";
  }
  s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"steelblue\"/>\n</svg>\n";
  return s.str();
}

int cmd_sweep(const StreamOptions& o, const std::string& omegas, const std::string& csv_path,
              const std::string& svg_path) {
  std::vector<Omega> grid;
  std::stringstream ss(omegas);
  for (std::string item; std::getline(ss, item, ',');) grid.push_back(Omega::parse(item));
  if (grid.empty()) throw UsageError("--omega needs at least one value");

  Backend backend(o);
  StreamConfig cfg = o.stream_config();
  std::ostringstream csv;
  csv << "omega,latency_ms,lagging_words,asr_wer_proxy,n_chunks\n";
  std::vector<std::pair<std::string, double>> points;
  for (const Omega& om : grid) {
    cfg.omega = om;
    const StreamResult r = backend.run(cfg);
    const double lat = r.latency_ms.value_or(0.0);
    csv << om.str() << "," << lat << "," << r.lagging_words << "," << unit_error_proxy(r, backend.unit_vocab())
        << "," << r.chunks.size() << "\n";
    points.emplace_back(om.str(), lat);
  }
  if (csv_path.empty()) {
    std::cout << csv.str();
  } else {
    write_text(csv_path, csv.str());
  }
  if (!svg_path.empty()) write_text(svg_path, render_svg(points));
  return 0;
}

// --- train ---

struct TrainOptions {
  int stage = 0;
  std::string config;
  std::string init;
  std::string out;
  std::string loss_csv;
  std::optional<std::size_t> batch_size, epochs;
  std::optional<double> lr;
  std::optional<std::uint64_t> seed;
};

int cmd_train(const TrainOptions& o) {
  const json j = o.config.empty() ? json::object() : read_json_file(o.config);
  const int stage = o.stage ? o.stage : j.value("stage", 0);
  if (stage != 1 && stage != 2) throw UsageError("--stage must be 1 or 2");
  TrainConfig cfg = TrainConfig::defaults(stage);
  cfg.batch_size = j.value("batch_size", cfg.batch_size);
  cfg.epochs = j.value("epochs", cfg.epochs);
  cfg.peak_lr = j.value("peak_lr", cfg.peak_lr);
  cfg.warmup_fraction = j.value("warmup_fraction", cfg.warmup_fraction);
  cfg.seed = j.value("seed", cfg.seed);
  if (o.batch_size) cfg.batch_size = *o.batch_size;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (o.lr) cfg.peak_lr = *o.lr;
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();

  const ToyDatasetConfig data_cfg = toy_config_from_json(j.value("data", json::object()));
  const ToyDataset ds = synth_toy_dataset(data_cfg);
  const std::size_t n_train = std::min<std::size_t>(j.value("train_items", ds.examples.size()), ds.examples.size());

  std::unique_ptr<OmniModel> model;
  if (!o.init.empty()) {
    model = OmniModel::load(o.init);
  } else {
    if (stage == 2) std::cerr << "warning: stage 2 without --init trains a decoder on an untrained LM\n";
    OmniConfig mc = OmniConfig::toy(data_cfg.unit_vocab);
    mc.seed = j.value("model_seed", mc.seed);
    model = std::make_unique<OmniModel>(mc, make_toy_tokenizer(ds.words));
  }
  const auto items = make_train_items(ds.examples, model->tokenizer());
  const std::vector<TrainItem> train(items.begin(), items.begin() + static_cast<std::ptrdiff_t>(n_train));
  const std::vector<TrainItem> held(items.begin() + static_cast<std::ptrdiff_t>(n_train), items.end());

  std::ostringstream csv;
  csv << "step,loss,lr\n";
  auto on_step = [&](const LossPoint& p) {
    csv << p.step << "," << p.loss << "," << p.lr << "\n";
    if (p.step % 25 == 0) std::cerr << "step " << p.step << " loss " << p.loss << " lr " << p.lr << "\n";
  };
  const TrainResult r = stage == 1 ? train_stage1(*model, train, cfg, on_step) : train_stage2(*model, train, cfg, on_step);

  if (!o.loss_csv.empty()) write_text(o.loss_csv, csv.str());
  json report = {{"stage", stage}, {"steps", r.curve.size()}, {"epoch_loss", r.epoch_loss}, {"aborted", r.aborted}};
  if (r.aborted) report["abort_reason"] = r.abort_reason;
  report["frozen_unchanged"] = r.frozen_before == r.frozen_after;
  if (stage == 2 && !held.empty()) report["heldout_unit_accuracy"] = unit_accuracy(*model, held);
  if (!o.out.empty()) {
    model->save(o.out);
    write_text(fs::path(o.out) / "toy_data.json", toy_config_to_json(data_cfg).dump(2) + "\n");
  }
  std::cout << report.dump() << "\n";
  return r.aborted ? 1 : 0;
}

// --- score ---

int cmd_score(const std::string& reference, const std::string& hypothesis, const std::string& input,
              const std::string& out) {
  if (input.empty()) {
    const auto w = wer(reference, hypothesis);
    const auto c = cer(reference, hypothesis);
    std::printf("wer=%.6f cer=%.6f\n", w.rate, c.rate);
    return 0;
  }
  std::ifstream in(input);
  if (!in) throw IoError("cannot open " + input);
  std::vector<ErrorRateReport> words, chars;
  std::size_t offset = 0;
  for (std::string line; std::getline(in, line); offset += line.size() + 1) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ParseError(std::string("score: ") + e.what(), offset);
    }
    const std::string ref = j.at("reference").get<std::string>(), hyp = j.at("hypothesis").get<std::string>();
    words.push_back(wer(ref, hyp));
    chars.push_back(cer(ref, hyp));
  }
  auto to_json = [](const ErrorRateReport& r) {
    return json{{"rate", r.rate},
                {"substitutions", r.substitutions},
                {"insertions", r.insertions},
                {"deletions", r.deletions},
                {"reference_len", r.reference_len}};
  };
  const json report = {{"pairs", words.size()}, {"wer", to_json(aggregate(words))}, {"cer", to_json(aggregate(chars))}};
  if (out.empty()) {
    std::cout << report.dump(2) << "\n";
  } else {
    write_text(out, report.dump(2) + "\n");
  }
  return 0;
}

// --- build-data ---

struct BuildOptions {
  std::vector<std::string> sources;
  bool stub = false;
  std::string out;
  std::string codebook;
  std::size_t units = 16;
  std::size_t max_attempts = 3;
  std::size_t concurrency = 1;
  std::uint64_t seed = 1;
  std::string llm_host = "127.0.0.1";
  int llm_port = 8000;
  std::string llm_model = "llama-3-70b-instruct";
  std::string tts_host = "127.0.0.1";
  int tts_port = 8001;
  std::size_t tts_dim = 16;
};

std::vector<SourceInstruction> load_source(const std::string& arg) {
  std::string kind, path = arg;
  if (const auto colon = arg.find(':'); colon != std::string::npos && !fs::exists(arg)) {
    kind = arg.substr(0, colon);
    path = arg.substr(colon + 1);
  } else {
    kind = fs::path(arg).extension() == ".jsonl" ? "ultrachat" : "alpaca";
  }
  if (kind == "alpaca") return load_alpaca(path);
  if (kind == "ultrachat") return load_ultrachat(path);
  throw UsageError("unknown source kind '" + kind + "' (use alpaca: or ultrachat:)");
}

int cmd_build_data(const BuildOptions& o) {
  std::vector<SourceInstruction> sources;
  for (const auto& s : o.sources) {
    auto part = load_source(s);
    sources.insert(sources.end(), part.begin(), part.end());
  }
  std::unique_ptr<LlmClient> llm;
  std::unique_ptr<TtsClient> tts;
  if (o.stub) {
    llm = std::make_unique<StubLlmClient>();
    tts = std::make_unique<StubTtsClient>(o.tts_dim);
  } else {
    llm = std::make_unique<HttpLlmClient>(o.llm_host, o.llm_port, o.llm_model);
    tts = std::make_unique<HttpTtsClient>(o.tts_host, o.tts_port, o.tts_dim);
  }
  Codebook cb;
  if (!o.codebook.empty()) {
    cb = load_codebook(o.codebook);
  } else {
    // Fit units on the instruction speech itself.
    FeatureMatrix pts(0, tts->feature_dim());
    for (std::size_t i = 0; i < std::min<std::size_t>(sources.size(), 32); ++i) {
      pts.append_rows(tts->synthesize(sources[i].text, "female"));
    }
    cb = kmeans_fit(pts, o.units, o.seed).codebook;
    fs::create_directories(o.out);
    save_codebook(fs::path(o.out) / "codebook", cb);
  }
  BuildConfig cfg;
  cfg.out_dir = o.out;
  cfg.max_attempts = o.max_attempts;
  cfg.concurrency = o.concurrency;
  cfg.seed = o.seed;
  const BuildReport rep = build_dataset(sources, {*llm, *llm, *tts}, cb, cfg);
  json skipped = json::array();
  for (const auto& s : rep.skipped) {
    std::cerr << "skipped item " << s.index << ": " << s.reason << "\n";
    skipped.push_back({{"index", s.index}, {"instruction", s.instruction}, {"reason", s.reason}});
  }
  std::cout << json{{"added", rep.added},
                    {"already_present", rep.already_present},
                    {"skipped", skipped},
                    {"total_records", rep.total_records},
                    {"content_hash", rep.content_hash}}
                   .dump()
            << "\n";
  return 0;
}

// --- quantize ---

int cmd_quantize(const std::vector<std::string>& features, const std::string& codebook, std::optional<std::size_t> fit,
                 std::uint64_t seed, const std::string& out) {
  Codebook cb;
  if (fit) {
    FeatureMatrix pts;
    for (const auto& f : features) {
      const FeatureMatrix m = read_fmat(f);
      if (pts.cols() == 0) pts = FeatureMatrix(0, m.cols());
      pts.append_rows(m);
    }
    const KMeansResult res = kmeans_fit(pts, *fit, seed);
    cb = res.codebook;
    save_codebook(codebook, cb);
    std::cerr << "fitted " << *fit << " centroids, inertia " << res.inertia.back() << "\n";
  } else {
    cb = load_codebook(codebook);
  }
  json result = json::array();
  for (const auto& f : features) {
    const UnitSequence u = extract_units(read_fmat(f), cb);
    result.push_back({{"features", f}, {"units", u.values()}, {"unit_vocab", u.vocab()}});
  }
  const std::string text = (result.size() == 1 ? result[0] : result).dump() + "\n";
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Streaming speech-response experiments: scripted or trained backends, omega sweeps, toy training, "
               "metrics and instruction-data construction."};
  app.require_subcommand(1);
  app.set_version_flag("--version", "omni 0.1.0");

  StreamOptions run_opts;
  std::string run_out = "omni_run";
  auto* run = app.add_subcommand("run", "Stream one response and write response.wav, events.jsonl, summary.json");
  run_opts.add_to(run, true);
  run->add_option("--out", run_out, "Output directory");

  StreamOptions sweep_opts;
  std::string omegas = "10,20,40,60,80,100,inf", csv_path, svg_path;
  auto* sweep = app.add_subcommand("sweep", "Latency and lagging words over a grid of chunk sizes");
  sweep_opts.add_to(sweep, false);
  sweep->add_option("--omega", omegas, "Comma-separated chunk sizes, e.g. 1,2,4,inf");
  sweep->add_option("--csv", csv_path, "CSV output (stdout when omitted)");
  sweep->add_option("--svg", svg_path, "Optional latency plot");

  TrainOptions train_opts;
  auto* train = app.add_subcommand("train", "Train on the synthetic toy dataset");
  train->add_option("--stage", train_opts.stage, "1: adaptor + LM; 2: speech decoder")->check(CLI::IsMember({1, 2}));
  train->add_option("--config", train_opts.config, "Training JSON (batch_size, epochs, peak_lr, data, ...)")
      ->check(CLI::ExistingFile);
  train->add_option("--init", train_opts.init, "Start from this model directory");
  train->add_option("--out", train_opts.out, "Save the trained model here");
  train->add_option("--loss-csv", train_opts.loss_csv, "Per-step loss curve (step, loss, lr)");
  train->add_option("--batch-size", train_opts.batch_size, "Override batch size");
  train->add_option("--epochs", train_opts.epochs, "Override epochs");
  train->add_option("--lr", train_opts.lr, "Override peak learning rate");
  train->add_option("--seed", train_opts.seed, "Override shuffling seed");

  std::string reference, hypothesis, score_in, score_out;
  auto* score = app.add_subcommand("score", "WER/CER for one pair or a JSONL file of {reference, hypothesis}");
  score->add_option("--reference", reference, "Reference text");
  score->add_option("--hypothesis", hypothesis, "Hypothesis text");
  score->add_option("--input", score_in, "JSONL pairs; prints a pooled JSON report");
  score->add_option("--out", score_out, "Write the JSON report here");

  BuildOptions build_opts;
  auto* build = app.add_subcommand("build-data", "Rewrite, answer and synthesize instruction data");
  build->add_option("--source", build_opts.sources, "alpaca:PATH or ultrachat:PATH (repeatable)")->required();
  build->add_flag("--stub-clients", build_opts.stub, "Offline stub LLM and TTS");
  build->add_option("--out", build_opts.out, "Dataset directory")->required();
  build->add_option("--codebook", build_opts.codebook, "Codebook stem; fitted on the fly when omitted");
  build->add_option("--units", build_opts.units, "Codebook size when fitting");
  build->add_option("--max-attempts", build_opts.max_attempts, "Attempts per model call before skipping");
  build->add_option("--concurrency", build_opts.concurrency, "Items processed in parallel");
  build->add_option("--seed", build_opts.seed, "Seed for voices and codebook fitting");
  build->add_option("--llm-host", build_opts.llm_host, "Chat-completions host");
  build->add_option("--llm-port", build_opts.llm_port, "Chat-completions port");
  build->add_option("--llm-model", build_opts.llm_model, "Model name sent to the LLM service");
  build->add_option("--tts-host", build_opts.tts_host, "TTS host");
  build->add_option("--tts-port", build_opts.tts_port, "TTS port");
  build->add_option("--tts-dim", build_opts.tts_dim, "Feature width returned by the TTS");

  std::vector<std::string> q_features;
  std::string q_codebook, q_out;
  std::optional<std::size_t> q_fit;
  std::uint64_t q_seed = 1;
  auto* quant = app.add_subcommand("quantize", "Map FMAT features to deduplicated unit sequences");
  quant->add_option("--features", q_features, "FMAT files")->required();
  quant->add_option("--codebook", q_codebook, "Codebook stem (<stem>.fmat + <stem>.json)")->required();
  quant->add_option("--fit", q_fit, "Fit a codebook of this size on the features first and save it");
  quant->add_option("--seed", q_seed, "k-means seed");
  quant->add_option("--out", q_out, "Write JSON here instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) return cmd_run(run_opts, run_out);
    if (*sweep) return cmd_sweep(sweep_opts, omegas, csv_path, svg_path);
    if (*train) return cmd_train(train_opts);
    if (*score) {
      if (score_in.empty() && (reference.empty() || !score->count("--hypothesis"))) {
        throw UsageError("give --reference and --hypothesis, or --input");
      }
      return cmd_score(reference, hypothesis, score_in, score_out);
    }
    if (*build) return cmd_build_data(build_opts);
    if (*quant) return cmd_quantize(q_features, q_codebook, q_fit, q_seed, q_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
