#include "omni/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <exception>
#include <mutex>
#include <thread>

#include <json.hpp>

namespace omni {

Omega::Omega(std::size_t n) : n_(n), infinite_(false) {
  if (n == 0) throw ConfigError("omega must be >= 1 or infinite");
}

Omega Omega::parse(std::string_view text) {
  std::string t(text);
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (t == "inf" || t == "+inf" || t == "infinity" || t == "+infinity") return infinite();
  std::size_t n = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), n);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError("omega: cannot parse '" + std::string(text) + "'");
  }
  return Omega(n);
}

std::size_t Omega::value() const {
  if (infinite_) throw StateError("omega: infinite has no finite value");
  return n_;
}

std::string Omega::str() const { return infinite_ ? "inf" : std::to_string(n_); }

void TimingModel::validate() const {
  for (double v : {encode_ms, prefill_ms, token_ms, vocoder_fixed_ms, vocoder_per_unit_ms}) {
    if (!(v >= 0.0)) throw ConfigError("timing model: all durations must be non-negative");
  }
}

std::string_view event_kind_name(EventKind k) {
  switch (k) {
    case EventKind::TokenEmitted: return "TOKEN_EMITTED";
    case EventKind::ChunkDispatched: return "CHUNK_DISPATCHED";
    case EventKind::AudioPlayable: return "AUDIO_PLAYABLE";
    case EventKind::Eos: return "EOS";
  }
  return "?";
}

namespace {

using SteadyClock = std::chrono::steady_clock;

double ms_since(SteadyClock::time_point t0) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - t0).count();
}

struct SynthJob {
  std::size_t chunk = 0;
  std::vector<std::size_t> units;
};

struct SynthOutcome {
  Waveform wave;
  double done_ms = 0.0;
  std::exception_ptr error;
};

// Single consumer, jobs synthesized strictly in submission order.
class SynthWorker {
 public:
  SynthWorker(Vocoder& vocoder, SteadyClock::time_point t0) : vocoder_(vocoder), t0_(t0) {
    thread_ = std::thread([this] { loop(); });
  }
  ~SynthWorker() { finish(); }

  void submit(SynthJob job) {
    {
      std::lock_guard lock(mu_);
      queue_.push_back(std::move(job));
      outcomes_.emplace_back();
    }
    cv_.notify_one();
  }

  std::vector<SynthOutcome> finish() {
    {
      std::lock_guard lock(mu_);
      closed_ = true;
    }
    cv_.notify_one();
    if (thread_.joinable()) thread_.join();
    return std::move(outcomes_);
  }

 private:
  void loop() {
    bool failed = false;
    while (true) {
      SynthJob job;
      {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [this] { return closed_ || !queue_.empty(); });
        if (queue_.empty()) return;
        job = std::move(queue_.front());
        queue_.pop_front();
      }
      SynthOutcome out;
      if (failed) {
        out.error = std::make_exception_ptr(StateError("vocoder: skipped after earlier failure"));
      } else {
        try {
          out.wave = vocoder_.synthesize(job.units);
        } catch (...) {
          out.error = std::current_exception();
          failed = true;
        }
      }
      out.done_ms = ms_since(t0_);
      std::lock_guard lock(mu_);
      outcomes_[job.chunk] = std::move(out);
    }
  }

  Vocoder& vocoder_;
  SteadyClock::time_point t0_;
  std::mutex mu_;
  std::condition_variable cv_;
  std::deque<SynthJob> queue_;
  std::vector<SynthOutcome> outcomes_;
  bool closed_ = false;
  std::thread thread_;
};

std::string describe(const std::exception_ptr& e) {
  try {
    std::rethrow_exception(e);
  } catch (const std::exception& ex) {
    return ex.what();
  } catch (...) {
    return "unknown error";
  }
}

void finalize(StreamResult& r, const Tokenizer& tokenizer) {
  std::stable_sort(r.events.begin(), r.events.end(),
                   [](const StreamEvent& a, const StreamEvent& b) { return a.t_ms < b.t_ms; });
  r.text.text = tokenizer.detokenize(r.text.tokens);
  r.latency_ms = r.events.empty() ? std::nullopt : latency_of(r.events);
  r.lagging_words = r.events.empty() ? 0 : lagging_words_of(r.events, tokenizer);
}

}  // namespace

StreamResult run_stream(const FeatureMatrix& instruction, const std::string& source_id, StreamModels models,
                        const StreamConfig& cfg) {
  cfg.timing.validate();
  auto& gen = models.generator;
  auto& dec = models.decoder;
  if (gen.hidden_dim() != dec.input_dim()) {
    throw ConfigError("run_stream: generator hidden size " + std::to_string(gen.hidden_dim()) +
                      " != decoder input size " + std::to_string(dec.input_dim()));
  }
  const Tokenizer& tokenizer = gen.tokenizer();
  const bool simulated = cfg.clock == ClockMode::Simulated;
  const std::size_t vocab = dec.unit_vocab();
  const auto t0 = SteadyClock::now();

  StreamResult r;
  r.units = UnitSequence({}, vocab);
  r.logits = FeatureMatrix(0, vocab + 1);
  dec.reset();

  // Speech-side features are a pure function of the input: computed once.
  auto source = gen.start(instruction, source_id);
  double t = simulated ? cfg.timing.encode_ms + cfg.timing.prefill_ms : ms_since(t0);

  double vocoder_free = 0.0;
  double playback_end = 0.0;
  std::unique_ptr<SynthWorker> worker;
  if (cfg.overlap_vocoder) worker = std::make_unique<SynthWorker>(models.vocoder, t0);

  auto fail = [&](const std::string& what) -> DispatchError {
    StreamResult partial = r;
    finalize(partial, tokenizer);
    return DispatchError(what, std::move(partial));
  };

  auto place_audio = [&](Chunk& c, const Waveform& wave, double ready) {
    c.sample_begin = r.waveform.samples.size();
    r.waveform.append(wave);
    c.sample_end = r.waveform.samples.size();
    c.playable_ms = cfg.play_immediately ? ready : std::max(ready, playback_end);
    playback_end = c.playable_ms + wave.duration_ms();
    r.events.push_back({EventKind::AudioPlayable, c.playable_ms, c.sample_begin, c.sample_end});
  };

  std::size_t j = 0;  // units already dispatched
  auto dispatch = [&](std::size_t end) {
    Chunk c;
    c.unit_begin = j;
    c.unit_end = end;
    c.dispatched_ms = simulated ? t : ms_since(t0);
    r.events.push_back({EventKind::ChunkDispatched, c.dispatched_ms, j, end});
    std::vector<std::size_t> span(r.units.values().begin() + static_cast<std::ptrdiff_t>(j),
                                  r.units.values().begin() + static_cast<std::ptrdiff_t>(end));
    // Simulated vocoder: one sequential resource.
    double ready = std::max(c.dispatched_ms, vocoder_free) + cfg.timing.vocoder_fixed_ms;
    ready += static_cast<double>(end - j) * cfg.timing.vocoder_per_unit_ms;
    vocoder_free = ready;
    j = end;
    if (worker) {
      c.playable_ms = ready;
      r.chunks.push_back(c);
      worker->submit({r.chunks.size() - 1, std::move(span)});
      return;
    }
    Waveform wave;
    try {
      wave = models.vocoder.synthesize(span);
    } catch (const std::exception& e) {
      throw fail(std::string("vocoder failed on chunk ") + std::to_string(r.chunks.size()) + ": " + e.what());
    }
    place_audio(c, wave, simulated ? ready : ms_since(t0));
    r.chunks.push_back(c);
  };

  while (!source->exhausted()) {
    const GeneratedToken tok = source->generate_next();
    if (simulated) {
      t += tok.delay_ms.value_or(cfg.timing.token_ms);
    } else {
      if (tok.delay_ms) std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(*tok.delay_ms));
      t = ms_since(t0);
    }
    r.text.tokens.push_back(tok.id);
    r.events.push_back({EventKind::TokenEmitted, t, tok.id, 0});
    if (tok.hidden.size() != dec.input_dim()) {
      throw ConfigError("run_stream: hidden row of width " + std::to_string(tok.hidden.size()) + ", decoder expects " +
                        std::to_string(dec.input_dim()));
    }
    // The EOS position contributes its block like any other token.
    r.logits.append_rows(dec.extend(tok.hidden));
    if (!simulated) t = ms_since(t0);

    UnitSequence units = units_for_prefix(r.logits);
    for (std::size_t u = 0; u < j; ++u) {
      if (units[u] != r.units[u]) throw StateError("run_stream: dispatched units changed");
    }
    r.units = std::move(units);
    if (cfg.omega.reached(r.units.size() - j)) dispatch(r.units.size());

    if (tok.id == tokenizer.eos_id()) {
      r.text.eos_seen = true;
      r.events.push_back({EventKind::Eos, t, r.text.tokens.size(), 0});
    }
  }
  if (r.units.size() > j) dispatch(r.units.size());

  if (!r.text.tokens.empty() && r.text.tokens.back() == tokenizer.eos_id()) r.text.tokens.pop_back();

  if (worker) {
    auto outcomes = worker->finish();
    auto chunks = std::move(r.chunks);
    r.chunks.clear();
    for (std::size_t i = 0; i < chunks.size(); ++i) {
      if (outcomes[i].error) {
        throw fail("vocoder failed on chunk " + std::to_string(i) + ": " + describe(outcomes[i].error));
      }
      Chunk c = chunks[i];
      place_audio(c, outcomes[i].wave, simulated ? c.playable_ms : outcomes[i].done_ms);
      r.chunks.push_back(c);
    }
  }
  finalize(r, tokenizer);
  return r;
}

std::optional<double> latency_of(std::span<const StreamEvent> events) {
  if (events.empty()) throw StateError("latency_of: empty event log");
  for (const auto& e : events) {
    if (e.kind == EventKind::AudioPlayable) return e.t_ms;
  }
  return std::nullopt;
}

std::size_t lagging_words_of(std::span<const StreamEvent> events, const Tokenizer& tokenizer) {
  if (events.empty()) throw StateError("lagging_words_of: empty event log");
  std::vector<std::size_t> ids;
  for (const auto& e : events) {
    if (e.kind == EventKind::AudioPlayable) break;
    if (e.kind == EventKind::TokenEmitted) ids.push_back(e.a);
  }
  return split_words(tokenizer.detokenize(ids)).size();
}

std::optional<double> analytic_latency(const StreamConfig& cfg, const Alignment& alignment, std::size_t lambda,
                                       std::span<const double> delays_ms) {
  if (lambda == 0 || alignment.size() % lambda != 0) {
    throw LengthError("analytic_latency: alignment length " + std::to_string(alignment.size()) +
                      " is not a multiple of lambda " + std::to_string(lambda));
  }
  const std::size_t m = alignment.size() / lambda;
  if (!delays_ms.empty() && delays_ms.size() != m) {
    throw LengthError("analytic_latency: " + std::to_string(delays_ms.size()) + " delays for " + std::to_string(m) +
                      " tokens");
  }
  const auto& tm = cfg.timing;
  double t = tm.encode_ms + tm.prefill_ms;
  for (std::size_t i = 1; i <= m; ++i) {
    t += delays_ms.empty() ? tm.token_ms : delays_ms[i - 1];
    Alignment prefix{std::vector<std::size_t>(alignment.tokens.begin(),
                                              alignment.tokens.begin() + static_cast<std::ptrdiff_t>(lambda * i)),
                     alignment.vocab};
    const std::size_t n = collapse(prefix).size();
    if (cfg.omega.reached(n) || (i == m && n > 0)) {
      double ready = t + tm.vocoder_fixed_ms;
      ready += static_cast<double>(n) * tm.vocoder_per_unit_ms;
      return ready;
    }
  }
  return std::nullopt;
}

std::string events_to_jsonl(std::span<const StreamEvent> events) {
  std::string out;
  for (const auto& e : events) {
    nlohmann::json j = {{"kind", event_kind_name(e.kind)}, {"t_ms", e.t_ms}};
    switch (e.kind) {
      case EventKind::TokenEmitted: j["payload"] = {{"token", e.a}}; break;
      case EventKind::ChunkDispatched: j["payload"] = {{"unit_begin", e.a}, {"unit_end", e.b}}; break;
      case EventKind::AudioPlayable: j["payload"] = {{"sample_begin", e.a}, {"sample_end", e.b}}; break;
      case EventKind::Eos: j["payload"] = {{"tokens", e.a}}; break;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace omni
