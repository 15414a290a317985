#pragma once

// Streaming inference: text tokens drive incremental unit decoding, and unit
// chunks of at least omega new units are handed to the vocoder as soon as
// they exist.

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omni/ctc.hpp"
#include "omni/decoder.hpp"
#include "omni/error.hpp"
#include "omni/feature_matrix.hpp"
#include "omni/llm.hpp"
#include "omni/units.hpp"
#include "omni/vocoder.hpp"

namespace omni {

class Omega {
 public:
  explicit Omega(std::size_t n);
  static Omega infinite() { return Omega(); }
  // "inf" / "infinity" / "+inf" or a positive integer.
  static Omega parse(std::string_view text);

  bool is_infinite() const noexcept { return infinite_; }
  std::size_t value() const;
  bool reached(std::size_t pending_units) const noexcept { return !infinite_ && pending_units >= n_; }
  std::string str() const;
  bool operator==(const Omega&) const = default;

 private:
  Omega() : n_(0), infinite_(true) {}
  std::size_t n_;
  bool infinite_;
};

struct TimingModel {
  double encode_ms = 0.0;
  double prefill_ms = 0.0;
  double token_ms = 40.0;  // one LM step plus its decoder block
  double vocoder_fixed_ms = 5.0;
  double vocoder_per_unit_ms = 0.0;

  void validate() const;
};

enum class ClockMode { Simulated, Wall };

struct StreamConfig {
  Omega omega = Omega(10);
  TimingModel timing;
  // When false a chunk becomes playable only after the previous one has
  // finished playing.
  bool play_immediately = true;
  ClockMode clock = ClockMode::Simulated;
  // Run the vocoder on a consumer thread fed by an ordered queue.
  bool overlap_vocoder = false;
};

enum class EventKind { TokenEmitted, ChunkDispatched, AudioPlayable, Eos };
std::string_view event_kind_name(EventKind k);

// Payload: token id (a) for TokenEmitted; unit span [a, b) for
// ChunkDispatched; sample span [a, b) for AudioPlayable; token count (a) for Eos.
struct StreamEvent {
  EventKind kind;
  double t_ms = 0.0;
  std::size_t a = 0;
  std::size_t b = 0;
  bool operator==(const StreamEvent&) const = default;
};

struct Chunk {
  std::size_t unit_begin = 0;
  std::size_t unit_end = 0;
  double dispatched_ms = 0.0;
  double playable_ms = 0.0;
  std::size_t sample_begin = 0;
  std::size_t sample_end = 0;
};

struct StreamResult {
  TextResponse text;
  UnitSequence units;
  Waveform waveform;
  std::vector<StreamEvent> events;
  std::vector<Chunk> chunks;
  FeatureMatrix logits;
  std::optional<double> latency_ms;
  std::size_t lagging_words = 0;
};

class DispatchError : public Error {
 public:
  DispatchError(const std::string& what, StreamResult partial)
      : Error(what), partial_(std::make_shared<StreamResult>(std::move(partial))) {}
  const StreamResult& partial() const { return *partial_; }

 private:
  std::shared_ptr<StreamResult> partial_;
};

struct StreamModels {
  ResponseGenerator& generator;
  UnitDecoder& decoder;
  Vocoder& vocoder;
};

StreamResult run_stream(const FeatureMatrix& instruction, const std::string& source_id, StreamModels models,
                        const StreamConfig& cfg);

// Time of the first AudioPlayable event (stream starts at 0); nullopt when
// the response produced no audio. Throws StateError on an empty log.
std::optional<double> latency_of(std::span<const StreamEvent> events);
// Words of the text emitted before the first AudioPlayable event, in log order.
std::size_t lagging_words_of(std::span<const StreamEvent> events, const Tokenizer& tokenizer);

// Closed-form first-audio time under the simulated clock for a full alignment
// trace of lambda rows per token. `delays_ms` overrides token_ms per token.
std::optional<double> analytic_latency(const StreamConfig& cfg, const Alignment& alignment, std::size_t lambda,
                                       std::span<const double> delays_ms = {});

std::string events_to_jsonl(std::span<const StreamEvent> events);

}  // namespace omni
