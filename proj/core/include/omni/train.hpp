#pragma once

// Two-stage training: stage 1 fits adaptor + LM with token cross-entropy,
// stage 2 fits only the speech decoder with CTC on frozen LM hidden states.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "omni/data.hpp"
#include "omni/model.hpp"
#include "omni/units.hpp"

namespace omni {

struct TrainConfig {
  int stage = 1;
  std::size_t batch_size = 32;
  std::size_t epochs = 3;
  double peak_lr = 2e-5;
  double warmup_fraction = 0.03;
  std::uint64_t seed = 1;

  static TrainConfig defaults(int stage);
  void validate() const;
};

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg);
// Linear warmup to peak over warmup_steps, then cosine decay to 0 at the last step.
double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg);

struct TrainItem {
  std::string id;
  FeatureMatrix features;           // raw instruction frames
  std::vector<std::size_t> response;  // token ids, ending in EOS
  UnitSequence units;
};

std::vector<TrainItem> make_train_items(const std::vector<ToyExample>& examples, const Tokenizer& tokenizer);

struct LossPoint {
  std::size_t step = 0;
  double loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  std::vector<LossPoint> curve;
  std::vector<double> epoch_loss;  // mean step loss per epoch
  bool aborted = false;
  std::string abort_reason;
  std::map<std::string, std::string> frozen_before;  // group -> fingerprint
  std::map<std::string, std::string> frozen_after;
};

using StepCallback = std::function<void(const LossPoint&)>;

// Loss: mean per-token cross-entropy of the response given the prompt. On a
// non-finite loss the parameters are restored to the last good step and the
// run stops with aborted = true.
TrainResult train_stage1(OmniModel& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                         const StepCallback& on_step = {});

// Loss: mean CTC loss per item of decoder logits over teacher-forced hidden
// states (recomputed from the frozen model each batch). Items whose units
// cannot fit in lambda * |response| frames are rejected up front with a
// DatasetError naming them.
TrainResult train_stage2(OmniModel& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                         const StepCallback& on_step = {});

// Mean per-token cross-entropy over `items` without updating anything.
double stage1_loss(const OmniModel& model, const std::vector<TrainItem>& items);
double stage2_loss(const OmniModel& model, const std::vector<TrainItem>& items);

// Teacher-forced hidden states c_1..c_M for a response.
Tensor response_hidden_states(const OmniModel& model, const TrainItem& item);

// Pooled 1 - unit edit errors / reference units of greedy decoding.
double unit_accuracy(const OmniModel& model, const std::vector<TrainItem>& items);

}  // namespace omni
