#include "omni/train.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "omni/ctc.hpp"
#include "omni/error.hpp"
#include "omni/metrics.hpp"
#include "omni/optim.hpp"

namespace omni {

TrainConfig TrainConfig::defaults(int stage) {
  TrainConfig c;
  c.stage = stage;
  c.peak_lr = stage == 2 ? 2e-4 : 2e-5;
  return c;
}

void TrainConfig::validate() const {
  if (stage != 1 && stage != 2) throw ConfigError("train: stage must be 1 or 2");
  if (batch_size == 0) throw ConfigError("train: batch_size must be positive");
  if (epochs == 0) throw ConfigError("train: epochs must be positive");
  if (!(peak_lr >= 0.0)) throw ConfigError("train: peak_lr must be non-negative");
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) throw ConfigError("train: warmup_fraction must be in (0, 1)");
}

std::size_t warmup_steps(std::size_t total_steps, const TrainConfig& cfg) {
  if (total_steps == 0) return 0;
  const auto w = static_cast<std::size_t>(std::ceil(cfg.warmup_fraction * static_cast<double>(total_steps)));
  return std::min(w, total_steps - 1);
}

double lr_at(std::size_t step, std::size_t total_steps, const TrainConfig& cfg) {
  if (step >= total_steps) {
    throw IndexError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + ")");
  }
  const std::size_t w = warmup_steps(total_steps, cfg);
  if (step < w) return cfg.peak_lr * static_cast<double>(step) / static_cast<double>(w);
  const std::size_t span = total_steps - 1 - w;
  if (span == 0) return cfg.peak_lr;
  const double progress = static_cast<double>(step - w) / static_cast<double>(span);
  return 0.5 * cfg.peak_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

std::vector<TrainItem> make_train_items(const std::vector<ToyExample>& examples, const Tokenizer& tokenizer) {
  std::vector<TrainItem> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    TrainItem it;
    it.id = ex.record.id;
    it.features = ex.features;
    it.response = tokenizer.tokenize(ex.record.response_text);
    it.response.push_back(tokenizer.eos_id());
    it.units = ex.record.response_units;
    out.push_back(std::move(it));
  }
  return out;
}

namespace {

// Restores requires_grad flags on scope exit.
class TrainableScope {
 public:
  TrainableScope(const ParamList& params, bool on) : params_(params) {
    for (const auto& p : params_) flags_.push_back(p.tensor.requires_grad());
    set_trainable(params_, on);
  }
  ~TrainableScope() {
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Tensor t = params_[i].tensor;
      t.set_requires_grad(flags_[i]);
    }
  }

 private:
  ParamList params_;
  std::vector<bool> flags_;
};

std::vector<std::vector<double>> snapshot(const std::vector<Tensor>& ts) {
  std::vector<std::vector<double>> out;
  for (const auto& t : ts) out.emplace_back(t.data().begin(), t.data().end());
  return out;
}

void restore(std::vector<Tensor>& ts, const std::vector<std::vector<double>>& snap) {
  for (std::size_t i = 0; i < ts.size(); ++i) std::copy(snap[i].begin(), snap[i].end(), ts[i].mutable_data().begin());
}

ParamList concat(ParamList a, const ParamList& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

using BatchLoss = std::function<Tensor(const std::vector<const TrainItem*>&)>;

TrainResult run_loop(const std::vector<TrainItem>& items, const TrainConfig& cfg, std::vector<Tensor> params,
                     const BatchLoss& batch_loss, const StepCallback& on_step) {
  cfg.validate();
  if (items.empty()) throw DatasetError("train: empty dataset");
  TrainResult result;
  const std::size_t per_epoch = (items.size() + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total = per_epoch * cfg.epochs;
  Adam opt(params);
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> order(items.size());
  std::iota(order.begin(), order.end(), 0);
  auto good = snapshot(params);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_sum = 0.0;
    for (std::size_t b = 0; b < per_epoch; ++b, ++step) {
      std::vector<const TrainItem*> batch;
      for (std::size_t k = b * cfg.batch_size; k < std::min(items.size(), (b + 1) * cfg.batch_size); ++k) {
        batch.push_back(&items[order[k]]);
      }
      opt.zero_grad();
      Tensor loss = batch_loss(batch);
      const double value = loss.item();
      const double lr = lr_at(step, total, cfg);
      if (!std::isfinite(value)) {
        restore(params, good);
        result.aborted = true;
        result.abort_reason = "non-finite loss at step " + std::to_string(step);
        return result;
      }
      loss.backward();
      opt.step(lr);
      bool finite = true;
      for (const auto& p : params) {
        for (double v : p.data()) finite = finite && std::isfinite(v);
      }
      if (!finite) {
        restore(params, good);
        result.aborted = true;
        result.abort_reason = "non-finite parameters after step " + std::to_string(step);
        return result;
      }
      good = snapshot(params);
      const LossPoint pt{step, value, lr};
      result.curve.push_back(pt);
      if (on_step) on_step(pt);
      epoch_sum += value;
    }
    result.epoch_loss.push_back(epoch_sum / static_cast<double>(per_epoch));
  }
  return result;
}

Tensor item_ce_sum(const OmniModel& model, const TrainItem& item, bool track_grad) {
  const PromptInput prompt = model.prompt_for(item.features, track_grad);
  const TeacherForced tf = lm_teacher_forced(prompt, item.response, model.config().lm, model.lm());
  return cross_entropy(tf.logits, item.response);
}

Tensor item_ctc(const OmniModel& model, const TrainItem& item) {
  const Tensor hidden = response_hidden_states(model, item);
  const Tensor logits = decode_full(hidden, model.config().decoder, model.decoder());
  return ctc_loss(logits, item.units);
}

}  // namespace

Tensor response_hidden_states(const OmniModel& model, const TrainItem& item) {
  const PromptInput prompt = model.prompt_for(item.features, false);
  return lm_teacher_forced(prompt, item.response, model.config().lm, model.lm()).hidden.detach();
}

TrainResult train_stage1(OmniModel& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                         const StepCallback& on_step) {
  if (cfg.stage != 1) throw ConfigError("train_stage1: config is for stage " + std::to_string(cfg.stage));
  const ParamList trained = concat(model.adaptor_params(), model.lm_params());
  TrainableScope frozen(concat(model.encoder_params(), model.decoder_params()), false);
  TrainableScope live(trained, true);
  const std::string enc_before = fingerprint(model.encoder_params());
  const std::string dec_before = fingerprint(model.decoder_params());

  auto loss_fn = [&](const std::vector<const TrainItem*>& batch) {
    Tensor total;
    std::size_t tokens = 0;
    for (const TrainItem* it : batch) {
      const Tensor ce = item_ce_sum(model, *it, true);
      total = tokens == 0 ? ce : add(total, ce);
      tokens += it->response.size();
    }
    return scale(total, 1.0 / static_cast<double>(tokens));
  };
  TrainResult r = run_loop(items, cfg, tensors_of(trained), loss_fn, on_step);
  r.frozen_before = {{"encoder", enc_before}, {"decoder", dec_before}};
  r.frozen_after = {{"encoder", fingerprint(model.encoder_params())},
                    {"decoder", fingerprint(model.decoder_params())}};
  return r;
}

TrainResult train_stage2(OmniModel& model, const std::vector<TrainItem>& items, const TrainConfig& cfg,
                         const StepCallback& on_step) {
  if (cfg.stage != 2) throw ConfigError("train_stage2: config is for stage " + std::to_string(cfg.stage));
  const std::size_t lambda = model.config().decoder.upsample_lambda;
  std::vector<std::string> bad;
  for (const auto& it : items) {
    if (it.units.vocab() != model.config().decoder.unit_vocab) {
      bad.push_back(it.id + " (unit vocabulary " + std::to_string(it.units.vocab()) + ")");
    } else if (required_frames(it.units) > lambda * it.response.size()) {
      bad.push_back(it.id + " (" + std::to_string(required_frames(it.units)) + " frames needed, " +
                    std::to_string(lambda * it.response.size()) + " available)");
    }
  }
  if (!bad.empty()) {
    std::ostringstream msg;
    msg << "train_stage2: " << bad.size() << " infeasible item(s):";
    for (const auto& b : bad) msg << ' ' << b;
    throw DatasetError(msg.str());
  }

  const ParamList frozen_set = concat(concat(model.encoder_params(), model.adaptor_params()), model.lm_params());
  TrainableScope frozen(frozen_set, false);
  TrainableScope live(model.decoder_params(), true);
  const std::map<std::string, std::string> before = {{"encoder", fingerprint(model.encoder_params())},
                                                     {"adaptor", fingerprint(model.adaptor_params())},
                                                     {"lm", fingerprint(model.lm_params())}};

  auto loss_fn = [&](const std::vector<const TrainItem*>& batch) {
    Tensor total;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const Tensor l = item_ctc(model, *batch[i]);
      total = i == 0 ? l : add(total, l);
    }
    return scale(total, 1.0 / static_cast<double>(batch.size()));
  };
  TrainResult r = run_loop(items, cfg, tensors_of(model.decoder_params()), loss_fn, on_step);
  r.frozen_before = before;
  r.frozen_after = {{"encoder", fingerprint(model.encoder_params())},
                    {"adaptor", fingerprint(model.adaptor_params())},
                    {"lm", fingerprint(model.lm_params())}};
  return r;
}

double stage1_loss(const OmniModel& model, const std::vector<TrainItem>& items) {
  if (items.empty()) throw DatasetError("stage1_loss: empty dataset");
  double sum = 0.0;
  std::size_t tokens = 0;
  for (const auto& it : items) {
    sum += item_ce_sum(model, it, false).item();
    tokens += it.response.size();
  }
  return sum / static_cast<double>(tokens);
}

double stage2_loss(const OmniModel& model, const std::vector<TrainItem>& items) {
  if (items.empty()) throw DatasetError("stage2_loss: empty dataset");
  double sum = 0.0;
  for (const auto& it : items) sum += item_ctc(model, it).item();
  return sum / static_cast<double>(items.size());
}

double unit_accuracy(const OmniModel& model, const std::vector<TrainItem>& items) {
  std::size_t errors = 0, total = 0;
  for (const auto& it : items) {
    const Tensor logits = decode_full(response_hidden_states(model, it), model.config().decoder, model.decoder());
    const UnitSequence got = units_for_prefix(to_matrix(logits));
    const EditCounts c = edit_counts<std::size_t>(it.units.values(), got.values());
    errors += c.substitutions + c.insertions + c.deletions;
    total += it.units.size();
  }
  if (total == 0) throw UndefinedRateError("unit_accuracy: no reference units");
  return 1.0 - static_cast<double>(errors) / static_cast<double>(total);
}

}  // namespace omni
