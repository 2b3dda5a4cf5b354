#include "dsft/trainer.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "dsft/error.hpp"

namespace dsft {

std::string_view to_string(TrainMode m) { return m == TrainMode::SFT ? "sft" : "dsft"; }

TrainMode parse_train_mode(std::string_view s) {
  if (s == "sft") return TrainMode::SFT;
  if (s == "dsft") return TrainMode::DSFT;
  throw input_error("unknown mode '" + std::string(s) + "' (expected sft or dsft)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw input_error("train config: lr must be > 0");
  if (!(w_num >= 1.0)) throw input_error("train config: w_num must be >= 1");
  if (batch_size < 1) throw input_error("train config: batch_size must be >= 1");
  if (steps < 0) throw input_error("train config: steps must be >= 0");
  if (workers < 1) throw input_error("train config: workers must be >= 1");
  if (checkpoint_every < 0) throw input_error("train config: checkpoint_every must be >= 0");
  mask.validate();
  model.validate();
}

MaskConfig TrainConfig::effective_mask() const {
  if (mode == TrainMode::DSFT) return mask;
  MaskConfig m = MaskConfig::sft();
  m.epsilon = mask.epsilon;
  m.schedule = mask.schedule;
  return m;
}

nlohmann::ordered_json to_json(const TrainStepReport& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["loss"] = r.loss;
  j["masked"] = r.masked;
  j["numeric_masked"] = r.numeric_masked;
  j["grad_norm"] = r.grad_norm;
  j["curriculum_ratio"] = r.curriculum_ratio;
  return j;
}

namespace {

template <typename T>
double item_gradient(const Params<T>& params, const Example& ex, Objective objective, double w_num,
                     LossReduction reduction, Backend backend, std::span<T> grad) {
  const auto xt = apply_mask(*ex.seq, ex.plan);
  Activations<T> acts;
  forward(params, std::span<const TokenId>(xt), acts, backend);
  std::vector<T> dlogits(acts.logits.size());
  LossWeights weights;
  const LossWeights* wp = nullptr;
  if (objective == Objective::Weighted) {
    weights = number_weights(*ex.seq, ex.plan, w_num);
    wp = &weights;
  }
  const double loss = loss_and_grad<T>(acts.logits, params.config.vocab_size, ex.seq->ids, ex.plan, wp, reduction, 1.0,
                                       dlogits);
  backward(params, std::span<const TokenId>(xt), acts, std::span<const T>(dlogits), grad, backend);
  return loss;
}

template <typename T>
double batch_gradient(const Params<T>& params, std::span<const Example> batch, Objective objective, double w_num,
                      LossReduction reduction, int workers, Backend backend, std::vector<std::vector<T>>& buffers,
                      std::vector<T>& out, std::vector<double>& item_loss) {
  const int B = static_cast<int>(batch.size());
  if (B == 0) throw input_error("compute_gradient: empty batch");
  const std::size_t P = params.data.size();
  if (buffers.size() < batch.size()) buffers.resize(batch.size());
  item_loss.assign(batch.size(), 0.0);
  for (int b = 0; b < B; ++b) buffers[static_cast<std::size_t>(b)].assign(P, T(0));

  std::exception_ptr failure;
#pragma omp parallel for num_threads(workers) schedule(static)
  for (int b = 0; b < B; ++b) {
    try {
      item_loss[static_cast<std::size_t>(b)] = item_gradient(params, batch[static_cast<std::size_t>(b)], objective,
                                                             w_num, reduction, backend,
                                                             std::span<T>(buffers[static_cast<std::size_t>(b)]));
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  out.assign(P, T(0));
  const T inv = static_cast<T>(1.0 / B);
  const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(P);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t k = 0; k < n; ++k) {
    T acc = 0;
    for (int b = 0; b < B; ++b) acc += buffers[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)];
    out[static_cast<std::size_t>(k)] = acc * inv;
  }
  double loss = 0.0;
  for (double l : item_loss) loss += l;
  return loss / B;
}

}  // namespace

template <typename T>
GradResult<T> compute_gradient(const Params<T>& params, std::span<const Example> batch, Objective objective,
                               double w_num, LossReduction reduction, int workers, Backend backend) {
  GradResult<T> r;
  std::vector<std::vector<T>> buffers;
  r.loss = batch_gradient(params, batch, objective, w_num, reduction, workers, backend, buffers, r.grad, r.item_loss);
  return r;
}

template GradResult<float> compute_gradient<float>(const Params<float>&, std::span<const Example>, Objective, double,
                                                   LossReduction, int, Backend);
template GradResult<double> compute_gradient<double>(const Params<double>&, std::span<const Example>, Objective,
                                                     double, LossReduction, int, Backend);

Trainer::Trainer(TrainConfig config, std::vector<TokenizedSequence> data, Params<float> init)
    : config_(std::move(config)), data_(std::move(data)), params_(std::move(init)) {
  config_.validate();
  mask_ = config_.effective_mask();
  if (data_.empty()) throw input_error("trainer: empty training corpus");
  if (!(params_.config == config_.model)) throw input_error("trainer: parameters do not match the model config");
  for (std::size_t i = 0; i < data_.size(); ++i) {
    if (data_[i].size() > config_.model.max_len) {
      throw input_error(fmt::format("trainer: sequence {} has {} tokens, above max_len {}", i, data_[i].size(),
                                    config_.model.max_len));
    }
    if (data_[i].completion_len() < 1) throw input_error(fmt::format("trainer: sequence {} has no completion", i));
  }
  adam_ = AdamState(params_.data.size());
}

Trainer::Trainer(TrainConfig config, std::vector<TokenizedSequence> data, const Checkpoint& ckpt)
    : Trainer(std::move(config), std::move(data), ckpt.params) {
  if (!ckpt.adam) throw input_error("trainer: checkpoint has no optimizer state to resume from");
  if (ckpt.seed != config_.seed) throw input_error("trainer: checkpoint seed differs from the config seed");
  adam_ = *ckpt.adam;
  step_ = ckpt.step;
}

const std::vector<std::size_t>& Trainer::epoch_order(long epoch) const {
  auto it = orders_.find(epoch);
  if (it != orders_.end()) return it->second;
  if (orders_.size() > 4) orders_.erase(orders_.begin());
  std::vector<std::size_t> order(data_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  CounterRng rng = CounterRng(config_.seed).split("epoch").split(static_cast<std::uint64_t>(epoch));
  for (std::size_t i = order.size(); i > 1; --i) {
    std::swap(order[i - 1], order[static_cast<std::size_t>(rng.below(i))]);
  }
  return orders_.emplace(epoch, std::move(order)).first->second;
}

std::vector<std::size_t> Trainer::batch_indices(long step) const {
  const long N = static_cast<long>(data_.size());
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(config_.batch_size));
  for (long j = 0; j < config_.batch_size; ++j) {
    const long k = step * config_.batch_size + j;
    out.push_back(epoch_order(k / N)[static_cast<std::size_t>(k % N)]);
  }
  return out;
}

TrainStepReport Trainer::step() {
  TrainStepReport rep;
  rep.step = step_;
  rep.curriculum_ratio = curriculum_ratio(mask_.schedule, step_);

  std::vector<Example> batch;
  batch.reserve(static_cast<std::size_t>(config_.batch_size));
  for (std::size_t idx : batch_indices(step_)) {
    const auto& seq = data_[idx];
    Example ex{&seq, compose_mask_plan(seq, mask_, step_, plan_stream(config_.seed, idx, step_))};
    rep.masked += ex.plan.size();
    for (int pos : ex.plan.masked) {
      if (seq.classes[static_cast<std::size_t>(pos)] == TokenClass::Numeric) ++rep.numeric_masked;
    }
    batch.push_back(std::move(ex));
  }

  std::vector<float> grad;
  std::vector<double> item_loss;
  rep.loss = batch_gradient(params_, std::span<const Example>(batch),
                            config_.weighted() ? Objective::Weighted : Objective::SFT, config_.w_num,
                            config_.reduction, config_.workers, Backend::Parallel, item_grads_, grad, item_loss);
  double sq = 0.0;
  for (float g : grad) sq += static_cast<double>(g) * g;
  rep.grad_norm = std::sqrt(sq);
  if (!std::isfinite(rep.loss) || !std::isfinite(rep.grad_norm)) {
    throw internal_error("non-finite loss at step " + to_json(rep).dump());
  }
  optimizer_step(params_.data, grad, adam_, config_.lr, config_.adam);
  ++step_;
  return rep;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.params = params_;
  ck.adam = adam_;
  ck.step = step_;
  ck.seed = config_.seed;
  return ck;
}

void run_training(Trainer& trainer, const TrainHooks& hooks) {
  const auto& cfg = trainer.config();
  double initial = -1.0;
  long above = 0;
  while (trainer.steps_done() < cfg.steps) {
    const auto rep = trainer.step();
    if (initial < 0.0) initial = rep.loss;
    above = rep.loss > cfg.divergence_factor * initial ? above + 1 : 0;
    if (hooks.on_step) hooks.on_step(rep);
    if (above >= cfg.divergence_patience) {
      throw internal_error(fmt::format("training diverged: loss {:.4f} above {}x the initial {:.4f} for {} steps; last "
                                       "report {}",
                                       rep.loss, cfg.divergence_factor, initial, above, to_json(rep).dump()));
    }
    if (cfg.checkpoint_every > 0 && trainer.steps_done() % cfg.checkpoint_every == 0 && hooks.on_checkpoint) {
      hooks.on_checkpoint(trainer);
    }
    if (rep.step % 100 == 0) {
      spdlog::debug("step {} loss {:.4f} masked {} numeric {} |g| {:.4f} r {:.3f}", rep.step, rep.loss, rep.masked,
                    rep.numeric_masked, rep.grad_norm, rep.curriculum_ratio);
    }
  }
}

}  // namespace dsft
