#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsft/checkpoint.hpp"
#include "dsft/loss.hpp"
#include "dsft/masking.hpp"
#include "dsft/model.hpp"
#include "dsft/optimizer.hpp"

namespace dsft {

enum class TrainMode { SFT, DSFT };
std::string_view to_string(TrainMode m);
TrainMode parse_train_mode(std::string_view s);

struct TrainConfig {
  TrainMode mode = TrainMode::DSFT;
  double lr = 3e-4;
  int batch_size = 16;
  long steps = 2000;
  double w_num = 2.0;
  MaskConfig mask;
  ModelConfig model;
  AdamConfig adam;
  LossReduction reduction = LossReduction::Mean;
  std::uint64_t seed = 1;
  int workers = 1;
  long checkpoint_every = 0;  // 0 disables intermediate checkpoints
  double divergence_factor = 10.0;
  long divergence_patience = 50;

  void validate() const;
  /// The masking actually used: the uniform baseline in SFT mode.
  MaskConfig effective_mask() const;
  bool weighted() const { return mode == TrainMode::DSFT && mask.enable.weighted_loss; }
};

struct TrainStepReport {
  long step = 0;
  double loss = 0.0;
  long masked = 0;
  long numeric_masked = 0;
  double grad_norm = 0.0;
  double curriculum_ratio = 0.0;
};
nlohmann::ordered_json to_json(const TrainStepReport& r);

/// One sequence with the plan it is trained on this step.
struct Example {
  const TokenizedSequence* seq = nullptr;
  MaskPlan plan;
};

enum class Objective { SFT, Weighted };

template <typename T>
struct GradResult {
  double loss = 0.0;  // mean of per-sequence losses
  std::vector<double> item_loss;
  std::vector<T> grad;  // mean of per-sequence gradients, params layout
};

/// Exact reverse-mode gradient of the batch objective. Each sequence is
/// differentiated into its own buffer and buffers are reduced in batch order,
/// so the result is independent of the worker count.
template <typename T>
GradResult<T> compute_gradient(const Params<T>& params, std::span<const Example> batch, Objective objective,
                               double w_num, LossReduction reduction = LossReduction::Mean, int workers = 1,
                               Backend backend = Backend::Parallel);

class Trainer {
 public:
  Trainer(TrainConfig config, std::vector<TokenizedSequence> data, Params<float> init);
  /// Continues from a checkpoint that carries optimizer state.
  Trainer(TrainConfig config, std::vector<TokenizedSequence> data, const Checkpoint& ckpt);

  TrainStepReport step();

  long steps_done() const { return step_; }
  const Params<float>& params() const { return params_; }
  const AdamState& adam() const { return adam_; }
  const TrainConfig& config() const { return config_; }
  Checkpoint checkpoint() const;

  /// Dataset indices of the batch used at the given step (epoch-wise permutations).
  std::vector<std::size_t> batch_indices(long step) const;

 private:
  const std::vector<std::size_t>& epoch_order(long epoch) const;

  TrainConfig config_;
  MaskConfig mask_;
  std::vector<TokenizedSequence> data_;
  Params<float> params_;
  AdamState adam_;
  long step_ = 0;
  mutable std::map<long, std::vector<std::size_t>> orders_;
  std::vector<std::vector<float>> item_grads_;
};

struct TrainHooks {
  std::function<void(const TrainStepReport&)> on_step;
  std::function<void(const Trainer&)> on_checkpoint;
};

/// Runs until config.steps; throws when the loss diverges (above
/// divergence_factor x the first step's loss for divergence_patience consecutive steps).
void run_training(Trainer& trainer, const TrainHooks& hooks = {});

}  // namespace dsft
