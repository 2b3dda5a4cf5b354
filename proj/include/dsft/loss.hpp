#pragma once

#include <span>
#include <vector>

#include "dsft/masking.hpp"
#include "dsft/tokenizer.hpp"

namespace dsft {

enum class LossReduction {
  Mean,  // divide by |M| (SFT) or by the weight total (weighted)
  Sum,   // the plain sum over masked positions
};

/// Per-masked-position weights, parallel to MaskPlan::masked.
struct LossWeights {
  std::vector<double> w;
};

/// w_num on positions whose clean token is Numeric, 1.0 elsewhere.
LossWeights number_weights(const TokenizedSequence& seq, const MaskPlan& plan, double w_num);

/// CE(logits_row, target) = logsumexp(row) - row[target], accumulated in double.
template <typename T>
double cross_entropy(std::span<const T> row, TokenId target);

/// Mean (or summed) cross-entropy over the masked positions only.
template <typename T>
double sft_loss(std::span<const T> logits, int vocab_size, std::span<const TokenId> targets, const MaskPlan& plan,
                LossReduction reduction = LossReduction::Mean);

/// sum_i w_i CE_i / sum_i w_i over the masked positions.
template <typename T>
double weighted_loss(std::span<const T> logits, int vocab_size, std::span<const TokenId> targets, const MaskPlan& plan,
                     const LossWeights& weights);

/// Loss value plus d(scale * loss)/d(logits) written into dlogits ([L x V], overwritten).
/// Mean divides by the weight total (the mask size when unweighted); Sum does not.
/// weights == nullptr selects the unweighted objective.
template <typename T>
double loss_and_grad(std::span<const T> logits, int vocab_size, std::span<const TokenId> targets, const MaskPlan& plan,
                     const LossWeights* weights, LossReduction reduction, double scale, std::span<T> dlogits);

}  // namespace dsft
