#include "dsft/loss.hpp"

#include <algorithm>
#include <cmath>

#include "dsft/error.hpp"

namespace dsft {

LossWeights number_weights(const TokenizedSequence& seq, const MaskPlan& plan, double w_num) {
  if (!(w_num >= 1.0)) throw input_error("number weight must be >= 1");
  LossWeights out;
  out.w.reserve(plan.masked.size());
  for (int pos : plan.masked) {
    out.w.push_back(seq.classes.at(static_cast<std::size_t>(pos)) == TokenClass::Numeric ? w_num : 1.0);
  }
  return out;
}

template <typename T>
double cross_entropy(std::span<const T> row, TokenId target) {
  double mx = -INFINITY;
  for (T x : row) mx = std::max(mx, static_cast<double>(x));
  double sum = 0.0;
  for (T x : row) sum += std::exp(static_cast<double>(x) - mx);
  return mx + std::log(sum) - static_cast<double>(row[static_cast<std::size_t>(target)]);
}

namespace {

void check_shapes(std::size_t logits, int V, std::span<const TokenId> targets, const MaskPlan& plan) {
  if (plan.masked.empty()) throw input_error("loss: empty mask plan");
  if (logits != targets.size() * static_cast<std::size_t>(V)) throw input_error("loss: logits shape mismatch");
  for (int pos : plan.masked) {
    if (pos < 0 || static_cast<std::size_t>(pos) >= targets.size()) throw input_error("loss: masked position out of range");
  }
}

void check_weights(const MaskPlan& plan, const LossWeights& weights) {
  if (weights.w.size() != plan.masked.size()) throw input_error("loss: weights must cover exactly the masked positions");
  for (double w : weights.w) {
    if (!(w > 0.0)) throw input_error("loss: weights must be positive");
  }
}

// The one summation both objectives share, so unit weights reproduce the
// unweighted value bit for bit.
template <typename T>
double masked_sum(std::span<const T> logits, int V, std::span<const TokenId> targets, const MaskPlan& plan,
                  const LossWeights* weights, double* weight_total) {
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < plan.masked.size(); ++k) {
    const auto pos = static_cast<std::size_t>(plan.masked[k]);
    const double w = weights ? weights->w[k] : 1.0;
    num += w * cross_entropy(logits.subspan(pos * static_cast<std::size_t>(V), static_cast<std::size_t>(V)), targets[pos]);
    den += w;
  }
  *weight_total = den;
  return num;
}

}  // namespace

template <typename T>
double sft_loss(std::span<const T> logits, int V, std::span<const TokenId> targets, const MaskPlan& plan,
                LossReduction reduction) {
  check_shapes(logits.size(), V, targets, plan);
  double den = 0.0;
  const double num = masked_sum(logits, V, targets, plan, nullptr, &den);
  return reduction == LossReduction::Mean ? num / den : num;
}

template <typename T>
double weighted_loss(std::span<const T> logits, int V, std::span<const TokenId> targets, const MaskPlan& plan,
                     const LossWeights& weights) {
  check_shapes(logits.size(), V, targets, plan);
  check_weights(plan, weights);
  double den = 0.0;
  const double num = masked_sum(logits, V, targets, plan, &weights, &den);
  return num / den;
}

template <typename T>
double loss_and_grad(std::span<const T> logits, int V, std::span<const TokenId> targets, const MaskPlan& plan,
                     const LossWeights* weights, LossReduction reduction, double scale, std::span<T> dlogits) {
  check_shapes(logits.size(), V, targets, plan);
  if (weights) check_weights(plan, *weights);
  if (dlogits.size() != logits.size()) throw input_error("loss: dlogits shape mismatch");
  double den = 0.0;
  const double num = masked_sum(logits, V, targets, plan, weights, &den);
  const bool mean = reduction == LossReduction::Mean;
  const double loss = mean ? num / den : num;

  std::fill(dlogits.begin(), dlogits.end(), T(0));
  const std::size_t Vs = static_cast<std::size_t>(V);
  std::vector<double> probs(Vs);
  for (std::size_t k = 0; k < plan.masked.size(); ++k) {
    const auto pos = static_cast<std::size_t>(plan.masked[k]);
    const double w = weights ? weights->w[k] : 1.0;
    const double coef = scale * (mean ? w / den : w);
    auto row = logits.subspan(pos * Vs, Vs);
    double mx = -INFINITY;
    for (T x : row) mx = std::max(mx, static_cast<double>(x));
    double sum = 0.0;
    for (std::size_t v = 0; v < Vs; ++v) sum += (probs[v] = std::exp(static_cast<double>(row[v]) - mx));
    T* d = dlogits.data() + pos * Vs;
    for (std::size_t v = 0; v < Vs; ++v) d[v] = static_cast<T>(coef * (probs[v] / sum));
    d[targets[pos]] = static_cast<T>(coef * (probs[static_cast<std::size_t>(targets[pos])] / sum - 1.0));
  }
  return loss;
}

template double cross_entropy<float>(std::span<const float>, TokenId);
template double cross_entropy<double>(std::span<const double>, TokenId);
template double sft_loss<float>(std::span<const float>, int, std::span<const TokenId>, const MaskPlan&, LossReduction);
template double sft_loss<double>(std::span<const double>, int, std::span<const TokenId>, const MaskPlan&,
                                 LossReduction);
template double weighted_loss<float>(std::span<const float>, int, std::span<const TokenId>, const MaskPlan&,
                                     const LossWeights&);
template double weighted_loss<double>(std::span<const double>, int, std::span<const TokenId>, const MaskPlan&,
                                      const LossWeights&);
template double loss_and_grad<float>(std::span<const float>, int, std::span<const TokenId>, const MaskPlan&,
                                     const LossWeights*, LossReduction, double, std::span<float>);
template double loss_and_grad<double>(std::span<const double>, int, std::span<const TokenId>, const MaskPlan&,
                                      const LossWeights*, LossReduction, double, std::span<double>);

}  // namespace dsft
