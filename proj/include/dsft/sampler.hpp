#pragma once

#include <span>
#include <vector>

#include <json.hpp>

#include "dsft/model.hpp"
#include "dsft/rng.hpp"

namespace dsft {

struct DecodeConfig {
  int steps = 0;   // forward passes; 0 means one per completion token
  int length = 16; // completion tokens
  double temperature = 0.0;
  std::vector<int> schedule;  // optional explicit commits per step; must sum to length

  /// Commits per step: the explicit schedule, or an even split with the remainder on the first steps.
  std::vector<int> commits() const;
};

struct DecodeTraceStep {
  int step = 0;
  std::vector<int> positions;  // absolute positions committed this step
  std::vector<TokenId> tokens;
  std::vector<double> confidences;
};
nlohmann::ordered_json to_json(const DecodeTraceStep& s);

/// Prompt pieces followed by the separator, ready for generate().
std::vector<TokenId> encode_prompt(std::string_view prompt, const Vocabulary& vocab);

/// Iterative unmasking from an all-MASK completion. Each step runs one forward
/// pass and commits the scheduled number of most-confident masked positions
/// (ties to the lower position); committed tokens are never revisited.
/// Special tokens are never emitted. Returns the completion ids only.
std::vector<TokenId> generate(const Params<float>& params, std::span<const TokenId> prompt, const DecodeConfig& config,
                              CounterRng& rng, std::vector<DecodeTraceStep>* trace = nullptr);

}  // namespace dsft
