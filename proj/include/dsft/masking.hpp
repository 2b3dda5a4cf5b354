#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "dsft/rng.hpp"
#include "dsft/tokenizer.hpp"

namespace dsft {

enum class Provenance : std::uint8_t { Base = 0, NumberFirst = 1, Span = 2, Curriculum = 3, Forced = 4 };
inline constexpr int kNumProvenances = 5;
std::string_view to_string(Provenance p);

/// Which ratio the base stage masks at.
enum class BasePolicy : std::uint8_t {
  SampledT,  // t ~ U[eps, 1 - eps] per plan (the uniform SFT forward process)
  RMin,      // the curriculum floor r_min
  Fixed,     // MaskConfig::base_ratio (evaluation masking)
};
std::string_view to_string(BasePolicy p);
BasePolicy parse_base_policy(std::string_view s);

struct NoiseLevel {
  double t = 0.5;
};

struct CurriculumSchedule {
  double r_min = 0.10;
  double r_max = 0.20;
  long total_steps = 2000;

  void validate() const;
};

struct TechniqueFlags {
  bool number_first = true;
  bool span = true;
  bool curriculum = true;
  bool weighted_loss = true;

  bool any_masking() const { return number_first || span || curriculum; }
};

struct MaskConfig {
  double epsilon = 0.01;
  BasePolicy base = BasePolicy::RMin;
  double base_ratio = 0.15;
  // Not published with the method; an artifact default.
  double number_fraction = 0.3;
  double span_prob = 0.1;
  int span_len = 3;
  CurriculumSchedule schedule;
  TechniqueFlags enable;

  void validate() const;

  /// Uniform baseline: every technique off, base ratio sampled per plan.
  static MaskConfig sft();
  /// Fixed-ratio uniform masking, used for held-out evaluation.
  static MaskConfig evaluation(double ratio);
};

/// Masked positions (ascending) with the stage that first masked each one.
struct MaskPlan {
  std::vector<int> masked;
  std::vector<Provenance> provenance;  // parallel to masked
  NoiseLevel noise;
  long step = 0;
  double curriculum_target = 0.0;
  // Cumulative |masked| after base, number-first, span, curriculum, forced.
  std::array<int, kNumProvenances> stage_sizes{};

  int size() const { return static_cast<int>(masked.size()); }
  bool contains(int pos) const;
  int count(Provenance p) const;
};

// Counting rules. A 1e-9 slack absorbs representation error in products like 0.3 * 10.
long round_half_up_count(double x);
long ceil_count(double x);

NoiseLevel sample_noise(CounterRng& rng, double epsilon);

/// round(ratio * |E|) completion positions, uniformly without replacement.
std::vector<int> base_mask(const TokenizedSequence& seq, double ratio, CounterRng& rng);

/// ceil(fraction * |N|) of the numeric completion positions N not already in existing.
std::vector<int> number_first_mask(const TokenizedSequence& seq, std::span<const int> existing, double fraction,
                                   CounterRng& rng);

/// With probability span_prob, one contiguous run of span_len completion positions.
/// May overlap existing.
std::vector<int> span_mask(const TokenizedSequence& seq, double span_prob, int span_len, CounterRng& rng);

/// Linear ramp r_min -> r_max over total_steps, clamped afterwards.
double curriculum_ratio(const CurriculumSchedule& schedule, long step);

/// Unmasked completion positions added until |masked| / |E| first reaches target_ratio.
std::vector<int> curriculum_topup(const TokenizedSequence& seq, std::span<const int> existing, double target_ratio,
                                  CounterRng& rng);

/// Sequential composition: base, number-first, span, curriculum, then the
/// at-least-one guarantee. Each stage draws from its own child stream of rng.
MaskPlan compose_mask_plan(const TokenizedSequence& seq, const MaskConfig& config, long step, const CounterRng& rng);

/// x_t: x0 with MASK_ID at exactly the planned positions.
std::vector<TokenId> apply_mask(const TokenizedSequence& seq, const MaskPlan& plan);

/// The stream a training or preview plan for (sequence index, step) is drawn from.
CounterRng plan_stream(std::uint64_t seed, std::uint64_t sequence_index, long step);

nlohmann::ordered_json mask_preview_json(const TokenizedSequence& seq, const MaskPlan& plan);

}  // namespace dsft
