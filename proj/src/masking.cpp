#include "dsft/masking.hpp"

#include <algorithm>
#include <cmath>

#include "dsft/error.hpp"

namespace dsft {

namespace {

constexpr double kCountSlack = 1e-9;

std::vector<int> completion_positions(const TokenizedSequence& seq) {
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(std::max(seq.completion_len(), 0)));
  for (int i = seq.prompt_len; i < seq.size(); ++i) out.push_back(i);
  return out;
}

std::vector<char> membership(const TokenizedSequence& seq, std::span<const int> positions) {
  std::vector<char> in(static_cast<std::size_t>(seq.size()), 0);
  for (int p : positions) {
    if (p >= 0 && p < seq.size()) in[static_cast<std::size_t>(p)] = 1;
  }
  return in;
}

std::vector<int> sorted(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Base: return "base";
    case Provenance::NumberFirst: return "number_first";
    case Provenance::Span: return "span";
    case Provenance::Curriculum: return "curriculum";
    case Provenance::Forced: return "forced";
  }
  return "?";
}

std::string_view to_string(BasePolicy p) {
  switch (p) {
    case BasePolicy::SampledT: return "sampled-t";
    case BasePolicy::RMin: return "r-min";
    case BasePolicy::Fixed: return "fixed";
  }
  return "?";
}

BasePolicy parse_base_policy(std::string_view s) {
  if (s == "sampled-t") return BasePolicy::SampledT;
  if (s == "r-min") return BasePolicy::RMin;
  if (s == "fixed") return BasePolicy::Fixed;
  throw input_error("unknown base policy '" + std::string(s) + "' (expected sampled-t, r-min or fixed)");
}

void CurriculumSchedule::validate() const {
  if (!(r_min > 0.0 && r_min <= r_max && r_max < 1.0)) {
    throw input_error("curriculum: need 0 < r_min <= r_max < 1");
  }
  if (total_steps < 1) throw input_error("curriculum: total_steps must be >= 1");
}

void MaskConfig::validate() const {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw input_error("mask config: epsilon must lie in (0, 0.5)");
  const auto ratio_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
  if (!ratio_ok(number_fraction)) throw input_error("mask config: number_fraction must lie in [0, 1]");
  if (!ratio_ok(span_prob)) throw input_error("mask config: span_prob must lie in [0, 1]");
  if (!(base_ratio >= 0.0 && base_ratio < 1.0)) throw input_error("mask config: base_ratio must lie in [0, 1)");
  if (span_len < 1) throw input_error("mask config: span_len must be >= 1");
  schedule.validate();
}

MaskConfig MaskConfig::sft() {
  MaskConfig c;
  c.base = BasePolicy::SampledT;
  c.enable = TechniqueFlags{false, false, false, false};
  return c;
}

MaskConfig MaskConfig::evaluation(double ratio) {
  MaskConfig c;
  c.base = BasePolicy::Fixed;
  c.base_ratio = ratio;
  c.enable = TechniqueFlags{false, false, false, false};
  return c;
}

bool MaskPlan::contains(int pos) const { return std::binary_search(masked.begin(), masked.end(), pos); }

int MaskPlan::count(Provenance p) const {
  return static_cast<int>(std::count(provenance.begin(), provenance.end(), p));
}

long round_half_up_count(double x) { return static_cast<long>(std::floor(x + 0.5 + kCountSlack)); }
long ceil_count(double x) { return static_cast<long>(std::ceil(x - kCountSlack)); }

NoiseLevel sample_noise(CounterRng& rng, double epsilon) {
  if (!(epsilon > 0.0 && epsilon < 0.5)) throw input_error("sample_noise: epsilon must lie in (0, 0.5)");
  return NoiseLevel{rng.uniform(epsilon, 1.0 - epsilon)};
}

std::vector<int> base_mask(const TokenizedSequence& seq, double ratio, CounterRng& rng) {
  const auto eligible = completion_positions(seq);
  const long want = std::min<long>(round_half_up_count(ratio * static_cast<double>(eligible.size())),
                                   static_cast<long>(eligible.size()));
  return sorted(rng.sample_without_replacement(eligible, static_cast<std::size_t>(std::max(want, 0L))));
}

std::vector<int> number_first_mask(const TokenizedSequence& seq, std::span<const int> existing, double fraction,
                                   CounterRng& rng) {
  const auto taken = membership(seq, existing);
  std::vector<int> numeric;
  for (int i = seq.prompt_len; i < seq.size(); ++i) {
    if (seq.classes[static_cast<std::size_t>(i)] == TokenClass::Numeric && !taken[static_cast<std::size_t>(i)]) {
      numeric.push_back(i);
    }
  }
  if (numeric.empty()) return {};
  const long want = std::min<long>(ceil_count(fraction * static_cast<double>(numeric.size())),
                                   static_cast<long>(numeric.size()));
  return sorted(rng.sample_without_replacement(numeric, static_cast<std::size_t>(std::max(want, 0L))));
}

std::vector<int> span_mask(const TokenizedSequence& seq, double span_prob, int span_len, CounterRng& rng) {
  if (span_len < 1) throw input_error("span_mask: span_len must be >= 1");
  if (seq.completion_len() <= 0) return {};
  if (!(rng.uniform() < span_prob)) return {};
  const int last_start = seq.size() - span_len;
  int start = seq.prompt_len;
  // A completion shorter than the span is masked whole.
  if (last_start > seq.prompt_len) {
    start += static_cast<int>(rng.below(static_cast<std::uint64_t>(last_start - seq.prompt_len + 1)));
  }
  std::vector<int> out;
  for (int i = start; i < std::min(start + span_len, seq.size()); ++i) out.push_back(i);
  return out;
}

double curriculum_ratio(const CurriculumSchedule& schedule, long step) {
  if (step < 0) throw input_error("curriculum_ratio: negative step");
  const long clamped = std::min(step, schedule.total_steps);
  const double total = static_cast<double>(schedule.total_steps);
  const double s = static_cast<double>(clamped);
  return ((total - s) * schedule.r_min + s * schedule.r_max) / total;
}

std::vector<int> curriculum_topup(const TokenizedSequence& seq, std::span<const int> existing, double target_ratio,
                                  CounterRng& rng) {
  const auto taken = membership(seq, existing);
  std::vector<int> free;
  long already = 0;
  for (int i = seq.prompt_len; i < seq.size(); ++i) {
    if (taken[static_cast<std::size_t>(i)]) {
      ++already;
    } else {
      free.push_back(i);
    }
  }
  const long eligible = seq.completion_len();
  if (eligible <= 0) return {};
  const long target = ceil_count(target_ratio * static_cast<double>(eligible));
  if (already >= target) return {};
  const long want = std::min<long>(target - already, static_cast<long>(free.size()));
  return sorted(rng.sample_without_replacement(free, static_cast<std::size_t>(want)));
}

MaskPlan compose_mask_plan(const TokenizedSequence& seq, const MaskConfig& config, long step, const CounterRng& rng) {
  if (seq.prompt_len >= seq.size()) throw input_error("compose_mask_plan: sequence has no completion to mask");
  if (seq.prompt_len < 1) throw input_error("compose_mask_plan: sequence has no prompt");
  if (step < 0) throw input_error("compose_mask_plan: negative step");

  MaskPlan plan;
  plan.step = step;
  std::vector<std::int8_t> owner(static_cast<std::size_t>(seq.size()), -1);
  std::vector<int> current;
  const auto add = [&](const std::vector<int>& positions, Provenance p) {
    for (int pos : positions) {
      auto& o = owner[static_cast<std::size_t>(pos)];
      if (o < 0) {
        o = static_cast<std::int8_t>(p);
        current.push_back(pos);
      }
    }
    std::sort(current.begin(), current.end());
    plan.stage_sizes[static_cast<std::size_t>(p)] = static_cast<int>(current.size());
  };

  CounterRng noise_rng = rng.split("noise");
  plan.noise = sample_noise(noise_rng, config.epsilon);

  double base_ratio = plan.noise.t;
  if (config.base == BasePolicy::RMin) base_ratio = config.schedule.r_min;
  if (config.base == BasePolicy::Fixed) base_ratio = config.base_ratio;
  CounterRng base_rng = rng.split("base");
  add(base_mask(seq, base_ratio, base_rng), Provenance::Base);

  CounterRng number_rng = rng.split("number_first");
  add(config.enable.number_first ? number_first_mask(seq, current, config.number_fraction, number_rng)
                                 : std::vector<int>{},
      Provenance::NumberFirst);

  CounterRng span_rng = rng.split("span");
  add(config.enable.span ? span_mask(seq, config.span_prob, config.span_len, span_rng) : std::vector<int>{},
      Provenance::Span);

  CounterRng curriculum_rng = rng.split("curriculum");
  if (config.enable.curriculum) {
    plan.curriculum_target = curriculum_ratio(config.schedule, step);
    add(curriculum_topup(seq, current, plan.curriculum_target, curriculum_rng), Provenance::Curriculum);
  } else {
    add({}, Provenance::Curriculum);
  }

  std::vector<int> forced;
  if (current.empty()) {
    CounterRng forced_rng = rng.split("forced");
    forced.push_back(seq.prompt_len + static_cast<int>(forced_rng.below(static_cast<std::uint64_t>(seq.completion_len()))));
  }
  add(forced, Provenance::Forced);

  plan.masked = current;
  plan.provenance.reserve(current.size());
  for (int pos : current) plan.provenance.push_back(static_cast<Provenance>(owner[static_cast<std::size_t>(pos)]));
  return plan;
}

std::vector<TokenId> apply_mask(const TokenizedSequence& seq, const MaskPlan& plan) {
  std::vector<TokenId> out = seq.ids;
  for (int pos : plan.masked) {
    if (pos < 0 || pos >= seq.size()) throw input_error("apply_mask: position " + std::to_string(pos) + " out of range");
    out[static_cast<std::size_t>(pos)] = kMaskId;
  }
  return out;
}

CounterRng plan_stream(std::uint64_t seed, std::uint64_t sequence_index, long step) {
  return CounterRng(seed).split("mask").split(sequence_index).split(static_cast<std::uint64_t>(step));
}

nlohmann::ordered_json mask_preview_json(const TokenizedSequence& seq, const MaskPlan& plan) {
  nlohmann::ordered_json j;
  j["ids"] = seq.ids;
  j["masked"] = plan.masked;
  auto prov = nlohmann::ordered_json::array();
  for (auto p : plan.provenance) prov.push_back(std::string(to_string(p)));
  j["provenance"] = prov;
  j["t"] = plan.noise.t;
  j["step"] = plan.step;
  return j;
}

}  // namespace dsft
