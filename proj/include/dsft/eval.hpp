#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsft/corpus.hpp"
#include "dsft/masking.hpp"
#include "dsft/model.hpp"
#include "dsft/sampler.hpp"

namespace dsft {

inline constexpr double kEvalMaskRatio = 0.15;

struct EvalReport {
  double acc_overall = 0.0;
  std::array<double, kNumTokenClasses> acc_by_class{};
  std::array<long, kNumTokenClasses> count_by_class{};
  std::array<long, kNumTokenClasses> correct_by_class{};
  long n = 0;  // masked positions scored
  std::optional<double> exact_match;
  long exact_match_n = 0;
  std::uint64_t seed = 0;
  std::string fingerprint;

  double acc(TokenClass c) const { return acc_by_class[static_cast<std::size_t>(c)]; }
};

nlohmann::ordered_json to_json(const EvalReport& r);
EvalReport eval_report_from_json(const nlohmann::json& j);

/// Evaluation plans depend only on (corpus, ratio, seed), never on the model.
std::vector<MaskPlan> eval_plans(const std::vector<TokenizedSequence>& corpus, double ratio, std::uint64_t seed);

/// Identifies the evaluation set and masking so that reports can be compared.
std::string eval_fingerprint(const std::vector<TokenizedSequence>& corpus, double ratio);

/// Argmax accuracy at the masked positions of seed-fixed uniform eval masks, overall and per class.
EvalReport reconstruction_eval(const Params<float>& params, const std::vector<TokenizedSequence>& corpus,
                               double ratio, std::uint64_t seed);

struct ExactMatchRecord {
  std::size_t index = 0;
  std::string generated;
  std::optional<std::string> extracted;
  std::string expected;
  bool correct = false;
};

struct ExactMatchResult {
  double rate = 0.0;
  std::vector<ExactMatchRecord> records;
};

/// Last maximal run of digits and decimal points in the text.
std::optional<std::string> extract_answer(std::string_view text);
/// Strips whitespace and leading zeros ("07" -> "7", "0" stays "0").
std::string normalize_answer(std::string_view answer);

/// Greedy (or sampled) generation per prompt, compared against the record answers.
/// With length_from_reference the completion length is each record's reference length.
ExactMatchResult exact_match_eval(const Params<float>& params, const Vocabulary& vocab,
                                  const std::vector<CorpusRecord>& records, const DecodeConfig& decode,
                                  std::uint64_t seed, bool length_from_reference = true);

struct ComparisonRow {
  std::string metric;
  double a = 0.0;
  double b = 0.0;
  double absolute = 0.0;
  std::optional<double> relative;  // (b - a) / a; absent when a == 0
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  std::string fingerprint;
  std::uint64_t seed = 0;
};

double relative_delta(double a, double b);
/// "↑5.00%", "↓0.84%", or "-" for no change, at two decimals.
std::string format_relative(double relative);

/// Refuses (integrity_error) when the reports differ in fingerprint or seed.
Comparison compare_runs(const EvalReport& a, const EvalReport& b);
std::string render_text(const Comparison& c);
nlohmann::ordered_json to_json(const Comparison& c);

}  // namespace dsft
