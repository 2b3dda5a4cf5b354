#include <doctest.h>

#include <cmath>

#include "dsft/error.hpp"
#include "dsft/eval.hpp"
#include "dsft/trainer.hpp"
#include "support.hpp"

using namespace dsft;

namespace {

ModelConfig small_model(int vocab) {
  ModelConfig m;
  m.layers = 1;
  m.heads = 2;
  m.d_model = 16;
  m.d_ff = 32;
  m.max_len = 128;
  m.vocab_size = vocab;
  return m;
}

EvalReport report_with(double overall, double numeric, std::string fp = "abc", std::uint64_t seed = 1234) {
  EvalReport r;
  r.acc_overall = overall;
  r.acc_by_class[static_cast<std::size_t>(TokenClass::Numeric)] = numeric;
  r.fingerprint = std::move(fp);
  r.seed = seed;
  return r;
}

const ComparisonRow& row(const Comparison& c, const std::string& metric) {
  for (const auto& r : c.rows) {
    if (r.metric == metric) return r;
  }
  throw std::runtime_error("missing row " + metric);
}

}  // namespace

TEST_CASE("untrained model reconstructs at chance level") {
  const auto c = test::make_corpus(3000, 11);
  const int V = c.vocab.size();
  const auto params = init_params(small_model(V), 3);
  const auto r = reconstruction_eval(params, c.seqs, kEvalMaskRatio, 1234);
  REQUIRE(r.n >= 10000);
  const double chance = 1.0 / V;
  const double sd = std::sqrt(chance * (1 - chance) / static_cast<double>(r.n));
  MESSAGE("untrained accuracy " << r.acc_overall << " over " << r.n << " positions, chance " << chance);
  CHECK(std::abs(r.acc_overall - chance) <= 4 * sd);
}

TEST_CASE("per-class counts match an independent pass over the eval plans") {
  const auto c = test::make_corpus(300, 12);
  const auto params = init_params(small_model(c.vocab.size()), 4);
  const auto r = reconstruction_eval(params, c.seqs, kEvalMaskRatio, 77);
  const auto plans = eval_plans(c.seqs, kEvalMaskRatio, 77);
  std::array<long, kNumTokenClasses> counts{};
  long n = 0;
  for (std::size_t i = 0; i < plans.size(); ++i) {
    for (int pos : plans[i].masked) {
      ++counts[static_cast<std::size_t>(c.seqs[i].classes[static_cast<std::size_t>(pos)])];
      ++n;
    }
  }
  CHECK(r.count_by_class == counts);
  CHECK(r.n == n);
  long total = 0;
  for (long k : r.count_by_class) total += k;
  CHECK(total == r.n);
  for (double a : r.acc_by_class) {
    CHECK(a >= 0.0);
    CHECK(a <= 1.0);
  }
  CHECK(r.acc_overall >= 0.0);
  CHECK(r.acc_overall <= 1.0);
  CHECK(r.seed == 77);
}

TEST_CASE("evaluation masks depend only on corpus and seed") {
  const auto c = test::make_corpus(200, 13);
  const auto p1 = init_params(small_model(c.vocab.size()), 1);
  const auto p2 = init_params(small_model(c.vocab.size()), 2);
  const auto a = eval_plans(c.seqs, kEvalMaskRatio, 5);
  const auto b = eval_plans(c.seqs, kEvalMaskRatio, 5);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].masked == b[i].masked);
  const auto ra = reconstruction_eval(p1, c.seqs, kEvalMaskRatio, 5);
  const auto rb = reconstruction_eval(p2, c.seqs, kEvalMaskRatio, 5);
  CHECK(ra.count_by_class == rb.count_by_class);
  CHECK(ra.fingerprint == rb.fingerprint);
  const auto other = eval_plans(c.seqs, kEvalMaskRatio, 6);
  bool differs = false;
  for (std::size_t i = 0; i < a.size(); ++i) differs = differs || a[i].masked != other[i].masked;
  CHECK(differs);
}

TEST_CASE("a model compared with itself gives identical reports") {
  const auto c = test::make_corpus(200, 14);
  const auto p = init_params(small_model(c.vocab.size()), 9);
  const auto a = reconstruction_eval(p, c.seqs, kEvalMaskRatio, 1234);
  const auto b = reconstruction_eval(p, c.seqs, kEvalMaskRatio, 1234);
  CHECK(to_json(a).dump() == to_json(b).dump());
  const auto cmp = compare_runs(a, b);
  for (const auto& r : cmp.rows) {
    CHECK(r.absolute == 0.0);
    if (r.relative) {
      CHECK(*r.relative == 0.0);
      CHECK(format_relative(*r.relative) == "-");
    }
  }
}

TEST_CASE("eval report json uses the fixed keys and round-trips") {
  const auto c = test::make_corpus(100, 15);
  const auto p = init_params(small_model(c.vocab.size()), 9);
  auto r = reconstruction_eval(p, c.seqs, kEvalMaskRatio, 1234);
  r.exact_match = 0.25;
  r.exact_match_n = 4;
  const auto j = to_json(r);
  for (const char* key : {"acc_overall", "acc_numeric", "acc_operator", "acc_word", "exact_match", "n", "seed",
                          "fingerprint"}) {
    CHECK(j.contains(key));
  }
  const auto back = eval_report_from_json(nlohmann::json::parse(j.dump()));
  CHECK(to_json(back).dump() == j.dump());
  CHECK_THROWS_AS(eval_report_from_json(nlohmann::json::parse(R"({"acc_overall": 0.5})")), Error);
}

TEST_CASE("relative deltas reproduce the published table arithmetic") {
  CHECK(format_relative(relative_delta(75.59, 79.37)) == "↑5.00%");
  CHECK(format_relative(relative_delta(23.74, 26.14)) == "↑10.11%");
  CHECK(format_relative(relative_delta(79.37, 75.59)) == "↓4.76%");
  CHECK(format_relative(0.0) == "-");

  const auto cmp = compare_runs(report_with(75.59, 23.74), report_with(79.37, 26.14));
  CHECK(format_relative(*row(cmp, "acc_overall").relative) == "↑5.00%");
  CHECK(format_relative(*row(cmp, "acc_numeric").relative) == "↑10.11%");
  CHECK(row(cmp, "acc_overall").absolute == doctest::Approx(3.78).epsilon(1e-12));
  CHECK_FALSE(row(cmp, "acc_word").relative.has_value());
  const auto text = render_text(cmp);
  CHECK(text.find("↑5.00%") != std::string::npos);
  CHECK(to_json(cmp)["rows"][0]["display"] == "↑5.00%");
}

TEST_CASE("swapping the compared runs flips every direction") {
  const auto a = report_with(0.42, 0.31);
  const auto b = report_with(0.47, 0.29);
  const auto ab = compare_runs(a, b), ba = compare_runs(b, a);
  REQUIRE(ab.rows.size() == ba.rows.size());
  for (std::size_t i = 0; i < ab.rows.size(); ++i) {
    if (!ab.rows[i].relative || !ba.rows[i].relative) continue;
    const double x = *ab.rows[i].relative, y = *ba.rows[i].relative;
    CHECK((x > 0) == (y < 0));
    CHECK(ab.rows[i].absolute == -ba.rows[i].absolute);
  }
}

TEST_CASE("comparisons across different evaluation sets are refused") {
  try {
    compare_runs(report_with(0.5, 0.5, "aaa"), report_with(0.5, 0.5, "bbb"));
    FAIL("expected an integrity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Integrity);
  }
  CHECK_THROWS_AS(compare_runs(report_with(0.5, 0.5, "a", 1), report_with(0.5, 0.5, "a", 2)), Error);
}

TEST_CASE("answer extraction and normalization") {
  CHECK(extract_answer("3 + 4 = 7. The answer is 7.") == std::optional<std::string>("7"));
  CHECK(extract_answer("12 / 4 = 3. The answer is 3.5") == std::optional<std::string>("3.5"));
  CHECK_FALSE(extract_answer("no digits here").has_value());
  CHECK(normalize_answer(" 07 ") == "7");
  CHECK(normalize_answer("0") == "0");
  CHECK(normalize_answer("000") == "0");
  CHECK(normalize_answer("0.5") == "0.5");
  CHECK(normalize_answer("007") == normalize_answer("7"));
}

TEST_CASE("exact match: memorized records score 1.0, untrained models near 0") {
  const auto mem = test::make_corpus(10, 3);
  TrainConfig t;
  t.mode = TrainMode::SFT;
  t.model.layers = 2;
  t.model.heads = 4;
  t.model.d_model = 32;
  t.model.d_ff = 128;
  t.model.max_len = 128;
  t.model.vocab_size = mem.vocab.size();
  t.batch_size = 10;
  t.steps = 300;
  t.lr = 5e-3;
  t.mask.schedule.total_steps = t.steps;
  Trainer trainer(t, mem.seqs, init_params(t.model, 5));
  run_training(trainer);
  const auto res = exact_match_eval(trainer.params(), mem.vocab, mem.records, DecodeConfig{}, 1);
  CHECK(res.rate == 1.0);
  const auto again = exact_match_eval(trainer.params(), mem.vocab, mem.records, DecodeConfig{}, 2);
  REQUIRE(again.records.size() == res.records.size());
  for (std::size_t i = 0; i < res.records.size(); ++i) CHECK(again.records[i].generated == res.records[i].generated);

  auto c = test::make_corpus(600, 16);
  std::vector<CorpusRecord> two_digit;
  for (const auto& r : c.records) {
    if (r.answer.size() >= 2 && two_digit.size() < 200) two_digit.push_back(r);
  }
  REQUIRE(two_digit.size() == 200);
  const auto untrained = init_params(small_model(c.vocab.size()), 21);
  const auto chance = exact_match_eval(untrained, c.vocab, two_digit, DecodeConfig{}, 1);
  MESSAGE("untrained exact match " << chance.rate);
  CHECK(chance.rate <= 0.05);
  for (const auto& rec : chance.records) {
    if (!rec.extracted) CHECK_FALSE(rec.correct);
  }

  CorpusRecord bad = c.records[0];
  bad.answer.clear();
  CHECK_THROWS_AS(exact_match_eval(untrained, c.vocab, {bad}, DecodeConfig{}, 1), Error);
}
