#include "dsft/eval.hpp"

#include <cmath>

#include <fmt/format.h>

#include "dsft/error.hpp"
#include "dsft/hash.hpp"

namespace dsft {

namespace {

std::optional<double> opt_rate(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

}  // namespace

nlohmann::ordered_json to_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  j["acc_overall"] = r.acc_overall;
  j["acc_numeric"] = r.acc(TokenClass::Numeric);
  j["acc_operator"] = r.acc(TokenClass::Operator);
  j["acc_word"] = r.acc(TokenClass::Word);
  j["exact_match"] = r.exact_match ? nlohmann::ordered_json(*r.exact_match) : nlohmann::ordered_json(nullptr);
  j["n"] = r.n;
  j["seed"] = r.seed;
  j["fingerprint"] = r.fingerprint;
  nlohmann::ordered_json counts;
  for (int k = 0; k < kNumTokenClasses; ++k) {
    counts[std::string(to_string(static_cast<TokenClass>(k)))] = {
        {"count", r.count_by_class[static_cast<std::size_t>(k)]},
        {"correct", r.correct_by_class[static_cast<std::size_t>(k)]}};
  }
  j["counts"] = counts;
  j["exact_match_n"] = r.exact_match_n;
  return j;
}

EvalReport eval_report_from_json(const nlohmann::json& j) {
  try {
    EvalReport r;
    r.acc_overall = j.at("acc_overall").get<double>();
    r.acc_by_class[static_cast<std::size_t>(TokenClass::Numeric)] = j.at("acc_numeric").get<double>();
    r.acc_by_class[static_cast<std::size_t>(TokenClass::Operator)] = j.at("acc_operator").get<double>();
    r.acc_by_class[static_cast<std::size_t>(TokenClass::Word)] = j.at("acc_word").get<double>();
    r.exact_match = opt_rate(j, "exact_match");
    r.n = j.at("n").get<long>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fingerprint = j.at("fingerprint").get<std::string>();
    if (j.contains("counts")) {
      for (int k = 0; k < kNumTokenClasses; ++k) {
        const auto name = std::string(to_string(static_cast<TokenClass>(k)));
        if (!j["counts"].contains(name)) continue;
        r.count_by_class[static_cast<std::size_t>(k)] = j["counts"][name].at("count").get<long>();
        r.correct_by_class[static_cast<std::size_t>(k)] = j["counts"][name].at("correct").get<long>();
      }
    }
    r.exact_match_n = j.value("exact_match_n", 0L);
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw input_error(std::string("malformed eval report: ") + e.what());
  }
}

std::vector<MaskPlan> eval_plans(const std::vector<TokenizedSequence>& corpus, double ratio, std::uint64_t seed) {
  const MaskConfig cfg = MaskConfig::evaluation(ratio);
  const CounterRng root = CounterRng(seed).split("eval");
  std::vector<MaskPlan> plans;
  plans.reserve(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) plans.push_back(compose_mask_plan(corpus[i], cfg, 0, root.split(i)));
  return plans;
}

std::string eval_fingerprint(const std::vector<TokenizedSequence>& corpus, double ratio) {
  std::string buf = fmt::format("ratio={:.6f};", ratio);
  for (const auto& seq : corpus) {
    buf += std::to_string(seq.prompt_len);
    buf.push_back(':');
    for (TokenId id : seq.ids) {
      buf += std::to_string(id);
      buf.push_back(',');
    }
    buf.push_back(';');
  }
  return sha256_hex(buf).substr(0, 16);
}

EvalReport reconstruction_eval(const Params<float>& params, const std::vector<TokenizedSequence>& corpus,
                               double ratio, std::uint64_t seed) {
  if (corpus.empty()) throw input_error("reconstruction_eval: empty corpus");
  const auto plans = eval_plans(corpus, ratio, seed);
  const int V = params.config.vocab_size;
  const int N = static_cast<int>(corpus.size());
  std::vector<std::array<long, kNumTokenClasses>> count(corpus.size()), correct(corpus.size());

#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < N; ++i) {
    const auto& seq = corpus[static_cast<std::size_t>(i)];
    const auto& plan = plans[static_cast<std::size_t>(i)];
    const auto xt = apply_mask(seq, plan);
    const auto logits = forward_logits(params, std::span<const TokenId>(xt));
    auto& cnt = count[static_cast<std::size_t>(i)];
    auto& cor = correct[static_cast<std::size_t>(i)];
    cnt.fill(0);
    cor.fill(0);
    for (int pos : plan.masked) {
      const float* row = logits.data() + static_cast<std::size_t>(pos) * V;
      int best = 0;
      for (int v = 1; v < V; ++v) {
        if (row[v] > row[best]) best = v;
      }
      const auto k = static_cast<std::size_t>(seq.classes[static_cast<std::size_t>(pos)]);
      ++cnt[k];
      if (best == seq.ids[static_cast<std::size_t>(pos)]) ++cor[k];
    }
  }

  EvalReport r;
  r.seed = seed;
  r.fingerprint = eval_fingerprint(corpus, ratio);
  long total_correct = 0;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    for (std::size_t k = 0; k < kNumTokenClasses; ++k) {
      r.count_by_class[k] += count[i][k];
      r.correct_by_class[k] += correct[i][k];
    }
  }
  for (std::size_t k = 0; k < kNumTokenClasses; ++k) {
    r.n += r.count_by_class[k];
    total_correct += r.correct_by_class[k];
    r.acc_by_class[k] =
        r.count_by_class[k] > 0 ? static_cast<double>(r.correct_by_class[k]) / static_cast<double>(r.count_by_class[k]) : 0.0;
  }
  r.acc_overall = r.n > 0 ? static_cast<double>(total_correct) / static_cast<double>(r.n) : 0.0;
  return r;
}

std::optional<std::string> extract_answer(std::string_view text) {
  std::optional<std::string> last;
  std::size_t i = 0;
  while (i < text.size()) {
    if (text[i] >= '0' && text[i] <= '9') {
      std::size_t j = i;
      while (j < text.size() && ((text[j] >= '0' && text[j] <= '9') || text[j] == '.')) ++j;
      std::string run(text.substr(i, j - i));
      while (!run.empty() && run.back() == '.') run.pop_back();  // sentence period
      last = run;
      i = j;
    } else {
      ++i;
    }
  }
  return last;
}

std::string normalize_answer(std::string_view answer) {
  std::string s = strip_whitespace(answer);
  std::size_t k = 0;
  while (k + 1 < s.size() && s[k] == '0' && s[k + 1] != '.') ++k;
  return s.substr(k);
}

ExactMatchResult exact_match_eval(const Params<float>& params, const Vocabulary& vocab,
                                  const std::vector<CorpusRecord>& records, const DecodeConfig& decode,
                                  std::uint64_t seed, bool length_from_reference) {
  if (records.empty()) throw input_error("exact_match_eval: no records");
  ExactMatchResult res;
  res.records.resize(records.size());
  const CounterRng root = CounterRng(seed).split("decode");
  const int N = static_cast<int>(records.size());
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < N; ++i) {
    try {
      const auto& rec = records[static_cast<std::size_t>(i)];
      if (rec.answer.empty()) throw input_error("exact_match_eval: record " + std::to_string(i) + " has no answer");
      DecodeConfig cfg = decode;
      const auto prompt = encode_prompt(rec.prompt, vocab);
      if (length_from_reference) {
        const auto seq = tokenize_pair(rec.prompt, rec.completion, vocab);
        cfg.length = seq.completion_len();
        cfg.steps = decode.steps > 0 ? std::min(decode.steps, cfg.length) : 0;
        cfg.schedule.clear();
      }
      CounterRng rng = root.split(static_cast<std::uint64_t>(i));
      const auto out = generate(params, prompt, cfg, rng);
      auto& log = res.records[static_cast<std::size_t>(i)];
      log.index = static_cast<std::size_t>(i);
      log.generated = detokenize(out, vocab);
      log.extracted = extract_answer(log.generated);
      log.expected = rec.answer;
      log.correct = log.extracted && normalize_answer(*log.extracted) == normalize_answer(rec.answer);
    } catch (...) {
#pragma omp critical
      failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  long hits = 0;
  for (const auto& r : res.records) hits += r.correct ? 1 : 0;
  res.rate = static_cast<double>(hits) / static_cast<double>(records.size());
  return res;
}

double relative_delta(double a, double b) { return (b - a) / a; }

std::string format_relative(double relative) {
  const std::string pct = fmt::format("{:.2f}%", std::abs(relative) * 100.0);
  if (pct == "0.00%") return "-";
  return (relative > 0 ? "↑" : "↓") + pct;
}

Comparison compare_runs(const EvalReport& a, const EvalReport& b) {
  if (a.fingerprint != b.fingerprint) {
    throw integrity_error("compare: reports were computed on different evaluation sets (" + a.fingerprint + " vs " +
                          b.fingerprint + ")");
  }
  if (a.seed != b.seed) throw integrity_error("compare: reports use different evaluation seeds");
  Comparison c;
  c.fingerprint = a.fingerprint;
  c.seed = a.seed;
  const auto row = [&](std::string name, double x, double y) {
    ComparisonRow r{std::move(name), x, y, y - x, std::nullopt};
    if (x != 0.0) r.relative = relative_delta(x, y);
    c.rows.push_back(r);
  };
  row("acc_overall", a.acc_overall, b.acc_overall);
  row("acc_numeric", a.acc(TokenClass::Numeric), b.acc(TokenClass::Numeric));
  row("acc_operator", a.acc(TokenClass::Operator), b.acc(TokenClass::Operator));
  row("acc_word", a.acc(TokenClass::Word), b.acc(TokenClass::Word));
  if (a.exact_match && b.exact_match) row("exact_match", *a.exact_match, *b.exact_match);
  return c;
}

std::string render_text(const Comparison& c) {
  std::string out = fmt::format("{:<14} {:>10} {:>10} {:>10} {:>10}\n", "metric", "a", "b", "abs", "rel");
  for (const auto& r : c.rows) {
    out += fmt::format("{:<14} {:>10.4f} {:>10.4f} {:>+10.4f} {:>10}\n", r.metric, r.a, r.b, r.absolute,
                       r.relative ? format_relative(*r.relative) : std::string("n/a"));
  }
  return out;
}

nlohmann::ordered_json to_json(const Comparison& c) {
  nlohmann::ordered_json j;
  j["fingerprint"] = c.fingerprint;
  j["seed"] = c.seed;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& r : c.rows) {
    nlohmann::ordered_json x;
    x["metric"] = r.metric;
    x["a"] = r.a;
    x["b"] = r.b;
    x["absolute"] = r.absolute;
    x["relative"] = r.relative ? nlohmann::ordered_json(*r.relative) : nlohmann::ordered_json(nullptr);
    x["display"] = r.relative ? format_relative(*r.relative) : "n/a";
    rows.push_back(x);
  }
  j["rows"] = rows;
  return j;
}

}  // namespace dsft
