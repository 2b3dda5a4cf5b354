#include <doctest.h>

#include <cmath>
#include <map>
#include <regex>

#include "dsft/corpus.hpp"
#include "dsft/error.hpp"
#include "dsft/hash.hpp"
#include "support.hpp"

using namespace dsft;

namespace {

// Re-parses every "a op b = c" equation in a completion and recomputes it.
struct EquationCheck {
  int equations = 0;
  bool all_true = true;
  bool chained = true;  // each equation starts from the previous result
  std::string final_value;
};

EquationCheck check_equations(const std::string& completion) {
  static const std::regex eq(R"((\d+) ([-+*/]) (\d+) = (\d+))");
  EquationCheck out;
  long prev = -1;
  for (auto it = std::sregex_iterator(completion.begin(), completion.end(), eq); it != std::sregex_iterator(); ++it) {
    const long a = std::stol((*it)[1]);
    const char op = (*it)[2].str()[0];
    const long b = std::stol((*it)[3]);
    const long c = std::stol((*it)[4]);
    long truth = 0;
    bool exact = true;
    switch (op) {
      case '+': truth = a + b; break;
      case '-': truth = a - b; break;
      case '*': truth = a * b; break;
      case '/':
        exact = b != 0 && a % b == 0;
        truth = b != 0 ? a / b : -1;
        break;
    }
    if (!exact || truth != c || c < 0) out.all_true = false;
    if (prev >= 0 && a != prev) out.chained = false;
    prev = c;
    ++out.equations;
  }
  static const std::regex ans(R"(The answer is (\d+)\.$)");
  std::smatch m;
  if (std::regex_search(completion, m, ans)) out.final_value = m[1];
  if (prev >= 0 && out.final_value != std::to_string(prev)) out.all_true = false;
  return out;
}

}  // namespace

TEST_CASE("single addition record has the documented shape") {
  GeneratorSpec spec;
  spec.count = 1;
  spec.ops = "+";
  spec.min_operand = 1;
  spec.max_operand = 9;
  spec.min_steps = 1;
  spec.max_steps = 1;
  const auto recs = generate_corpus(spec, 7);
  REQUIRE(recs.size() == 1);
  const auto& r = recs[0];
  std::smatch pm;
  REQUIRE(std::regex_search(r.prompt, pm, std::regex(R"(has (\d) (\w+)\. .*\b(\d) more \2\b.*\?$)")));
  const int n = std::stoi(pm[1]);
  const int m = std::stoi(pm[3]);
  const std::string expected = std::to_string(n) + " + " + std::to_string(m) + " = " + std::to_string(n + m) +
                               ". The answer is " + std::to_string(n + m) + ".";
  CHECK(r.completion == expected);
  CHECK(r.answer == std::to_string(n + m));
}

TEST_CASE("generation is deterministic in (spec, seed)") {
  GeneratorSpec spec;
  spec.count = 200;
  CHECK(export_jsonl(generate_corpus(spec, 5)) == export_jsonl(generate_corpus(spec, 5)));
  CHECK(export_jsonl(generate_corpus(spec, 5)) != export_jsonl(generate_corpus(spec, 6)));
  // A prefix of a larger corpus is the smaller corpus.
  GeneratorSpec small = spec;
  small.count = 50;
  auto big = generate_corpus(spec, 5);
  big.resize(50);
  CHECK(big == generate_corpus(small, 5));
}

TEST_CASE("10,000 generated records re-verified by an independent equation checker") {
  GeneratorSpec spec;
  spec.count = 10000;
  const auto recs = generate_corpus(spec, 2024);
  int verified = 0;
  std::map<char, int> op_seen;
  for (const auto& r : recs) {
    const auto chk = check_equations(r.completion);
    if (chk.all_true && chk.chained && chk.equations >= 1 && chk.final_value == r.answer) ++verified;
    for (char op : std::string("+-*/")) {
      if (r.completion.find(std::string(" ") + op + " ") != std::string::npos) ++op_seen[op];
    }
  }
  CHECK(verified == 10000);
  for (char op : std::string("+-*/")) CHECK(op_seen[op] > 500);
}

TEST_CASE("division-only and degenerate specs") {
  GeneratorSpec spec;
  spec.count = 300;
  spec.ops = "/";
  for (const auto& r : generate_corpus(spec, 3)) {
    const auto chk = check_equations(r.completion);
    REQUIRE(chk.all_true);
    REQUIRE(chk.equations >= 1);
  }
  spec.ops = "^";
  CHECK_THROWS_AS(generate_corpus(spec, 1), Error);
  spec.ops = "+";
  spec.min_operand = 10;
  spec.max_operand = 5;
  CHECK_THROWS_AS(generate_corpus(spec, 1), Error);
}

TEST_CASE("JSONL ingestion") {
  const auto recs = parse_jsonl(R"({"prompt":"2+2=","completion":"4","answer":"4"})");
  REQUIRE(recs.size() == 1);
  CHECK(recs[0] == CorpusRecord{"2+2=", "4", "4"});

  const std::string bad = "{\"prompt\":\"a\",\"completion\":\"b\"}\n\n{\"prompt\":\"c\"}\n";
  try {
    (void)parse_jsonl(bad);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Input);
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    CHECK(std::string(e.what()).find("completion") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_jsonl("{not json}\n"), Error);
  CHECK_THROWS_AS(parse_jsonl(R"({"prompt":"p","completion":"c","answer":"9"})"), Error);
  CHECK_THROWS_AS(parse_jsonl(R"({"prompt":"","completion":"c"})"), Error);
  CHECK_THROWS_AS(ingest_jsonl("/nonexistent/corpus.jsonl"), Error);
}

TEST_CASE("export -> ingest round trip of 1,000 records is lossless") {
  GeneratorSpec spec;
  const auto recs = generate_corpus(spec, 99);
  test::TempDir dir("corpus_rt");
  write_file(dir / "c.jsonl", export_jsonl(recs));
  const auto back = ingest_jsonl(dir / "c.jsonl");
  CHECK(back == recs);
  CHECK(corpus_fingerprint(back) == corpus_fingerprint(recs));
}

namespace {

TokenizedSequence raw(std::vector<TokenId> ids, const Vocabulary& v) {
  TokenizedSequence s;
  s.ids = std::move(ids);
  for (auto id : s.ids) s.classes.push_back(v.class_of(id));
  s.prompt_len = 1;
  return s;
}

}  // namespace

TEST_CASE("entropy of degenerate and uniform corpora") {
  const auto c = test::make_corpus(20, 1);
  const TokenId seven = *c.vocab.find("7");
  const auto one = entropy_report({raw({seven, seven, seven, seven}, c.vocab)}, c.vocab);
  CHECK(one.total_entropy == 0.0);
  CHECK(one.total_entropy >= 0.0);

  std::vector<TokenId> all;
  for (TokenId id = 0; id < c.vocab.size(); ++id) all.push_back(id);
  const auto uni = entropy_report({raw(all, c.vocab)}, c.vocab);
  CHECK(std::abs(uni.total_entropy - std::log(static_cast<double>(c.vocab.size()))) < 1e-12);
}

TEST_CASE("entropy report matches a brute-force recomputation") {
  const auto c = test::make_corpus(500, 8);
  const auto rep = entropy_report(c.seqs, c.vocab);

  std::map<TokenId, double> count;
  double n = 0;
  for (const auto& s : c.seqs) {
    for (auto id : s.ids) {
      count[id] += 1;
      n += 1;
    }
  }
  double h = 0;
  std::array<double, kNumTokenClasses> mass{}, hs{}, cnt{};
  for (auto& [id, k] : count) {
    const double p = k / n;
    h -= p * std::log(p);
    const auto cls = static_cast<std::size_t>(c.vocab.class_of(id));
    mass[cls] += p;
    hs[cls] -= p * std::log(p);
    cnt[cls] += k;
  }
  CHECK(std::abs(rep.total_entropy - h) < 1e-12);
  double total_mass = 0;
  for (int k = 0; k < kNumTokenClasses; ++k) {
    const auto& pc = rep.per_class[static_cast<std::size_t>(k)];
    CHECK(std::abs(pc.p_mass - mass[static_cast<std::size_t>(k)]) < 1e-12);
    CHECK(std::abs(pc.entropy - hs[static_cast<std::size_t>(k)]) < 1e-12);
    CHECK(pc.count == static_cast<long>(cnt[static_cast<std::size_t>(k)]));
    if (pc.count > 0) CHECK(std::abs(pc.mean_surprisal - hs[static_cast<std::size_t>(k)] / mass[static_cast<std::size_t>(k)]) < 1e-12);
    total_mass += pc.p_mass;
  }
  CHECK(std::abs(total_mass - 1.0) < 1e-9);
  CHECK(rep.total_entropy <= std::log(static_cast<double>(c.vocab.size())));
  CHECK(rep.stopwords.size() == 10);
}

TEST_CASE("entropy report is invariant to record order") {
  auto c = test::make_corpus(300, 4);
  const auto a = entropy_report(c.seqs, c.vocab);
  std::reverse(c.seqs.begin(), c.seqs.end());
  const auto b = entropy_report(c.seqs, c.vocab);
  CHECK(std::abs(a.total_entropy - b.total_entropy) < 1e-12);
  CHECK(a.stopwords == b.stopwords);
}

TEST_CASE("numeric tokens carry more surprisal than stopwords on the default corpus") {
  const auto c = test::make_corpus(1000, 1);
  const auto rep = entropy_report(c.seqs, c.vocab);
  CHECK(rep.numeric_exceeds_stopwords());
  const auto j = to_json(rep, c.vocab);
  CHECK(j["classes"][0]["class"] == "Numeric");
  CHECK(j.contains("total_entropy_nats"));
  CHECK(render_table(rep, c.vocab).find("stopwords (10)") != std::string::npos);
}
