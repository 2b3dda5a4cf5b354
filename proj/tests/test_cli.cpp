#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "cli.hpp"
#include "dsft/checkpoint.hpp"
#include "dsft/corpus.hpp"
#include "dsft/error.hpp"
#include "dsft/hash.hpp"
#include "dsft/manifest.hpp"
#include "support.hpp"

using namespace dsft;
namespace fs = std::filesystem;

namespace {

int dsft_cli(std::vector<std::string> args) { return cli::run(args); }

std::string golden(const std::string& name) { return std::string(DSFT_TEST_DATA_DIR) + "/golden/" + name; }

long line_count(const fs::path& p) {
  std::ifstream in(p);
  long n = 0;
  std::string line;
  while (std::getline(in, line)) ++n;
  return n;
}

/// Pooled masked / completion-token ratio over a mask-preview file.
double pooled_ratio(const fs::path& p) {
  std::ifstream in(p);
  std::string line;
  double masked = 0, total = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    masked += static_cast<double>(j["masked"].size());
    total += static_cast<double>(j["masked"].size()) / j["realized_ratio"].get<double>();
  }
  return masked / total;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary);
  out << s;
}

// A deliberately tiny model so that train runs finish in well under a second.
const char* kTinyConfig =
    "model.layers=1\nmodel.heads=2\nmodel.d_model=16\nmodel.d_ff=32\nmodel.max_len=128\n"
    "steps=24\nbatch_size=6\nlr=0.003\ncheckpoint_every=12\n";

struct Fixture {
  test::TempDir dir{"cli"};
  fs::path corpus_dir = dir / "corpus";
  fs::path corpus = corpus_dir / "corpus.jsonl";
  fs::path heldout = corpus_dir / "heldout.jsonl";
  fs::path cfg = dir / "tiny.cfg";

  Fixture() {
    REQUIRE(dsft_cli({"gen-corpus", "--count", "120", "--holdout", "40", "--seed", "5", "--out", corpus_dir.string()}) ==
            0);
    write_text(cfg, kTinyConfig);
  }

  int train(const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{"train", "--corpus", corpus.string(), "--config", cfg.string(), "--out", (dir / out).string()};
    a.insert(a.end(), extra.begin(), extra.end());
    return dsft_cli(a);
  }
};

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  test::TempDir dir("cli_usage");
  CHECK(dsft_cli({}) == 2);
  CHECK(dsft_cli({"frobnicate"}) == 2);
  CHECK(dsft_cli({"gen-corpus", "--count", "0", "--out", (dir / "c").string()}) == 2);
  CHECK(dsft_cli({"gen-corpus", "--out", (dir / "c").string()}) == 2);
  CHECK(dsft_cli({"gen-corpus", "--count", "ten", "--out", (dir / "c").string()}) == 2);
  CHECK(dsft_cli({"analyze", "--corpus", (dir / "missing.jsonl").string()}) == 2);
  CHECK(dsft_cli({"train", "--corpus", (dir / "missing.jsonl").string(), "--out", (dir / "r").string()}) == 2);
  CHECK(dsft_cli({"--help"}) == 0);
}

TEST_CASE("gen-corpus writes the requested records deterministically") {
  test::TempDir dir("cli_gen");
  REQUIRE(dsft_cli({"gen-corpus", "--count", "1000", "--seed", "7", "--out", (dir / "a").string()}) == 0);
  REQUIRE(dsft_cli({"gen-corpus", "--count", "1000", "--seed", "7", "--out", (dir / "b").string()}) == 0);
  CHECK(line_count(dir / "a" / "corpus.jsonl") == 1000);
  CHECK(read_file(dir / "a" / "corpus.jsonl") == read_file(dir / "b" / "corpus.jsonl"));
  CHECK(read_file(dir / "a" / "stats.json") == read_file(dir / "b" / "stats.json"));
  const auto m = read_manifest(dir / "a");
  verify_manifest(dir / "a", m);
  CHECK(m.corpus_fingerprint == corpus_fingerprint(ingest_jsonl(dir / "a" / "corpus.jsonl")));
}

TEST_CASE("analyze: self-check passes on the synthetic corpus, entropy 0 on a one-token corpus") {
  test::TempDir dir("cli_analyze");
  REQUIRE(dsft_cli({"gen-corpus", "--count", "2000", "--seed", "1", "--out", (dir / "c").string()}) == 0);
  CHECK(dsft_cli({"analyze", "--corpus", (dir / "c" / "corpus.jsonl").string(), "--out", (dir / "a").string()}) == 0);
  const auto rep = nlohmann::json::parse(read_file(dir / "a" / "entropy.json"));
  CHECK(rep["total_entropy_nats"].get<double>() > 0.0);

  write_text(dir / "one.txt", "7 7 7\n7 7 7 7\n");
  const int code = dsft_cli({"analyze", "--text", "--corpus", (dir / "one.txt").string(), "--out", (dir / "o").string()});
  CHECK(code == 3);  // no word tokens to compare against
  const auto one = nlohmann::json::parse(read_file(dir / "o" / "entropy.json"));
  CHECK(one["total_entropy_nats"].get<double>() == 0.0);
}

TEST_CASE("mask-preview matches the frozen golden files") {
  test::TempDir dir("cli_preview");
  const auto out = dir / "sft.jsonl";
  REQUIRE(dsft_cli({"mask-preview", "--corpus", golden("preview_corpus.jsonl"), "--mode", "sft", "--seed", "1", "--out",
                    out.string()}) == 0);
  CHECK(read_file(out) == read_file(golden("mask_preview_sft_seed1.jsonl")));
  const auto out2 = dir / "dsft.jsonl";
  REQUIRE(dsft_cli({"mask-preview", "--corpus", golden("preview_corpus.jsonl"), "--mode", "dsft", "--seed", "1",
                    "--step", "0", "--out", out2.string()}) == 0);
  CHECK(read_file(out2) == read_file(golden("mask_preview_dsft_seed1_step0.jsonl")));
}

TEST_CASE("mask-preview: the curriculum moves the realized ratio from 10% to 20%") {
  test::TempDir dir("cli_curriculum");
  REQUIRE(dsft_cli({"gen-corpus", "--count", "500", "--seed", "2", "--out", (dir / "c").string()}) == 0);
  const auto preview = [&](const std::string& step) {
    const auto out = dir / ("p" + step + ".jsonl");
    REQUIRE(dsft_cli({"mask-preview", "--corpus", (dir / "c" / "corpus.jsonl").string(), "--mode", "dsft", "--seed",
                      "1", "--step", step, "--set", "enable.number_first=false", "--set", "enable.span=false", "--out",
                      out.string()}) == 0);
    return pooled_ratio(out);
  };
  const double start = preview("0"), end = preview("2000");
  MESSAGE("pooled realized ratio: step 0 " << start << ", step 2000 " << end);
  // Counts round up per sequence, so the realized ratio sits slightly above the target.
  CHECK(start >= 0.10);
  CHECK(start <= 0.13);
  CHECK(end >= 0.20);
  CHECK(end <= 0.23);
}

TEST_CASE("mask-preview rejects a prompt-only record and names it") {
  test::TempDir dir("cli_prompt_only");
  const std::string bad = R"({"prompt": "What is 3 + 4?", "completion": "", "answer": "7"})";
  write_text(dir / "bad.jsonl", "{\"prompt\": \"a b\", \"completion\": \"c d\", \"answer\": \"\"}\n" + bad + "\n");
  CHECK(dsft_cli({"mask-preview", "--corpus", (dir / "bad.jsonl").string(), "--mode", "sft"}) == 2);
  try {
    parse_jsonl(read_file(dir / "bad.jsonl"));
    FAIL("expected an input error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("line 2") != std::string::npos);
  }
}

TEST_CASE("train is reproducible across reruns, worker counts, replay and resume") {
  Fixture f;
  REQUIRE(f.train("a", {"--mode", "dsft", "--seed", "1"}) == 0);
  REQUIRE(f.train("b", {"--mode", "dsft", "--seed", "1"}) == 0);
  REQUIRE(f.train("w4", {"--mode", "dsft", "--seed", "1", "--workers", "4"}) == 0);
  const auto bytes = [&](const std::string& run, const std::string& stem) {
    return read_file(f.dir / run / (stem + ".bin")) + read_file(f.dir / run / (stem + ".json"));
  };
  CHECK(bytes("a", "final") == bytes("b", "final"));
  CHECK(bytes("a", "final") == bytes("w4", "final"));
  CHECK(bytes("a", "ckpt-000012") == bytes("w4", "ckpt-000012"));
  verify_manifest(f.dir / "a", read_manifest(f.dir / "a"));

  CHECK(dsft_cli({"train", "--replay", (f.dir / "a").string(), "--out", (f.dir / "replayed").string()}) == 0);
  CHECK(bytes("a", "final") == bytes("replayed", "final"));

  REQUIRE(f.train("half", {"--mode", "dsft", "--seed", "1", "--steps", "12"}) == 0);
  REQUIRE(f.train("resumed", {"--mode", "dsft", "--seed", "1", "--resume", (f.dir / "half" / "final").string()}) == 0);
  CHECK(read_file(f.dir / "a" / "final.bin") == read_file(f.dir / "resumed" / "final.bin"));

  // A recorded hash that no longer matches what the rerun produces.
  auto m = read_manifest(f.dir / "a");
  for (auto& a : m.artifacts) {
    if (a.path == "final.bin") a.sha256 = std::string(64, '0');
  }
  write_manifest(f.dir / "a", m);
  CHECK(dsft_cli({"train", "--replay", (f.dir / "a").string(), "--out", (f.dir / "replayed2").string()}) == 4);

  REQUIRE(f.train("sft", {"--mode", "sft", "--seed", "1"}) == 0);
  CHECK(bytes("sft", "final") != bytes("b", "final"));
}

TEST_CASE("eval: deterministic reports, refusal on vocabulary or artifact mismatch") {
  Fixture f;
  REQUIRE(f.train("run", {"--seed", "2"}) == 0);
  const auto eval = [&](const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> a{"eval", "--run", (f.dir / "run").string(), "--corpus", f.heldout.string(), "--out",
                               (f.dir / out).string()};
    a.insert(a.end(), extra.begin(), extra.end());
    return dsft_cli(a);
  };
  REQUIRE(eval("e1", {"--exact-match", "5"}) == 0);
  REQUIRE(eval("e2", {"--exact-match", "5"}) == 0);
  CHECK(read_file(f.dir / "e1" / "report.json") == read_file(f.dir / "e2" / "report.json"));
  CHECK(line_count(f.dir / "e1" / "exact_match.jsonl") == 5);
  verify_manifest(f.dir / "e1", read_manifest(f.dir / "e1"));

  REQUIRE(dsft_cli({"gen-corpus", "--count", "40", "--seed", "77", "--ops", "+", "--out", (f.dir / "other").string()}) ==
          0);
  const auto texts = corpus_texts(ingest_jsonl(f.dir / "other" / "corpus.jsonl"));
  Vocabulary::build(texts).save(f.dir / "other_vocab.txt");
  CHECK(eval("e3", {"--vocab", (f.dir / "other_vocab.txt").string()}) == 4);

  CHECK(dsft_cli({"compare", (f.dir / "e1").string(), (f.dir / "e2").string(), "--out", (f.dir / "cmp.txt").string()}) ==
        0);
  CHECK(read_file(f.dir / "cmp.txt").find("acc_overall") != std::string::npos);
  REQUIRE(eval("e4", {"--seed", "9"}) == 0);
  CHECK(dsft_cli({"compare", (f.dir / "e1").string(), (f.dir / "e4").string()}) == 4);

  {
    std::ofstream app(f.dir / "run" / "train_log.jsonl", std::ios::app);
    app << "tampered\n";
  }
  CHECK(eval("e5") == 4);
}

TEST_CASE("generate decodes with a trace of one commit per step") {
  Fixture f;
  REQUIRE(f.train("run", {"--seed", "3"}) == 0);
  const auto trace = f.dir / "trace.jsonl";
  CHECK(dsft_cli({"generate", "--run", (f.dir / "run").string(), "--prompt", "Mia has 12 apples. How many apples?",
                  "--length", "10", "--trace", trace.string()}) == 0);
  CHECK(line_count(trace) == 10);
  CHECK(dsft_cli({"generate", "--run", (f.dir / "run").string(), "--prompt", "x", "--length", "500"}) == 2);
}

TEST_CASE("compare on the shipped demo runs reproduces the frozen table") {
  const fs::path demo = fs::path(DSFT_SOURCE_DIR) / "demo";
  test::TempDir dir("cli_demo");
  const auto out = dir / "compare.txt";
  REQUIRE(dsft_cli({"compare", (demo / "eval" / "sft").string(), (demo / "eval" / "dsft").string(), "--out",
                    out.string(), "--json", (dir / "compare.json").string()}) == 0);
  CHECK(read_file(out) == read_file(demo / "compare.txt"));
  CHECK(read_file(dir / "compare.json") == read_file(demo / "compare.json"));
}

TEST_CASE("re-evaluating a demo checkpoint reproduces its frozen report") {
  const fs::path demo = fs::path(DSFT_SOURCE_DIR) / "demo";
  test::TempDir dir("cli_demo_eval");
  for (const std::string mode : {"sft", "dsft"}) {
    const auto recorded = read_manifest(demo / "eval" / mode);
    std::vector<std::string> args{"eval", "--run", (demo / "runs" / mode).string(), "--corpus",
                                  (demo / "corpus" / "heldout.jsonl").string(), "--out", (dir / mode).string(),
                                  "--seed", std::to_string(recorded.seed)};
    if (recorded.config["exact_match"].get<int>() > 0) {
      args.push_back("--exact-match");
      args.push_back(std::to_string(recorded.config["exact_match"].get<int>()));
    }
    REQUIRE(dsft_cli(args) == 0);
    CHECK(read_file(dir / mode / "report.json") == read_file(demo / "eval" / mode / "report.json"));
  }
}
