#include "cli.hpp"

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <iostream>

#include "commands.hpp"
#include "dsft/error.hpp"
#include "dsft/log.hpp"
#include "dsft/manifest.hpp"

namespace dsft::cli {

namespace {

void add_config_flags(CLI::App* cmd, ConfigOptions& c) {
  cmd->add_option("--config", c.config, "key=value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", c.sets, "config override key=value (repeatable)");
  cmd->add_option("--mode", c.mode, "sft or dsft");
  cmd->add_option("--seed", c.seed, "master seed");
  cmd->add_option("--steps", c.steps, "training steps");
  cmd->add_option("--workers", c.workers, "intra-run worker threads");
  cmd->add_option("--batch-size", c.batch_size, "sequences per step");
  cmd->add_option("--lr", c.lr, "Adam learning rate");
}

}  // namespace

int run(const std::vector<std::string>& args) {
  init_logging();
  CLI::App app{"Masked-diffusion fine-tuning workbench", "dsft"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  GenCorpusOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-corpus", "generate a synthetic arithmetic corpus");
  gen_cmd->add_option("--count", gen.count, "training records")->required();
  gen_cmd->add_option("--holdout", gen.holdout, "additional held-out records written to heldout.jsonl");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--ops", gen.ops, "operators to draw from");
  gen_cmd->add_option("--max-operand", gen.max_operand, "largest operand");
  gen_cmd->add_option("--min-steps", gen.min_steps, "fewest reasoning steps");
  gen_cmd->add_option("--max-steps", gen.max_steps, "most reasoning steps");

  AnalyzeOptions an;
  auto* an_cmd = app.add_subcommand("analyze", "per-class entropy statistics of a corpus");
  an_cmd->add_option("--corpus", an.corpus, "JSONL corpus (or text with --text)")->required();
  an_cmd->add_flag("--text", an.text, "treat the corpus as plain text, one sequence per line");
  an_cmd->add_option("--vocab", an.vocab, "vocabulary file (default: built from the corpus)");
  an_cmd->add_option("--out", an.out, "directory for entropy.json");
  an_cmd->add_option("--stopwords", an.stopwords, "number of most frequent words compared against");
  an_cmd->add_option("--min-freq", an.min_freq, "vocabulary frequency threshold");

  MaskPreviewOptions mp;
  auto* mp_cmd = app.add_subcommand("mask-preview", "write the mask plans a training step would use");
  mp_cmd->add_option("--corpus", mp.corpus, "JSONL corpus")->required();
  mp_cmd->add_option("--vocab", mp.vocab, "vocabulary file (default: built from the corpus)");
  mp_cmd->add_option("--step", mp.step, "training step the plans are drawn for");
  mp_cmd->add_option("--limit", mp.limit, "only the first N records");
  mp_cmd->add_option("--out", mp.out, "output JSONL (default: stdout)");
  add_config_flags(mp_cmd, mp.cfg);

  TrainOptions tr;
  auto* tr_cmd = app.add_subcommand("train", "train a denoiser");
  tr_cmd->add_option("--corpus", tr.corpus, "JSONL training corpus");
  tr_cmd->add_option("--out", tr.out, "run directory")->required();
  tr_cmd->add_option("--resume", tr.resume, "checkpoint to continue from");
  tr_cmd->add_option("--replay", tr.replay, "rerun a recorded train run and check its checkpoints");
  add_config_flags(tr_cmd, tr.cfg);

  GenerateOptions ge;
  auto* ge_cmd = app.add_subcommand("generate", "complete a prompt by iterative unmasking");
  ge_cmd->add_option("--run", ge.run, "train run directory");
  ge_cmd->add_option("--checkpoint", ge.checkpoint, "checkpoint (default: <run>/final)");
  ge_cmd->add_option("--prompt", ge.prompt, "prompt text")->required();
  ge_cmd->add_option("--length", ge.length, "completion tokens");
  ge_cmd->add_option("--steps", ge.steps, "decoding steps (0: one per token)");
  ge_cmd->add_option("--temperature", ge.temperature, "0 for greedy");
  ge_cmd->add_option("--seed", ge.seed, "sampling seed");
  ge_cmd->add_option("--trace", ge.trace, "JSONL trace of committed positions");

  EvalOptions ev;
  auto* ev_cmd = app.add_subcommand("eval", "masked reconstruction and exact-match evaluation");
  ev_cmd->add_option("--run", ev.run, "train run directory");
  ev_cmd->add_option("--checkpoint", ev.checkpoint, "checkpoint (default: <run>/final)");
  ev_cmd->add_option("--corpus", ev.corpus, "held-out JSONL corpus")->required();
  ev_cmd->add_option("--vocab", ev.vocab, "vocabulary to evaluate with (default: the run's)");
  ev_cmd->add_option("--out", ev.out, "output directory")->required();
  ev_cmd->add_option("--seed", ev.seed, "evaluation mask seed");
  ev_cmd->add_option("--ratio", ev.ratio, "evaluation mask ratio");
  ev_cmd->add_option("--exact-match", ev.exact_match, "also decode the first N answered records");
  ev_cmd->add_option("--decode-steps", ev.decode_steps, "decoding steps for exact match (0: one per token)");

  CompareOptions cmp;
  auto* cmp_cmd = app.add_subcommand("compare", "relative and absolute deltas between two eval reports");
  cmp_cmd->add_option("a", cmp.a, "baseline eval directory or report.json")->required();
  cmp_cmd->add_option("b", cmp.b, "candidate eval directory or report.json")->required();
  cmp_cmd->add_option("--out", cmp.out, "also write the table here");
  cmp_cmd->add_option("--json", cmp.json, "also write the comparison as JSON");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(ErrorKind::Input);
  }

  const std::vector<std::string> tail(args.begin() + 1, args.end());
  try {
    if (*gen_cmd) cmd_gen_corpus(gen, tail);
    if (*an_cmd) cmd_analyze(an);
    if (*mp_cmd) cmd_mask_preview(mp);
    if (*tr_cmd) cmd_train(tr, tail);
    if (*ge_cmd) cmd_generate(ge);
    if (*ev_cmd) cmd_eval(ev, tail);
    if (*cmp_cmd) cmd_compare(cmp);
  } catch (const Error& e) {
    spdlog::error("{}", e.what());
    return e.exit_code();
  } catch (const std::exception& e) {
    spdlog::error("internal error: {}", e.what());
    return static_cast<int>(ErrorKind::Internal);
  }
  return 0;
}

}  // namespace dsft::cli
