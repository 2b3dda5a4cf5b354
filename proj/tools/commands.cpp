#include "commands.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <filesystem>
#include <iostream>

#include <fmt/format.h>

#include "dsft/checkpoint.hpp"
#include "dsft/config.hpp"
#include "dsft/corpus.hpp"
#include "dsft/error.hpp"
#include "dsft/eval.hpp"
#include "dsft/hash.hpp"
#include "dsft/manifest.hpp"
#include "dsft/masking.hpp"
#include "dsft/sampler.hpp"
#include "dsft/trainer.hpp"

namespace fs = std::filesystem;

namespace dsft::cli {

namespace {

constexpr const char* kCorpusFile = "corpus.jsonl";
constexpr const char* kHeldoutFile = "heldout.jsonl";
constexpr const char* kVocabFile = "vocab.txt";
constexpr const char* kConfigFile = "config.cfg";
constexpr const char* kTrainLog = "train_log.jsonl";
constexpr const char* kFinalStem = "final";
constexpr const char* kReportFile = "report.json";

std::string vocab_hash(const Vocabulary& v) { return sha256_hex(v.serialize()); }

void ensure_dir(const fs::path& dir) {
  if (dir.empty()) throw input_error("an output directory is required (--out)");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw input_error("cannot create " + dir.string() + ": " + ec.message());
}

ConfigMap assemble_config(const ConfigOptions& o) {
  ConfigMap m = o.config.empty() ? ConfigMap{} : ConfigMap::load(o.config);
  for (const auto& s : o.sets) m.set_assignment(s);
  if (o.mode) m.set("mode", *o.mode);
  if (o.seed) m.set("seed", std::to_string(*o.seed));
  if (o.steps) m.set("steps", std::to_string(*o.steps));
  if (o.workers) m.set("workers", std::to_string(*o.workers));
  if (o.batch_size) m.set("batch_size", std::to_string(*o.batch_size));
  if (o.lr) m.set("lr", fmt::format("{}", *o.lr));
  return resolved(m);
}

Vocabulary vocab_for(const std::vector<CorpusRecord>& records, const std::string& vocab_path,
                     const TokenizerSettings& settings) {
  if (!vocab_path.empty()) return Vocabulary::load(vocab_path);
  const auto texts = corpus_texts(records);
  return Vocabulary::build(texts, settings);
}

/// The config a checkpoint records: everything except knobs that cannot change the result.
nlohmann::ordered_json checkpoint_config(const ConfigMap& resolved_cfg) {
  auto j = resolved_cfg.to_json();
  j.erase("workers");
  return j;
}

fs::path run_checkpoint(const std::string& run, const std::string& checkpoint) {
  if (!checkpoint.empty()) return checkpoint;
  if (run.empty()) throw input_error("either --run or --checkpoint is required");
  return fs::path(run) / kFinalStem;
}

struct LoadedRun {
  Checkpoint ckpt;
  Vocabulary vocab;
};

/// Loads a checkpoint and its vocabulary, verifying the run manifest when there is one.
LoadedRun load_run(const std::string& run, const std::string& checkpoint, const std::string& vocab_override) {
  if (!run.empty() && fs::exists(fs::path(run) / std::string(kManifestFile))) {
    verify_manifest(run, read_manifest(run));
  }
  LoadedRun r;
  r.ckpt = load_checkpoint(run_checkpoint(run, checkpoint));
  fs::path vocab_path = vocab_override;
  if (vocab_path.empty()) {
    vocab_path = run.empty() ? checkpoint_manifest_path(checkpoint).parent_path() / kVocabFile : fs::path(run) / kVocabFile;
  }
  r.vocab = Vocabulary::load(vocab_path);
  const auto h = vocab_hash(r.vocab);
  if (h != r.ckpt.vocab_hash) {
    throw integrity_error(fmt::format("vocabulary {} (hash {}) does not match the checkpoint's vocabulary (hash {})",
                                      vocab_path.string(), h.substr(0, 16), r.ckpt.vocab_hash.substr(0, 16)));
  }
  if (r.ckpt.params.config.vocab_size != r.vocab.size()) {
    throw integrity_error("checkpoint vocab_size differs from the vocabulary size");
  }
  return r;
}

std::vector<TokenizedSequence> tokenize_lines(const std::string& text, Vocabulary& vocab, int min_freq) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < text.size()) {
    auto end = text.find('\n', start);
    if (end == std::string::npos) end = text.size();
    std::string line = text.substr(start, end - start);
    if (!strip_whitespace(line).empty()) lines.push_back(std::move(line));
    start = end + 1;
  }
  if (lines.empty()) throw input_error("text corpus is empty");
  if (vocab.size() == 0) vocab = Vocabulary::build(lines, TokenizerSettings{min_freq});
  std::vector<TokenizedSequence> out;
  for (const auto& line : lines) {
    TokenizedSequence s;
    for (const auto& p : pre_tokenize(line)) {
      const TokenId id = vocab.id_for_piece(p.token);
      s.ids.push_back(id);
      s.classes.push_back(vocab.class_of(id));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string arg_value(const std::vector<std::string>& args, const std::string& flag) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == flag && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind(flag + "=", 0) == 0) return args[i].substr(flag.size() + 1);
  }
  return {};
}

const Artifact* find_artifact(const RunManifest& m, const std::string& rel) {
  for (const auto& a : m.artifacts) {
    if (a.path == rel) return &a;
  }
  return nullptr;
}

fs::path report_path(const std::string& p) {
  const fs::path path(p);
  return fs::is_directory(path) ? path / kReportFile : path;
}

}  // namespace

void cmd_gen_corpus(const GenCorpusOptions& o, const std::vector<std::string>& args) {
  if (o.count < 1) throw input_error("gen-corpus: --count must be at least 1");
  if (o.holdout < 0) throw input_error("gen-corpus: --holdout must be non-negative");
  GeneratorSpec spec;
  spec.count = o.count + o.holdout;
  spec.ops = o.ops;
  spec.max_operand = o.max_operand;
  spec.min_steps = o.min_steps;
  spec.max_steps = o.max_steps;
  auto records = generate_corpus(spec, o.seed);
  std::vector<CorpusRecord> heldout(records.begin() + o.count, records.end());
  records.resize(static_cast<std::size_t>(o.count));

  const fs::path dir(o.out);
  ensure_dir(dir);
  write_file(dir / kCorpusFile, export_jsonl(records));
  RunManifest m;
  m.tool_version = std::string(tool_version());
  m.command = "gen-corpus";
  m.args = args;
  m.config = {{"count", o.count}, {"holdout", o.holdout}, {"ops", o.ops}, {"max_operand", o.max_operand},
              {"min_steps", o.min_steps}, {"max_steps", o.max_steps}};
  m.corpus_fingerprint = corpus_fingerprint(records);
  m.seed = o.seed;
  m.add_artifact(dir, kCorpusFile);
  if (o.holdout > 0) {
    write_file(dir / kHeldoutFile, export_jsonl(heldout));
    m.add_artifact(dir, kHeldoutFile);
  }

  double prompt_chars = 0, completion_chars = 0;
  for (const auto& r : records) {
    prompt_chars += static_cast<double>(r.prompt.size());
    completion_chars += static_cast<double>(r.completion.size());
  }
  nlohmann::ordered_json stats;
  stats["count"] = records.size();
  stats["heldout"] = heldout.size();
  stats["seed"] = o.seed;
  stats["fingerprint"] = m.corpus_fingerprint;
  stats["mean_prompt_chars"] = prompt_chars / static_cast<double>(records.size());
  stats["mean_completion_chars"] = completion_chars / static_cast<double>(records.size());
  write_file(dir / "stats.json", stats.dump(2) + "\n");
  m.add_artifact(dir, "stats.json");
  write_manifest(dir, m);
  spdlog::info("wrote {} records to {}", records.size(), (dir / kCorpusFile).string());
}

void cmd_analyze(const AnalyzeOptions& o) {
  Vocabulary vocab;
  std::vector<TokenizedSequence> seqs;
  if (o.text) {
    if (!fs::exists(o.corpus)) throw input_error("text corpus not found: " + o.corpus);
    if (!o.vocab.empty()) vocab = Vocabulary::load(o.vocab);
    seqs = tokenize_lines(read_file(o.corpus), vocab, o.min_freq);
  } else {
    const auto records = ingest_jsonl(o.corpus);
    vocab = vocab_for(records, o.vocab, TokenizerSettings{o.min_freq});
    seqs = tokenize_corpus(records, vocab);
  }
  const auto rep = entropy_report(seqs, vocab, o.stopwords);
  std::cout << render_table(rep, vocab);
  if (!o.out.empty()) {
    ensure_dir(o.out);
    write_file(fs::path(o.out) / "entropy.json", to_json(rep, vocab).dump(2) + "\n");
  }
  if (!rep.numeric_exceeds_stopwords()) {
    throw Error(ErrorKind::SelfCheck,
                fmt::format("self-check failed: numeric mean surprisal {:.4f} nats does not exceed the stopword mean "
                            "surprisal {:.4f} nats",
                            rep.of(TokenClass::Numeric).mean_surprisal, rep.stopword_mean_surprisal));
  }
  spdlog::info("self-check passed: numeric tokens carry more surprisal than the {} most frequent words", o.stopwords);
}

void cmd_mask_preview(const MaskPreviewOptions& o) {
  const ConfigMap cfg = assemble_config(o.cfg);
  const TrainConfig tc = train_config_from(cfg);
  const auto records = ingest_jsonl(o.corpus);
  const auto vocab = vocab_for(records, o.vocab, tokenizer_settings_from(cfg));
  const MaskConfig mask = tc.effective_mask();
  const std::size_t n = o.limit > 0 ? std::min(records.size(), static_cast<std::size_t>(o.limit)) : records.size();

  std::string out;
  double ratio_sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    TokenizedSequence seq;
    try {
      seq = tokenize_pair(records[i].prompt, records[i].completion, vocab);
    } catch (const Error& e) {
      throw input_error(fmt::format("record {}: {}", i + 1, e.what()));
    }
    if (seq.completion_len() < 1) throw input_error(fmt::format("record {}: prompt-only sequence", i + 1));
    const auto plan = compose_mask_plan(seq, mask, o.step, plan_stream(tc.seed, i, o.step));
    auto j = nlohmann::ordered_json{{"index", i}};
    j.update(mask_preview_json(seq, plan));
    const double ratio = static_cast<double>(plan.size()) / static_cast<double>(seq.completion_len());
    j["realized_ratio"] = ratio;
    ratio_sum += ratio;
    out += j.dump();
    out.push_back('\n');
  }
  if (o.out.empty()) {
    std::cout << out;
  } else {
    write_file(o.out, out);
  }
  spdlog::info("mode {} step {}: mean realized mask ratio {:.4f} over {} sequences", to_string(tc.mode), o.step,
               n > 0 ? ratio_sum / static_cast<double>(n) : 0.0, n);
}

void cmd_train(const TrainOptions& o, const std::vector<std::string>& args) {
  ConfigMap cfg;
  std::string corpus_path = o.corpus;
  std::optional<RunManifest> replay;
  if (!o.replay.empty()) {
    replay = read_manifest(o.replay);
    if (replay->command != "train") throw input_error("--replay expects the directory of a train run");
    const ConfigMap recorded = ConfigMap::from_json(replay->config);
    cfg = resolved(recorded);
    if (o.cfg.workers) cfg.set("workers", std::to_string(*o.cfg.workers));
    if (corpus_path.empty()) corpus_path = arg_value(replay->args, "--corpus");
  } else {
    cfg = assemble_config(o.cfg);
  }
  if (corpus_path.empty()) throw input_error("train: --corpus is required");
  TrainConfig tc = train_config_from(cfg);
  const auto records = ingest_jsonl(corpus_path);
  const auto fingerprint = corpus_fingerprint(records);
  if (replay && fingerprint != replay->corpus_fingerprint) {
    throw integrity_error("replay: corpus " + corpus_path + " differs from the one the run was trained on");
  }
  const auto vocab = Vocabulary::build(corpus_texts(records), tokenizer_settings_from(cfg));
  const auto vhash = vocab_hash(vocab);
  auto seqs = tokenize_corpus(records, vocab);
  tc.model.vocab_size = vocab.size();

  const fs::path dir(o.out);
  ensure_dir(dir);
  vocab.save(dir / kVocabFile);
  write_file(dir / kConfigFile, cfg.serialize());

  std::optional<Trainer> trainer;
  if (!o.resume.empty()) {
    const auto ck = load_checkpoint(o.resume);
    if (ck.vocab_hash != vhash) throw integrity_error("resume: checkpoint vocabulary differs from the corpus vocabulary");
    trainer.emplace(tc, std::move(seqs), ck);
    spdlog::info("resuming from step {}", ck.step);
  } else {
    trainer.emplace(tc, std::move(seqs), init_params(tc.model, tc.seed));
  }

  const auto ckpt_json = checkpoint_config(cfg);
  const auto save = [&](const Trainer& t, const std::string& stem) {
    Checkpoint ck = t.checkpoint();
    ck.vocab_hash = vhash;
    ck.train_config = ckpt_json;
    save_checkpoint(dir / stem, ck);
  };

  std::string log;
  std::vector<std::string> saved;
  TrainHooks hooks;
  hooks.on_step = [&](const TrainStepReport& r) {
    log += to_json(r).dump();
    log.push_back('\n');
    if (r.step % 100 == 0 || r.step + 1 == tc.steps) {
      spdlog::info("step {:>6}  loss {:.4f}  masked {}  numeric {}  ratio {:.3f}", r.step, r.loss, r.masked,
                   r.numeric_masked, r.curriculum_ratio);
    }
  };
  hooks.on_checkpoint = [&](const Trainer& t) {
    const auto stem = fmt::format("ckpt-{:06d}", t.steps_done());
    save(t, stem);
    saved.push_back(stem);
  };
  spdlog::info("training {} for {} steps on {} sequences (vocab {}, {} parameters)", to_string(tc.mode), tc.steps,
               records.size(), vocab.size(), tc.model.parameter_count());
  run_training(*trainer, hooks);
  save(*trainer, kFinalStem);
  write_file(dir / kTrainLog, log);

  RunManifest m;
  m.tool_version = std::string(tool_version());
  m.command = "train";
  m.args = replay ? replay->args : args;
  m.config = cfg.to_json();
  m.vocab_hash = vhash;
  m.corpus_fingerprint = fingerprint;
  m.seed = tc.seed;
  for (const char* f : {kVocabFile, kConfigFile, kTrainLog}) m.add_artifact(dir, f);
  for (const auto& stem : saved) {
    m.add_artifact(dir, stem + ".json");
    m.add_artifact(dir, stem + ".bin");
  }
  m.add_artifact(dir, std::string(kFinalStem) + ".json");
  m.add_artifact(dir, std::string(kFinalStem) + ".bin");
  write_manifest(dir, m);

  if (replay) {
    for (const auto& a : m.artifacts) {
      if (!a.path.ends_with(".json") && !a.path.ends_with(".bin")) continue;
      const Artifact* orig = find_artifact(*replay, a.path);
      if (!orig || orig->sha256 != a.sha256) {
        throw integrity_error("replay: " + a.path + " differs from the recorded run");
      }
    }
    spdlog::info("replay reproduced every recorded checkpoint bit-for-bit");
  }
  spdlog::info("wrote {}", (dir / kFinalStem).string());
}

void cmd_generate(const GenerateOptions& o) {
  const auto run = load_run(o.run, o.checkpoint, "");
  DecodeConfig d;
  d.length = o.length;
  d.steps = o.steps;
  d.temperature = o.temperature;
  CounterRng rng = CounterRng(o.seed).split("decode");
  std::vector<DecodeTraceStep> trace;
  const auto ids = generate(run.ckpt.params, encode_prompt(o.prompt, run.vocab), d, rng,
                            o.trace.empty() ? nullptr : &trace);
  std::cout << detokenize(ids, run.vocab) << "\n";
  if (!o.trace.empty()) {
    std::string out;
    for (const auto& s : trace) out += to_json(s).dump() + "\n";
    write_file(o.trace, out);
  }
}

void cmd_eval(const EvalOptions& o, const std::vector<std::string>& args) {
  const auto run = load_run(o.run, o.checkpoint, o.vocab);
  const auto records = ingest_jsonl(o.corpus);
  const auto seqs = tokenize_corpus(records, run.vocab);
  auto report = reconstruction_eval(run.ckpt.params, seqs, o.ratio, o.seed);

  const fs::path dir(o.out);
  ensure_dir(dir);
  RunManifest m;
  m.tool_version = std::string(tool_version());
  m.command = "eval";
  m.args = args;
  m.config = {{"ratio", o.ratio},
              {"exact_match", o.exact_match},
              {"decode_steps", o.decode_steps},
              {"checkpoint", run_checkpoint(o.run, o.checkpoint).string()}};
  m.vocab_hash = run.ckpt.vocab_hash;
  m.corpus_fingerprint = corpus_fingerprint(records);
  m.seed = o.seed;

  if (o.exact_match > 0) {
    std::vector<CorpusRecord> subset;
    for (const auto& r : records) {
      if (!r.answer.empty() && static_cast<int>(subset.size()) < o.exact_match) subset.push_back(r);
    }
    DecodeConfig d;
    d.steps = o.decode_steps;
    const auto em = exact_match_eval(run.ckpt.params, run.vocab, subset, d, o.seed);
    report.exact_match = em.rate;
    report.exact_match_n = static_cast<long>(subset.size());
    std::string lines;
    long unparsed = 0;
    for (const auto& r : em.records) {
      nlohmann::ordered_json j{{"index", r.index},
                               {"generated", r.generated},
                               {"extracted", r.extracted ? nlohmann::ordered_json(*r.extracted) : nullptr},
                               {"expected", r.expected},
                               {"correct", r.correct}};
      if (!r.extracted) ++unparsed;
      lines += j.dump() + "\n";
    }
    write_file(dir / "exact_match.jsonl", lines);
    m.add_artifact(dir, "exact_match.jsonl");
    if (unparsed > 0) spdlog::warn("{} generations contained no numeric answer", unparsed);
  }
  write_file(dir / kReportFile, to_json(report).dump(2) + "\n");
  m.add_artifact(dir, kReportFile);
  write_manifest(dir, m);
  std::cout << fmt::format("acc_overall {:.4f}  numeric {:.4f}  operator {:.4f}  word {:.4f}  n {}\n",
                           report.acc_overall, report.acc(TokenClass::Numeric), report.acc(TokenClass::Operator),
                           report.acc(TokenClass::Word), report.n);
  if (report.exact_match) std::cout << fmt::format("exact_match {:.4f} over {}\n", *report.exact_match, report.exact_match_n);
}

void cmd_compare(const CompareOptions& o) {
  const auto load = [](const std::string& p) {
    const fs::path path(p);
    if (fs::is_directory(path) && fs::exists(path / std::string(kManifestFile))) {
      verify_manifest(path, read_manifest(path));
    }
    const auto file = report_path(p);
    if (!fs::exists(file)) throw input_error("no eval report at " + file.string());
    try {
      return eval_report_from_json(nlohmann::json::parse(read_file(file)));
    } catch (const nlohmann::json::exception& e) {
      throw input_error(file.string() + ": " + e.what());
    }
  };
  const auto cmp = compare_runs(load(o.a), load(o.b));
  const auto text = render_text(cmp);
  std::cout << text;
  if (!o.out.empty()) write_file(o.out, text);
  if (!o.json.empty()) write_file(o.json, to_json(cmp).dump(2) + "\n");
}

}  // namespace dsft::cli
