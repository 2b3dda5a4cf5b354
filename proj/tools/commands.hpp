#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dsft::cli {

struct GenCorpusOptions {
  int count = 1000;
  int holdout = 0;
  std::uint64_t seed = 1;
  std::string out;
  std::string ops = "+-*/";
  int max_operand = 99;
  int min_steps = 1;
  int max_steps = 3;
};

struct AnalyzeOptions {
  std::string corpus;
  bool text = false;  // corpus is plain text, one sequence per line
  std::string vocab;
  std::string out;
  int stopwords = 10;
  int min_freq = 2;
};

/// Config file, then --set assignments, then the dedicated flags that were given.
struct ConfigOptions {
  std::string config;
  std::vector<std::string> sets;
  std::optional<std::string> mode;
  std::optional<std::uint64_t> seed;
  std::optional<long> steps;
  std::optional<int> workers;
  std::optional<int> batch_size;
  std::optional<double> lr;
};

struct MaskPreviewOptions {
  ConfigOptions cfg;
  std::string corpus;
  std::string vocab;
  long step = 0;
  long limit = 0;
  std::string out;
};

struct TrainOptions {
  ConfigOptions cfg;
  std::string corpus;
  std::string out;
  std::string resume;
  std::string replay;
};

struct GenerateOptions {
  std::string run;
  std::string checkpoint;
  std::string prompt;
  int length = 24;
  int steps = 0;
  double temperature = 0.0;
  std::uint64_t seed = 1;
  std::string trace;
};

struct EvalOptions {
  std::string run;
  std::string checkpoint;
  std::string corpus;
  std::string vocab;
  std::string out;
  std::uint64_t seed = 1234;
  double ratio = 0.15;
  int exact_match = 0;
  int decode_steps = 0;
};

struct CompareOptions {
  std::string a;
  std::string b;
  std::string out;
  std::string json;
};

void cmd_gen_corpus(const GenCorpusOptions& o, const std::vector<std::string>& args);
void cmd_analyze(const AnalyzeOptions& o);
void cmd_mask_preview(const MaskPreviewOptions& o);
void cmd_train(const TrainOptions& o, const std::vector<std::string>& args);
void cmd_generate(const GenerateOptions& o);
void cmd_eval(const EvalOptions& o, const std::vector<std::string>& args);
void cmd_compare(const CompareOptions& o);

}  // namespace dsft::cli
