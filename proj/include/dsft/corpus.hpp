#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsft/tokenizer.hpp"

namespace dsft {

struct CorpusRecord {
  std::string prompt;
  std::string completion;
  std::string answer;  // canonical numeric string, empty when unknown

  bool operator==(const CorpusRecord&) const = default;
};

/// Throws input_error if the record violates the prompt/completion/answer invariants.
void validate_record(const CorpusRecord& r);

struct GeneratorSpec {
  int count = 1000;
  std::string ops = "+-*/";
  int min_operand = 1;
  int max_operand = 99;
  int min_steps = 1;
  int max_steps = 3;
};

/// Synthetic arithmetic word problems with step-by-step completions. Pure in (spec, seed).
std::vector<CorpusRecord> generate_corpus(const GeneratorSpec& spec, std::uint64_t seed);

std::vector<CorpusRecord> ingest_jsonl(const std::filesystem::path& path);
std::vector<CorpusRecord> parse_jsonl(std::string_view text);
std::string export_jsonl(const std::vector<CorpusRecord>& records);

/// Content hash of the canonical JSONL rendering.
std::string corpus_fingerprint(const std::vector<CorpusRecord>& records);

std::vector<std::string> corpus_texts(const std::vector<CorpusRecord>& records);
std::vector<TokenizedSequence> tokenize_corpus(const std::vector<CorpusRecord>& records, const Vocabulary& vocab);

struct ClassEntropy {
  double p_mass = 0.0;
  double mean_surprisal = 0.0;  // nats per token of this class
  double entropy = 0.0;         // this class's share of H(X), nats
  long count = 0;
};

struct EntropyReport {
  std::array<ClassEntropy, kNumTokenClasses> per_class{};
  double total_entropy = 0.0;  // nats
  long token_count = 0;
  int vocab_size = 0;
  std::vector<TokenId> stopwords;        // most frequent Word tokens
  double stopword_mean_surprisal = 0.0;  // over occurrences of the stopwords

  const ClassEntropy& of(TokenClass c) const { return per_class[static_cast<std::size_t>(c)]; }
  bool numeric_exceeds_stopwords() const {
    return of(TokenClass::Numeric).count > 0 && of(TokenClass::Numeric).mean_surprisal > stopword_mean_surprisal;
  }
};

/// Unigram entropy statistics over every token of the tokenized corpus.
EntropyReport entropy_report(const std::vector<TokenizedSequence>& corpus, const Vocabulary& vocab,
                             int num_stopwords = 10);

nlohmann::ordered_json to_json(const EntropyReport& r, const Vocabulary& vocab);
std::string render_table(const EntropyReport& r, const Vocabulary& vocab);

}  // namespace dsft
