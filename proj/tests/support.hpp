#pragma once

#include <unistd.h>

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dsft/corpus.hpp"
#include "dsft/tokenizer.hpp"

namespace dsft::test {

// A fresh scratch directory under the build tree, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& name)
      : path_(std::filesystem::temp_directory_path() / ("dsft_test_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() { std::filesystem::remove_all(path_); }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

 private:
  std::filesystem::path path_;
};

struct TinyCorpus {
  std::vector<CorpusRecord> records;
  Vocabulary vocab;
  std::vector<TokenizedSequence> seqs;
};

inline TinyCorpus make_corpus(int count, std::uint64_t seed) {
  TinyCorpus c;
  GeneratorSpec spec;
  spec.count = count;
  c.records = generate_corpus(spec, seed);
  const auto texts = corpus_texts(c.records);
  c.vocab = Vocabulary::build(texts);
  c.seqs = tokenize_corpus(c.records, c.vocab);
  return c;
}

}  // namespace dsft::test
