#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dsft {

using TokenId = std::int32_t;

enum class TokenClass : std::uint8_t { Numeric = 0, Operator = 1, Word = 2, Special = 3 };
inline constexpr int kNumTokenClasses = 4;

std::string_view to_string(TokenClass c);

// Special ids are fixed by the vocabulary file format.
inline constexpr TokenId kMaskId = 0;
inline constexpr TokenId kPadId = 1;
inline constexpr TokenId kBosId = 2;
inline constexpr TokenId kEosId = 3;
inline constexpr TokenId kSepId = 4;
inline constexpr int kNumSpecial = 5;

inline constexpr std::string_view kMaskToken = "<mask>";
inline constexpr std::string_view kPadToken = "<pad>";
inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kSepToken = "<sep>";
inline constexpr std::string_view kUnkToken = "<unk>";
// Sentence punctuation '.'; the bare "." token is reserved for the decimal point.
inline constexpr std::string_view kPeriodToken = "<period>";

inline constexpr std::string_view kVocabHeader = "DSFT-VOCAB v1";

/// Context-free token classification. Total and pure.
TokenClass classify_token(std::string_view token);

struct TokenizerSettings {
  // Words (and stray punctuation) seen fewer times than this map to <unk>.
  int min_freq = 2;
};

/// One pre-tokenized piece of surface text.
struct Piece {
  std::string token;
  std::size_t offset = 0;  // byte offset of the piece in the source text
};

/// Splits text into atomic pieces: single digits, the decimal point, operator
/// symbols, punctuation, and alphabetic words. Throws on bytes that have no
/// token form (non-ASCII other than the two operator glyphs, control bytes).
std::vector<Piece> pre_tokenize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;

  static Vocabulary build(std::span<const std::string> corpus, const TokenizerSettings& settings = {});
  static Vocabulary parse(std::string_view file_text);
  static Vocabulary load(const std::filesystem::path& path);

  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  int size() const { return static_cast<int>(tokens_.size()); }
  const std::string& token(TokenId id) const { return tokens_.at(static_cast<std::size_t>(id)); }
  TokenClass class_of(TokenId id) const { return classes_.at(static_cast<std::size_t>(id)); }
  std::optional<TokenId> find(std::string_view token) const;
  TokenId unk_id() const { return unk_id_; }

  /// Id for a pre-tokenized piece, falling back to <unk> for words and punctuation.
  TokenId id_for_piece(std::string_view piece) const;

 private:
  void index();

  std::vector<std::string> tokens_;
  std::vector<TokenClass> classes_;
  std::unordered_map<std::string, TokenId> id_of_;
  TokenId unk_id_ = -1;
};

/// x0: token ids, their classes, and the prompt/completion boundary.
/// Position prompt_len - 1 holds the separator.
struct TokenizedSequence {
  std::vector<TokenId> ids;
  std::vector<TokenClass> classes;
  int prompt_len = 0;

  int size() const { return static_cast<int>(ids.size()); }
  int completion_len() const { return size() - prompt_len; }
};

/// Tokenizes text whose first prompt_boundary bytes are the prompt. The
/// boundary must fall on whitespace (or the end of the prompt text) and both
/// sides must yield at least one token.
TokenizedSequence tokenize(std::string_view text, std::size_t prompt_boundary, const Vocabulary& vocab);

/// Convenience for prompt/completion pairs: joins them with one space.
TokenizedSequence tokenize_pair(std::string_view prompt, std::string_view completion, const Vocabulary& vocab);

/// Renders ids back to text. Separator, padding, BOS and EOS are dropped;
/// digits of one number are rejoined and punctuation attaches to the left.
std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab);

/// Removes all whitespace; the equivalence used for round-trip comparisons.
std::string strip_whitespace(std::string_view text);

}  // namespace dsft
