#include "dsft/tokenizer.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <map>
#include <sstream>

#include "dsft/error.hpp"
#include "dsft/hash.hpp"

namespace dsft {

namespace {

constexpr std::string_view kMinusGlyph = "\xE2\x88\x92";  // U+2212
constexpr std::string_view kTimesGlyph = "\xC3\x97";      // U+00D7

constexpr std::array<std::string_view, 12> kOperators = {
    "+", "-", kMinusGlyph, "*", kTimesGlyph, "/", "=", "<", ">", "%", "(", ")"};

constexpr std::array<std::string_view, kNumSpecial> kSpecials = {kMaskToken, kPadToken, kBosToken, kEosToken,
                                                                 kSepToken};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_alpha(char c) { return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z'); }
bool is_space(char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_operator(std::string_view s) {
  return std::find(kOperators.begin(), kOperators.end(), s) != kOperators.end();
}

bool is_numeric_string(std::string_view s) { return s == "." || (s.size() == 1 && is_digit(s[0])); }

// Tokens the vocabulary always contains, independent of the corpus.
std::vector<std::string> atomic_tokens() {
  std::vector<std::string> out;
  for (char d = '0'; d <= '9'; ++d) out.emplace_back(1, d);
  out.emplace_back(".");
  for (auto op : kOperators) out.emplace_back(op);
  out.emplace_back(kPeriodToken);
  return out;
}

bool attaches_left(std::string_view tok) {
  return tok == kPeriodToken || tok == "," || tok == "?" || tok == "!" || tok == ";" || tok == ":";
}

}  // namespace

std::string_view to_string(TokenClass c) {
  switch (c) {
    case TokenClass::Numeric: return "Numeric";
    case TokenClass::Operator: return "Operator";
    case TokenClass::Word: return "Word";
    case TokenClass::Special: return "Special";
  }
  return "?";
}

TokenClass classify_token(std::string_view token) {
  if (is_numeric_string(token)) return TokenClass::Numeric;
  if (is_operator(token)) return TokenClass::Operator;
  if (std::find(kSpecials.begin(), kSpecials.end(), token) != kSpecials.end()) return TokenClass::Special;
  return TokenClass::Word;
}

std::vector<Piece> pre_tokenize(std::string_view text) {
  std::vector<Piece> out;
  std::size_t i = 0;
  const std::size_t n = text.size();
  while (i < n) {
    const char c = text[i];
    if (is_space(c)) {
      ++i;
    } else if (is_digit(c)) {
      out.push_back({std::string(1, c), i});
      ++i;
    } else if (c == '.') {
      const bool decimal = i > 0 && is_digit(text[i - 1]) && i + 1 < n && is_digit(text[i + 1]);
      out.push_back({decimal ? std::string(".") : std::string(kPeriodToken), i});
      ++i;
    } else if (is_alpha(c)) {
      std::size_t j = i;
      while (j < n && is_alpha(text[j])) ++j;
      out.push_back({std::string(text.substr(i, j - i)), i});
      i = j;
    } else if (text.substr(i, kMinusGlyph.size()) == kMinusGlyph) {
      out.push_back({std::string(kMinusGlyph), i});
      i += kMinusGlyph.size();
    } else if (text.substr(i, kTimesGlyph.size()) == kTimesGlyph) {
      out.push_back({std::string(kTimesGlyph), i});
      i += kTimesGlyph.size();
    } else if (static_cast<unsigned char>(c) > 0x20 && static_cast<unsigned char>(c) < 0x7f) {
      out.push_back({std::string(1, c), i});
      ++i;
    } else {
      std::ostringstream msg;
      msg << "untokenizable byte 0x" << std::hex << static_cast<int>(static_cast<unsigned char>(c)) << std::dec
          << " at offset " << i;
      throw input_error(msg.str());
    }
  }
  return out;
}

Vocabulary Vocabulary::build(std::span<const std::string> corpus, const TokenizerSettings& settings) {
  if (corpus.empty()) throw input_error("build_vocab: empty corpus");
  const auto atomic = atomic_tokens();
  std::map<std::string, long> freq;
  for (const auto& text : corpus) {
    for (auto& piece : pre_tokenize(text)) {
      if (std::find(atomic.begin(), atomic.end(), piece.token) != atomic.end()) continue;
      ++freq[piece.token];
    }
  }
  std::vector<std::pair<std::string, long>> words;
  for (auto& [tok, count] : freq) {
    if (count >= settings.min_freq) words.emplace_back(tok, count);
  }
  // Frequency-descending, ties by string: independent of corpus order.
  std::stable_sort(words.begin(), words.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

  Vocabulary v;
  for (auto s : kSpecials) v.tokens_.emplace_back(s);
  v.tokens_.emplace_back(kUnkToken);
  for (auto& tok : atomic) v.tokens_.push_back(tok);
  for (auto& [tok, count] : words) v.tokens_.push_back(tok);
  v.index();
  return v;
}

void Vocabulary::index() {
  id_of_.clear();
  classes_.clear();
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (!id_of_.emplace(tokens_[i], static_cast<TokenId>(i)).second) {
      throw input_error("vocabulary: duplicate token '" + tokens_[i] + "'");
    }
    classes_.push_back(classify_token(tokens_[i]));
  }
  for (int i = 0; i < kNumSpecial; ++i) {
    if (tokens_.size() <= static_cast<std::size_t>(i) || tokens_[i] != kSpecials[i]) {
      throw input_error("vocabulary: special tokens must occupy ids 0-4");
    }
  }
  auto unk = id_of_.find(std::string(kUnkToken));
  if (unk == id_of_.end()) throw input_error("vocabulary: missing <unk>");
  unk_id_ = unk->second;
}

Vocabulary Vocabulary::parse(std::string_view file_text) {
  std::istringstream in{std::string(file_text)};
  std::string line;
  if (!std::getline(in, line) || line != kVocabHeader) throw input_error("vocabulary: bad header");
  Vocabulary v;
  while (std::getline(in, line)) {
    if (line.empty()) throw input_error("vocabulary: empty token at line " + std::to_string(v.tokens_.size() + 2));
    v.tokens_.push_back(line);
  }
  v.index();
  return v;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) { return parse(read_file(path)); }

std::string Vocabulary::serialize() const {
  std::string out(kVocabHeader);
  out.push_back('\n');
  for (const auto& t : tokens_) {
    out += t;
    out.push_back('\n');
  }
  return out;
}

void Vocabulary::save(const std::filesystem::path& path) const { write_file(path, serialize()); }

std::optional<TokenId> Vocabulary::find(std::string_view token) const {
  auto it = id_of_.find(std::string(token));
  if (it == id_of_.end()) return std::nullopt;
  return it->second;
}

TokenId Vocabulary::id_for_piece(std::string_view piece) const {
  if (auto id = find(piece)) return *id;
  return unk_id_;
}

TokenizedSequence tokenize(std::string_view text, std::size_t prompt_boundary, const Vocabulary& vocab) {
  if (prompt_boundary > text.size()) throw input_error("tokenize: prompt boundary beyond text");
  const bool on_ws = prompt_boundary == 0 || prompt_boundary == text.size() || is_space(text[prompt_boundary]) ||
                     is_space(text[prompt_boundary - 1]);
  if (!on_ws) throw input_error("tokenize: prompt boundary must lie on whitespace");

  const auto pieces = pre_tokenize(text);
  TokenizedSequence seq;
  int prompt_pieces = 0;
  for (const auto& p : pieces) {
    if (p.offset < prompt_boundary) ++prompt_pieces;
  }
  if (prompt_pieces == 0) throw input_error("tokenize: prompt must be non-empty");
  if (prompt_pieces == static_cast<int>(pieces.size())) throw input_error("tokenize: completion must be non-empty");

  seq.ids.reserve(pieces.size() + 1);
  for (int i = 0; i < static_cast<int>(pieces.size()); ++i) {
    if (i == prompt_pieces) seq.ids.push_back(kSepId);
    seq.ids.push_back(vocab.id_for_piece(pieces[static_cast<std::size_t>(i)].token));
  }
  seq.prompt_len = prompt_pieces + 1;
  seq.classes.reserve(seq.ids.size());
  for (TokenId id : seq.ids) seq.classes.push_back(vocab.class_of(id));
  return seq;
}

TokenizedSequence tokenize_pair(std::string_view prompt, std::string_view completion, const Vocabulary& vocab) {
  std::string text;
  text.reserve(prompt.size() + completion.size() + 1);
  text.append(prompt);
  text.push_back(' ');
  text.append(completion);
  return tokenize(text, prompt.size(), vocab);
}

std::string detokenize(std::span<const TokenId> ids, const Vocabulary& vocab) {
  std::string out;
  std::string_view prev;
  for (TokenId id : ids) {
    if (id == kPadId || id == kBosId || id == kEosId || id == kSepId) {
      prev = {};
      continue;
    }
    const std::string& tok = vocab.token(id);
    std::string_view surface = tok == kPeriodToken ? std::string_view(".") : std::string_view(tok);
    const bool continues_number = is_numeric_string(tok) && is_numeric_string(prev);
    if (!out.empty() && !continues_number && !attaches_left(tok)) out.push_back(' ');
    out.append(surface);
    prev = tok;
  }
  return out;
}

std::string strip_whitespace(std::string_view text) {
  std::string out;
  for (char c : text) {
    if (!is_space(c)) out.push_back(c);
  }
  return out;
}

}  // namespace dsft
