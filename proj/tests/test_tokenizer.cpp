#include <doctest.h>

#include <set>

#include "dsft/error.hpp"
#include "dsft/tokenizer.hpp"
#include "support.hpp"

using namespace dsft;

TEST_CASE("digits and operators are atomic vocabulary entries") {
  const std::vector<std::string> corpus{"3 + 4 = 7"};
  const auto v = Vocabulary::build(corpus);
  for (const char* t : {"3", "+", "4", "=", "7"}) {
    REQUIRE(v.find(t).has_value());
  }
}

TEST_CASE("vocabulary build is deterministic and order independent") {
  const std::vector<std::string> a{"Tom has 3 apples.", "Ann has 5 pears.", "Tom eats apples."};
  const std::vector<std::string> b{"Tom eats apples.", "Tom has 3 apples.", "Ann has 5 pears."};
  CHECK(Vocabulary::build(a).serialize() == Vocabulary::build(a).serialize());
  CHECK(Vocabulary::build(a).serialize() == Vocabulary::build(b).serialize());
}

TEST_CASE("frequency floor decides between a word entry and <unk>") {
  std::vector<std::string> corpus(5, "apples");
  corpus.push_back("pears");
  const auto low = Vocabulary::build(corpus, TokenizerSettings{3});
  CHECK(low.find("apples").has_value());
  CHECK_FALSE(low.find("pears").has_value());
  const auto high = Vocabulary::build(corpus, TokenizerSettings{10});
  CHECK_FALSE(high.find("apples").has_value());
  const auto seq = tokenize("apples apples", 6, high);
  CHECK(seq.ids.back() == high.unk_id());
  CHECK(high.class_of(high.unk_id()) == TokenClass::Word);
}

TEST_CASE("ids are dense and id -> token -> id is the identity") {
  const auto c = test::make_corpus(200, 3);
  for (TokenId id = 0; id < c.vocab.size(); ++id) {
    REQUIRE(c.vocab.find(c.vocab.token(id)) == id);
  }
  CHECK(c.vocab.token(kMaskId) == kMaskToken);
  CHECK(c.vocab.token(kPadId) == kPadToken);
  CHECK(c.vocab.token(kBosId) == kBosToken);
  CHECK(c.vocab.token(kEosId) == kEosToken);
  CHECK(c.vocab.token(kSepId) == kSepToken);
}

TEST_CASE("vocabulary file round trip") {
  const auto c = test::make_corpus(50, 1);
  const auto text = c.vocab.serialize();
  CHECK(text.rfind(std::string(kVocabHeader) + "\n", 0) == 0);
  const auto back = Vocabulary::parse(text);
  CHECK(back.serialize() == text);
  CHECK_THROWS_AS(Vocabulary::parse("WRONG\n<mask>\n"), Error);
  CHECK_THROWS_AS(Vocabulary::parse(std::string(kVocabHeader) + "\n<pad>\n<mask>\n<bos>\n<eos>\n<sep>\n<unk>\n"), Error);
}

TEST_CASE("tokenize splits numbers per digit and inserts the separator") {
  const std::vector<std::string> corpus{"x = 12", "x"};
  const auto v = Vocabulary::build(corpus);
  const auto seq = tokenize("x = 12", 3, v);
  const std::vector<TokenId> expected{*v.find("x"), *v.find("="), kSepId, *v.find("1"), *v.find("2")};
  CHECK(seq.ids == expected);
  const std::vector<TokenClass> classes{TokenClass::Word, TokenClass::Operator, TokenClass::Special,
                                        TokenClass::Numeric, TokenClass::Numeric};
  CHECK(seq.classes == classes);
  CHECK(seq.prompt_len == 3);
  CHECK(seq.ids[static_cast<std::size_t>(seq.prompt_len - 1)] == kSepId);
}

TEST_CASE("tokenize preconditions") {
  const std::vector<std::string> corpus{"x = 12"};
  const auto v = Vocabulary::build(corpus);
  CHECK_THROWS_AS(tokenize(" 12", 0, v), Error);       // empty prompt region
  CHECK_THROWS_AS(tokenize("x = 12", 6, v), Error);    // empty completion
  CHECK_THROWS_AS(tokenize("x = 12", 5, v), Error);    // boundary inside a number
  CHECK_THROWS_AS(tokenize_pair("", "12", v), Error);
  try {
    (void)pre_tokenize("ab\x01");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Input);
    CHECK(std::string(e.what()).find("offset 2") != std::string::npos);
  }
}

TEST_CASE("decimal point versus sentence period") {
  const auto pieces = pre_tokenize("It costs 2.5 dollars. 7.");
  std::vector<std::string> toks;
  for (auto& p : pieces) toks.push_back(p.token);
  const std::vector<std::string> expected{"It", "costs", "2", ".", "5", "dollars", "<period>", "7", "<period>"};
  CHECK(toks == expected);
  CHECK(classify_token(".") == TokenClass::Numeric);
  CHECK(classify_token("<period>") == TokenClass::Word);
}

TEST_CASE("classify_token") {
  CHECK(classify_token("7") == TokenClass::Numeric);
  CHECK(classify_token("=") == TokenClass::Operator);
  CHECK(classify_token("the") == TokenClass::Word);
  CHECK(classify_token("\xE2\x88\x92") == TokenClass::Operator);
  CHECK(classify_token("\xC3\x97") == TokenClass::Operator);
  CHECK(classify_token("<sep>") == TokenClass::Special);
  CHECK(classify_token("12") == TokenClass::Word);  // never produced; only single digits are numeric
}

TEST_CASE("special tokens never come out of ordinary text") {
  const auto c = test::make_corpus(300, 11);
  const auto v = Vocabulary::build(std::vector<std::string>{"<mask> <sep> <pad>"}, TokenizerSettings{1});
  for (const auto& p : pre_tokenize("<mask> <sep> <pad>")) CHECK(classify_token(p.token) != TokenClass::Special);
  for (const auto& seq : c.seqs) {
    for (int i = 0; i < seq.size(); ++i) {
      const bool special = seq.classes[static_cast<std::size_t>(i)] == TokenClass::Special;
      REQUIRE(special == (i == seq.prompt_len - 1));
    }
    REQUIRE(seq.classes.size() == seq.ids.size());
    REQUIRE(seq.prompt_len > 0);
    REQUIRE(seq.prompt_len < seq.size());
  }
}

TEST_CASE("detokenize(tokenize(s)) round trip over 1000 generated lines") {
  const auto c = test::make_corpus(1000, 42);
  const auto v = Vocabulary::build(corpus_texts(c.records), TokenizerSettings{1});
  int ok = 0;
  for (const auto& r : c.records) {
    const auto seq = tokenize_pair(r.prompt, r.completion, v);
    const std::string back = detokenize(seq.ids, v);
    if (strip_whitespace(back) == strip_whitespace(r.prompt + " " + r.completion)) ++ok;
  }
  CHECK(ok == 1000);
}

TEST_CASE("detokenize joins digits and attaches punctuation") {
  const std::vector<std::string> corpus{"So 12.5 apples, ok?"};
  const auto v = Vocabulary::build(corpus, TokenizerSettings{1});
  const auto seq = tokenize("So 12.5 apples, ok?", 2, v);
  CHECK(detokenize(seq.ids, v) == "So 12.5 apples, ok?");
}
