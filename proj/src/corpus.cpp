#include "dsft/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "dsft/error.hpp"
#include "dsft/hash.hpp"
#include "dsft/rng.hpp"

namespace dsft {

namespace {

constexpr std::array<const char*, 8> kNames = {"Tom", "Ana", "Ben", "Mia", "Sam", "Lily", "Max", "Zoe"};
constexpr std::array<const char*, 8> kItems = {"apples",  "books",   "coins",    "marbles",
                                               "pencils", "cookies", "stickers", "shells"};

template <typename Seq>
const auto& pick(CounterRng& rng, const Seq& pool) {
  return pool[static_cast<std::size_t>(rng.below(pool.size()))];
}

int uniform_int(CounterRng& rng, int lo, int hi) {
  return lo + static_cast<int>(rng.below(static_cast<std::uint64_t>(hi - lo + 1)));
}

struct Step {
  char op;
  long operand;
};

std::string step_sentence(CounterRng& rng, const Step& s, const char* name, const char* item) {
  const bool alt = rng.below(2) == 1;
  switch (s.op) {
    case '+':
      return alt ? fmt::format("Then {} finds {} more {}.", name, s.operand, item)
                 : fmt::format("{} gets {} more {}.", name, s.operand, item);
    case '-':
      return alt ? fmt::format("Then {} loses {} {}.", name, s.operand, item)
                 : fmt::format("{} gives {} {} to a friend.", name, s.operand, item);
    case '*':
      return alt ? fmt::format("{} makes the pile {} times as big.", name, s.operand)
                 : fmt::format("Then the number of {} is multiplied by {}.", item, s.operand);
    default:
      return fmt::format("{} splits the {} into {} equal groups and keeps one group.", name, item, s.operand);
  }
}

long apply(char op, long a, long b) {
  switch (op) {
    case '+': return a + b;
    case '-': return a - b;
    case '*': return a * b;
    default: return a / b;
  }
}

}  // namespace

void validate_record(const CorpusRecord& r) {
  if (r.prompt.empty()) throw input_error("record has empty prompt");
  if (r.completion.empty()) throw input_error("record has empty completion");
  if (!r.answer.empty() && r.completion.find(r.answer) == std::string::npos) {
    throw input_error("record answer '" + r.answer + "' does not appear in its completion");
  }
}

std::vector<CorpusRecord> generate_corpus(const GeneratorSpec& spec, std::uint64_t seed) {
  if (spec.ops.empty()) throw input_error("generator: empty operator set");
  if (spec.min_operand < 0 || spec.min_operand > spec.max_operand || spec.max_operand > 999) {
    throw input_error("generator: operand range must satisfy 0 <= min <= max <= 999");
  }
  if (spec.min_steps < 1 || spec.min_steps > spec.max_steps) throw input_error("generator: bad step range");
  for (char op : spec.ops) {
    if (op != '+' && op != '-' && op != '*' && op != '/') throw input_error(std::string("generator: unknown op ") + op);
  }

  const CounterRng root = CounterRng(seed).split("corpus");
  std::vector<CorpusRecord> out;
  out.reserve(static_cast<std::size_t>(std::max(spec.count, 0)));
  for (int r = 0; r < spec.count; ++r) {
    CounterRng rng = root.split(static_cast<std::uint64_t>(r));
    const char* name = pick(rng, kNames);
    const char* item = pick(rng, kItems);
    const int nsteps = uniform_int(rng, spec.min_steps, spec.max_steps);

    const int mul_hi = std::min(spec.max_operand, 12);
    const int mul_lo = std::min(std::max(spec.min_operand, 2), mul_hi);
    const int div_lo = std::max(spec.min_operand, 2);

    long start = uniform_int(rng, spec.min_operand, spec.max_operand);
    std::vector<Step> steps;
    long cur = start;
    for (int s = 0; s < nsteps; ++s) {
      std::vector<char> feasible;
      std::vector<long> divisors;
      for (long d = div_lo; d <= std::min<long>(spec.max_operand, cur); ++d) {
        if (cur % d == 0) divisors.push_back(d);
      }
      for (char op : spec.ops) {
        if (op == '-' && cur < spec.min_operand) continue;
        if (op == '/' && divisors.empty()) continue;
        feasible.push_back(op);
      }
      if (feasible.empty() && s == 0 && spec.ops.find('/') != std::string::npos && div_lo <= spec.max_operand) {
        // Division-only spec: restart from an exact multiple of a valid divisor.
        const long d = uniform_int(rng, div_lo, spec.max_operand);
        start = cur = d * uniform_int(rng, 1, static_cast<int>(999 / d));
        --s;
        continue;
      }
      if (feasible.empty()) break;
      const char op = pick(rng, feasible);
      long b = 0;
      switch (op) {
        case '+': b = uniform_int(rng, spec.min_operand, spec.max_operand); break;
        case '-': b = uniform_int(rng, spec.min_operand, static_cast<int>(std::min<long>(cur, spec.max_operand))); break;
        case '*': b = uniform_int(rng, mul_lo, mul_hi); break;
        default: b = pick(rng, divisors); break;
      }
      steps.push_back({op, b});
      cur = apply(op, cur, b);
    }

    std::string prompt = fmt::format("{} has {} {}.", name, start, item);
    for (const auto& st : steps) prompt += " " + step_sentence(rng, st, name, item);
    prompt += fmt::format(" How many {} does {} have now?", item, name);

    std::string completion;
    long acc = start;
    for (const auto& st : steps) {
      const long next = apply(st.op, acc, st.operand);
      completion += fmt::format("{} {} {} = {}. ", acc, st.op, st.operand, next);
      acc = next;
    }
    completion += fmt::format("The answer is {}.", acc);
    out.push_back({std::move(prompt), std::move(completion), std::to_string(acc)});
  }
  return out;
}

std::vector<CorpusRecord> parse_jsonl(std::string_view text) {
  std::vector<CorpusRecord> out;
  std::istringstream in{std::string(text)};
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = [&] { return "line " + std::to_string(lineno) + ": "; };
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw input_error(where() + "malformed JSON (" + e.what() + ")");
    }
    if (!j.is_object()) throw input_error(where() + "expected a JSON object");
    CorpusRecord r;
    for (auto [key, field] : {std::pair{"prompt", &r.prompt}, std::pair{"completion", &r.completion}}) {
      if (!j.contains(key) || !j[key].is_string()) throw input_error(where() + "missing string field \"" + key + "\"");
      *field = j[key].get<std::string>();
    }
    if (j.contains("answer")) {
      if (!j["answer"].is_string()) throw input_error(where() + "\"answer\" must be a string");
      r.answer = j["answer"].get<std::string>();
    }
    try {
      validate_record(r);
    } catch (const Error& e) {
      throw input_error(where() + e.what());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::vector<CorpusRecord> ingest_jsonl(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw input_error("corpus file not found: " + path.string());
  return parse_jsonl(read_file(path));
}

std::string export_jsonl(const std::vector<CorpusRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["prompt"] = r.prompt;
    j["completion"] = r.completion;
    j["answer"] = r.answer;
    out += j.dump();
    out.push_back('\n');
  }
  return out;
}

std::string corpus_fingerprint(const std::vector<CorpusRecord>& records) { return sha256_hex(export_jsonl(records)); }

std::vector<std::string> corpus_texts(const std::vector<CorpusRecord>& records) {
  std::vector<std::string> texts;
  texts.reserve(records.size());
  for (const auto& r : records) texts.push_back(r.prompt + " " + r.completion);
  return texts;
}

std::vector<TokenizedSequence> tokenize_corpus(const std::vector<CorpusRecord>& records, const Vocabulary& vocab) {
  std::vector<TokenizedSequence> out;
  out.reserve(records.size());
  for (std::size_t i = 0; i < records.size(); ++i) {
    try {
      out.push_back(tokenize_pair(records[i].prompt, records[i].completion, vocab));
    } catch (const Error& e) {
      throw input_error("record " + std::to_string(i) + ": " + e.what());
    }
  }
  return out;
}

EntropyReport entropy_report(const std::vector<TokenizedSequence>& corpus, const Vocabulary& vocab,
                             int num_stopwords) {
  if (corpus.empty()) throw input_error("entropy_report: empty corpus");
  const int V = vocab.size();
  std::vector<long> counts(static_cast<std::size_t>(V), 0);
  long total = 0;
  for (const auto& seq : corpus) {
    for (TokenId id : seq.ids) {
      ++counts.at(static_cast<std::size_t>(id));
      ++total;
    }
  }
  if (total == 0) throw input_error("entropy_report: corpus has no tokens");

  EntropyReport rep;
  rep.token_count = total;
  rep.vocab_size = V;
  const double n = static_cast<double>(total);
  std::array<double, kNumTokenClasses> surprisal_sum{};
  for (int id = 0; id < V; ++id) {
    const long c = counts[static_cast<std::size_t>(id)];
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    const double s = -std::log(p);
    auto& cls = rep.per_class[static_cast<std::size_t>(vocab.class_of(id))];
    cls.count += c;
    cls.p_mass += p;
    cls.entropy += p * s;
    surprisal_sum[static_cast<std::size_t>(vocab.class_of(id))] += static_cast<double>(c) * s;
    rep.total_entropy += p * s;
  }
  for (int k = 0; k < kNumTokenClasses; ++k) {
    auto& cls = rep.per_class[static_cast<std::size_t>(k)];
    cls.mean_surprisal = cls.count > 0 ? surprisal_sum[static_cast<std::size_t>(k)] / static_cast<double>(cls.count) : 0.0;
  }

  std::vector<TokenId> words;
  for (int id = 0; id < V; ++id) {
    if (vocab.class_of(id) == TokenClass::Word && counts[static_cast<std::size_t>(id)] > 0) words.push_back(id);
  }
  std::stable_sort(words.begin(), words.end(), [&](TokenId a, TokenId b) {
    return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
  });
  if (static_cast<int>(words.size()) > num_stopwords) words.resize(static_cast<std::size_t>(num_stopwords));
  rep.stopwords = words;
  double ssum = 0.0;
  long scount = 0;
  for (TokenId id : words) {
    const long c = counts[static_cast<std::size_t>(id)];
    ssum += static_cast<double>(c) * -std::log(static_cast<double>(c) / n);
    scount += c;
  }
  rep.stopword_mean_surprisal = scount > 0 ? ssum / static_cast<double>(scount) : 0.0;
  return rep;
}

nlohmann::ordered_json to_json(const EntropyReport& r, const Vocabulary& vocab) {
  nlohmann::ordered_json j;
  j["token_count"] = r.token_count;
  j["vocab_size"] = r.vocab_size;
  j["total_entropy_nats"] = r.total_entropy;
  j["total_entropy_bits"] = r.total_entropy / std::numbers::ln2;
  auto classes = nlohmann::ordered_json::array();
  for (int k = 0; k < kNumTokenClasses; ++k) {
    const auto& c = r.per_class[static_cast<std::size_t>(k)];
    nlohmann::ordered_json row;
    row["class"] = std::string(to_string(static_cast<TokenClass>(k)));
    row["p_mass"] = c.p_mass;
    row["mean_surprisal_nats"] = c.mean_surprisal;
    row["entropy_nats"] = c.entropy;
    row["count"] = c.count;
    classes.push_back(row);
  }
  j["classes"] = classes;
  auto stop = nlohmann::ordered_json::array();
  for (TokenId id : r.stopwords) stop.push_back(vocab.token(id));
  j["stopwords"] = stop;
  j["stopword_mean_surprisal_nats"] = r.stopword_mean_surprisal;
  j["numeric_exceeds_stopwords"] = r.numeric_exceeds_stopwords();
  return j;
}

std::string render_table(const EntropyReport& r, const Vocabulary& vocab) {
  std::string out = fmt::format("tokens: {}   vocab: {}   H(X) = {:.4f} nats ({:.4f} bits)\n\n", r.token_count,
                                r.vocab_size, r.total_entropy, r.total_entropy / std::numbers::ln2);
  out += fmt::format("{:<10} {:>10} {:>10} {:>16} {:>14}\n", "class", "count", "p_mass", "mean_surprisal", "entropy_nats");
  for (int k = 0; k < kNumTokenClasses; ++k) {
    const auto& c = r.per_class[static_cast<std::size_t>(k)];
    out += fmt::format("{:<10} {:>10} {:>10.4f} {:>16.4f} {:>14.4f}\n", to_string(static_cast<TokenClass>(k)), c.count,
                       c.p_mass, c.mean_surprisal, c.entropy);
  }
  std::string names;
  for (TokenId id : r.stopwords) names += (names.empty() ? "" : " ") + vocab.token(id);
  out += fmt::format("\nstopwords ({}): {}\nstopword mean surprisal: {:.4f} nats\n", r.stopwords.size(), names,
                     r.stopword_mean_surprisal);
  out += fmt::format("numeric mean surprisal:  {:.4f} nats\n", r.of(TokenClass::Numeric).mean_surprisal);
  return out;
}

}  // namespace dsft
