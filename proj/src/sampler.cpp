#include "dsft/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dsft/error.hpp"

namespace dsft {

std::vector<int> DecodeConfig::commits() const {
  const int k = steps > 0 ? steps : length;
  if (k < 1 || length < 1) throw input_error("decode: steps and length must be >= 1");
  if (!(temperature >= 0.0)) throw input_error("decode: temperature must be >= 0");
  if (!schedule.empty()) {
    if (static_cast<int>(schedule.size()) != k) throw input_error("decode: schedule must have one entry per step");
    if (std::any_of(schedule.begin(), schedule.end(), [](int c) { return c < 0; })) {
      throw input_error("decode: negative commit count in schedule");
    }
    if (std::accumulate(schedule.begin(), schedule.end(), 0) != length) {
      throw input_error("decode: scheduled commits do not sum to the completion length");
    }
    return schedule;
  }
  std::vector<int> out(static_cast<std::size_t>(k), length / k);
  for (int i = 0; i < length % k; ++i) ++out[static_cast<std::size_t>(i)];
  return out;
}

nlohmann::ordered_json to_json(const DecodeTraceStep& s) {
  nlohmann::ordered_json j;
  j["step"] = s.step;
  j["positions"] = s.positions;
  j["tokens"] = s.tokens;
  j["confidences"] = s.confidences;
  return j;
}

std::vector<TokenId> encode_prompt(std::string_view prompt, const Vocabulary& vocab) {
  std::vector<TokenId> ids;
  for (const auto& p : pre_tokenize(prompt)) ids.push_back(vocab.id_for_piece(p.token));
  if (ids.empty()) throw input_error("prompt must be non-empty");
  ids.push_back(kSepId);
  return ids;
}

std::vector<TokenId> generate(const Params<float>& params, std::span<const TokenId> prompt, const DecodeConfig& config,
                              CounterRng& rng, std::vector<DecodeTraceStep>* trace) {
  const auto commits = config.commits();
  const int P = static_cast<int>(prompt.size());
  const int C = config.length;
  const int V = params.config.vocab_size;
  if (P < 1) throw input_error("generate: empty prompt");
  if (P + C > params.config.max_len) throw input_error("generate: prompt plus completion exceeds max_len");

  std::vector<TokenId> seq(prompt.begin(), prompt.end());
  seq.resize(static_cast<std::size_t>(P + C), kMaskId);
  std::vector<char> open(static_cast<std::size_t>(C), 1);

  struct Candidate {
    int pos;
    TokenId token;
    double confidence;
  };
  Activations<float> acts;
  for (std::size_t s = 0; s < commits.size(); ++s) {
    forward(params, std::span<const TokenId>(seq), acts);
    std::vector<Candidate> cands;
    for (int c = 0; c < C; ++c) {
      if (!open[static_cast<std::size_t>(c)]) continue;
      const int pos = P + c;
      const float* row = acts.logits.data() + static_cast<std::size_t>(pos) * V;
      // Softmax over ordinary tokens only.
      const double temp = config.temperature > 0.0 ? config.temperature : 1.0;
      double mx = -INFINITY;
      for (int v = kNumSpecial; v < V; ++v) mx = std::max(mx, row[v] / temp);
      std::vector<double> prob(static_cast<std::size_t>(V), 0.0);
      double sum = 0.0;
      for (int v = kNumSpecial; v < V; ++v) sum += (prob[static_cast<std::size_t>(v)] = std::exp(row[v] / temp - mx));
      TokenId pick = kNumSpecial;
      if (config.temperature > 0.0) {
        double u = rng.uniform() * sum;
        pick = V - 1;
        for (int v = kNumSpecial; v < V; ++v) {
          u -= prob[static_cast<std::size_t>(v)];
          if (u < 0.0) {
            pick = v;
            break;
          }
        }
      } else {
        for (int v = kNumSpecial + 1; v < V; ++v) {
          if (row[v] > row[pick]) pick = v;
        }
      }
      cands.push_back({pos, pick, prob[static_cast<std::size_t>(pick)] / sum});
    }
    std::stable_sort(cands.begin(), cands.end(),
                     [](const Candidate& a, const Candidate& b) { return a.confidence > b.confidence; });
    const int take = std::min(commits[s], static_cast<int>(cands.size()));
    DecodeTraceStep ts;
    ts.step = static_cast<int>(s);
    for (int k = 0; k < take; ++k) {
      const auto& c = cands[static_cast<std::size_t>(k)];
      seq[static_cast<std::size_t>(c.pos)] = c.token;
      open[static_cast<std::size_t>(c.pos - P)] = 0;
      ts.positions.push_back(c.pos);
      ts.tokens.push_back(c.token);
      ts.confidences.push_back(c.confidence);
    }
    if (trace) trace->push_back(std::move(ts));
  }
  return std::vector<TokenId>(seq.begin() + P, seq.end());
}

}  // namespace dsft
