#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "dsft/tokenizer.hpp"

namespace dsft {

struct ModelConfig {
  int layers = 4;
  int heads = 4;
  int d_model = 128;
  int d_ff = 512;
  int max_len = 256;
  int vocab_size = 0;

  void validate() const;
  /// Closed form: V*d + L_max*d + layers*(4d + 3d^2 + 3d + d^2 + d + 2*d*ff + ff + d) + 2d + d*V + V.
  std::size_t parameter_count() const;

  bool operator==(const ModelConfig&) const = default;
};

nlohmann::ordered_json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

struct TensorSpec {
  std::string name;
  std::vector<int> shape;
  std::size_t offset = 0;  // in elements
  std::size_t size = 0;
};

struct LayerOffsets {
  std::size_t ln1_g, ln1_b, qkv_w, qkv_b, proj_w, proj_b, ln2_g, ln2_b, fc1_w, fc1_b, fc2_w, fc2_b;
};

/// Where every named tensor lives in the flat parameter buffer.
struct ParamLayout {
  std::size_t tok_emb = 0, pos_emb = 0;
  std::vector<LayerOffsets> layers;
  std::size_t lnf_g = 0, lnf_b = 0, head_w = 0, head_b = 0;
  std::size_t total = 0;
  std::vector<TensorSpec> tensors;  // manifest order

  explicit ParamLayout(const ModelConfig& c);
  ParamLayout() = default;
  const TensorSpec& find(const std::string& name) const;
};

/// All weights of the denoiser in one flat buffer.
template <typename T>
struct Params {
  ModelConfig config;
  ParamLayout layout;
  std::vector<T> data;

  Params() = default;
  explicit Params(const ModelConfig& c) : config(c), layout(c), data(layout.total, T(0)) {}

  std::span<T> tensor(const std::string& name) {
    const auto& t = layout.find(name);
    return std::span<T>(data).subspan(t.offset, t.size);
  }
  std::span<const T> tensor(const std::string& name) const {
    const auto& t = layout.find(name);
    return std::span<const T>(data).subspan(t.offset, t.size);
  }
  const T* at(std::size_t offset) const { return data.data() + offset; }
  T* at(std::size_t offset) { return data.data() + offset; }
};

/// Scaled-normal weights (std 0.02, residual projections 0.02/sqrt(2*layers)),
/// unit layer-norm gains, zero biases. Pure in (config, seed).
Params<float> init_params(const ModelConfig& config, std::uint64_t seed);

template <typename To, typename From>
Params<To> cast_params(const Params<From>& p) {
  Params<To> out(p.config);
  for (std::size_t i = 0; i < p.data.size(); ++i) out.data[i] = static_cast<To>(p.data[i]);
  return out;
}

enum class Backend { Parallel, Reference };

/// Cached intermediate values of one forward pass, consumed by backward.
template <typename T>
struct Activations {
  struct Layer {
    std::vector<T> ln1, ln1_mean, ln1_rstd, qkv, att, attn_y, x_mid, ln2, ln2_mean, ln2_rstd, fc1, gelu, x_out;
  };
  int length = 0;
  std::vector<T> x0;
  std::vector<Layer> layers;
  std::vector<T> lnf, lnf_mean, lnf_rstd;
  std::vector<T> logits;  // [L x V]
};

/// f_theta(x_t): per-position vocabulary logits, attention unmasked in both directions.
template <typename T>
void forward(const Params<T>& params, std::span<const TokenId> ids, Activations<T>& acts,
             Backend backend = Backend::Parallel);

template <typename T>
std::vector<T> forward_logits(const Params<T>& params, std::span<const TokenId> ids,
                              Backend backend = Backend::Parallel) {
  Activations<T> acts;
  forward(params, ids, acts, backend);
  return std::move(acts.logits);
}

/// Accumulates d(loss)/d(params) into grads (same layout as params.data) given d(loss)/d(logits).
template <typename T>
void backward(const Params<T>& params, std::span<const TokenId> ids, const Activations<T>& acts,
              std::span<const T> dlogits, std::span<T> grads, Backend backend = Backend::Parallel);

}  // namespace dsft
