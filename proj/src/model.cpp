#include "dsft/model.hpp"

#include <algorithm>
#include <cmath>

#include "dsft/error.hpp"
#include "dsft/kernels.hpp"
#include "dsft/rng.hpp"

namespace dsft {

void ModelConfig::validate() const {
  if (layers < 1 || heads < 1 || d_model < 1 || d_ff < 1 || max_len < 2 || vocab_size < kNumSpecial + 1) {
    throw input_error("model config: all sizes must be positive and vocab_size must cover the special tokens");
  }
  if (d_model % heads != 0) throw input_error("model config: d_model must be divisible by heads");
}

std::size_t ModelConfig::parameter_count() const {
  const std::size_t V = static_cast<std::size_t>(vocab_size), d = static_cast<std::size_t>(d_model),
                    f = static_cast<std::size_t>(d_ff), Lm = static_cast<std::size_t>(max_len);
  const std::size_t per_layer = 4 * d + 3 * d * d + 3 * d + d * d + d + 2 * d * f + f + d;
  return V * d + Lm * d + static_cast<std::size_t>(layers) * per_layer + 2 * d + d * V + V;
}

nlohmann::ordered_json to_json(const ModelConfig& c) {
  nlohmann::ordered_json j;
  j["layers"] = c.layers;
  j["heads"] = c.heads;
  j["d_model"] = c.d_model;
  j["d_ff"] = c.d_ff;
  j["max_len"] = c.max_len;
  j["vocab_size"] = c.vocab_size;
  return j;
}

ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.layers = j.at("layers").get<int>();
  c.heads = j.at("heads").get<int>();
  c.d_model = j.at("d_model").get<int>();
  c.d_ff = j.at("d_ff").get<int>();
  c.max_len = j.at("max_len").get<int>();
  c.vocab_size = j.at("vocab_size").get<int>();
  c.validate();
  return c;
}

ParamLayout::ParamLayout(const ModelConfig& c) {
  c.validate();
  const int V = c.vocab_size, d = c.d_model, f = c.d_ff;
  auto add = [&](std::string name, std::vector<int> shape) {
    std::size_t size = 1;
    for (int s : shape) size *= static_cast<std::size_t>(s);
    tensors.push_back({std::move(name), std::move(shape), total, size});
    total += size;
    return tensors.back().offset;
  };
  tok_emb = add("tok_emb", {V, d});
  pos_emb = add("pos_emb", {c.max_len, d});
  for (int l = 0; l < c.layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerOffsets o{};
    o.ln1_g = add(p + "ln1.g", {d});
    o.ln1_b = add(p + "ln1.b", {d});
    o.qkv_w = add(p + "attn.qkv.w", {d, 3 * d});
    o.qkv_b = add(p + "attn.qkv.b", {3 * d});
    o.proj_w = add(p + "attn.proj.w", {d, d});
    o.proj_b = add(p + "attn.proj.b", {d});
    o.ln2_g = add(p + "ln2.g", {d});
    o.ln2_b = add(p + "ln2.b", {d});
    o.fc1_w = add(p + "mlp.fc1.w", {d, f});
    o.fc1_b = add(p + "mlp.fc1.b", {f});
    o.fc2_w = add(p + "mlp.fc2.w", {f, d});
    o.fc2_b = add(p + "mlp.fc2.b", {d});
    layers.push_back(o);
  }
  lnf_g = add("ln_f.g", {d});
  lnf_b = add("ln_f.b", {d});
  head_w = add("head.w", {d, V});
  head_b = add("head.b", {V});
}

const TensorSpec& ParamLayout::find(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t;
  }
  throw input_error("unknown tensor '" + name + "'");
}

Params<float> init_params(const ModelConfig& config, std::uint64_t seed) {
  Params<float> p(config);
  const CounterRng root = CounterRng(seed).split("init");
  const double base_std = 0.02;
  const double resid_std = base_std / std::sqrt(2.0 * config.layers);
  for (std::size_t k = 0; k < p.layout.tensors.size(); ++k) {
    const auto& t = p.layout.tensors[k];
    auto data = std::span<float>(p.data).subspan(t.offset, t.size);
    const bool is_gain = t.name.ends_with(".g");
    const bool is_bias = t.name.ends_with(".b");
    if (is_gain) {
      std::fill(data.begin(), data.end(), 1.0f);
    } else if (is_bias) {
      std::fill(data.begin(), data.end(), 0.0f);
    } else {
      const bool residual = t.name.ends_with("attn.proj.w") || t.name.ends_with("mlp.fc2.w");
      const double std = residual ? resid_std : base_std;
      CounterRng rng = root.split(t.name);
      for (auto& x : data) x = static_cast<float>(std * rng.normal());
    }
  }
  return p;
}

namespace {

// Thin dispatch so the model can run on either kernel family.
template <typename T>
struct Ops {
  Backend backend;
  void matmul(T* out, const T* inp, const T* w, const T* b, int N, int I, int O) const {
    backend == Backend::Parallel ? kernels::matmul_forward(out, inp, w, b, N, I, O)
                                 : kernels::reference::matmul_forward(out, inp, w, b, N, I, O);
  }
  void matmul_bwd(T* dinp, T* dw, T* db, const T* dout, const T* inp, const T* w, int N, int I, int O) const {
    backend == Backend::Parallel ? kernels::matmul_backward(dinp, dw, db, dout, inp, w, N, I, O)
                                 : kernels::reference::matmul_backward(dinp, dw, db, dout, inp, w, N, I, O);
  }
  void layernorm(T* out, T* mean, T* rstd, const T* inp, const T* g, const T* b, int N, int C) const {
    backend == Backend::Parallel ? kernels::layernorm_forward(out, mean, rstd, inp, g, b, N, C)
                                 : kernels::reference::layernorm_forward(out, mean, rstd, inp, g, b, N, C);
  }
  void layernorm_bwd(T* dinp, T* dg, T* db, const T* dout, const T* inp, const T* g, const T* mean, const T* rstd,
                     int N, int C) const {
    backend == Backend::Parallel
        ? kernels::layernorm_backward(dinp, dg, db, dout, inp, g, mean, rstd, N, C)
        : kernels::reference::layernorm_backward(dinp, dg, db, dout, inp, g, mean, rstd, N, C);
  }
  void attention(T* out, T* att, const T* qkv, int L, int C, int H) const {
    backend == Backend::Parallel ? kernels::attention_forward(out, att, qkv, L, C, H)
                                 : kernels::reference::attention_forward(out, att, qkv, L, C, H);
  }
  void attention_bwd(T* dqkv, T* scratch, const T* dout, const T* qkv, const T* att, int L, int C, int H) const {
    backend == Backend::Parallel ? kernels::attention_backward(dqkv, scratch, dout, qkv, att, L, C, H)
                                 : kernels::reference::attention_backward(dqkv, scratch, dout, qkv, att, L, C, H);
  }
  void gelu(T* out, const T* inp, std::ptrdiff_t n) const {
    backend == Backend::Parallel ? kernels::gelu_forward(out, inp, n) : kernels::reference::gelu_forward(out, inp, n);
  }
  void gelu_bwd(T* dinp, const T* inp, const T* dout, std::ptrdiff_t n) const {
    backend == Backend::Parallel ? kernels::gelu_backward(dinp, inp, dout, n)
                                 : kernels::reference::gelu_backward(dinp, inp, dout, n);
  }
};

template <typename T>
void resize(std::vector<T>& v, std::size_t n) {
  v.assign(n, T(0));
}

}  // namespace

template <typename T>
void forward(const Params<T>& params, std::span<const TokenId> ids, Activations<T>& acts, Backend backend) {
  const auto& cfg = params.config;
  const int L = static_cast<int>(ids.size());
  const int C = cfg.d_model, F = cfg.d_ff, H = cfg.heads, V = cfg.vocab_size;
  if (L < 1) throw input_error("forward: empty input");
  if (L > cfg.max_len) throw input_error("forward: sequence length exceeds max_len");
  for (TokenId id : ids) {
    if (id < 0 || id >= V) throw input_error("forward: token id " + std::to_string(id) + " out of vocabulary");
  }
  const Ops<T> ops{backend};
  const auto& lay = params.layout;
  const std::size_t LC = static_cast<std::size_t>(L) * C;

  acts.length = L;
  resize(acts.x0, LC);
  for (int i = 0; i < L; ++i) {
    const T* te = params.at(lay.tok_emb) + static_cast<std::size_t>(ids[i]) * C;
    const T* pe = params.at(lay.pos_emb) + static_cast<std::size_t>(i) * C;
    for (int c = 0; c < C; ++c) acts.x0[static_cast<std::size_t>(i) * C + c] = te[c] + pe[c];
  }
  acts.layers.resize(static_cast<std::size_t>(cfg.layers));
  const T* x_in = acts.x0.data();
  for (int l = 0; l < cfg.layers; ++l) {
    const auto& o = lay.layers[static_cast<std::size_t>(l)];
    auto& a = acts.layers[static_cast<std::size_t>(l)];
    resize(a.ln1, LC);
    resize(a.ln1_mean, L);
    resize(a.ln1_rstd, L);
    resize(a.qkv, 3 * LC);
    resize(a.att, static_cast<std::size_t>(H) * L * L);
    resize(a.attn_y, LC);
    resize(a.x_mid, LC);
    resize(a.ln2, LC);
    resize(a.ln2_mean, L);
    resize(a.ln2_rstd, L);
    resize(a.fc1, static_cast<std::size_t>(L) * F);
    resize(a.gelu, static_cast<std::size_t>(L) * F);
    resize(a.x_out, LC);

    ops.layernorm(a.ln1.data(), a.ln1_mean.data(), a.ln1_rstd.data(), x_in, params.at(o.ln1_g), params.at(o.ln1_b), L,
                  C);
    ops.matmul(a.qkv.data(), a.ln1.data(), params.at(o.qkv_w), params.at(o.qkv_b), L, C, 3 * C);
    ops.attention(a.attn_y.data(), a.att.data(), a.qkv.data(), L, C, H);
    ops.matmul(a.x_mid.data(), a.attn_y.data(), params.at(o.proj_w), params.at(o.proj_b), L, C, C);
    for (std::size_t k = 0; k < LC; ++k) a.x_mid[k] += x_in[k];
    ops.layernorm(a.ln2.data(), a.ln2_mean.data(), a.ln2_rstd.data(), a.x_mid.data(), params.at(o.ln2_g),
                  params.at(o.ln2_b), L, C);
    ops.matmul(a.fc1.data(), a.ln2.data(), params.at(o.fc1_w), params.at(o.fc1_b), L, C, F);
    ops.gelu(a.gelu.data(), a.fc1.data(), static_cast<std::ptrdiff_t>(L) * F);
    ops.matmul(a.x_out.data(), a.gelu.data(), params.at(o.fc2_w), params.at(o.fc2_b), L, F, C);
    for (std::size_t k = 0; k < LC; ++k) a.x_out[k] += a.x_mid[k];
    x_in = a.x_out.data();
  }
  resize(acts.lnf, LC);
  resize(acts.lnf_mean, L);
  resize(acts.lnf_rstd, L);
  ops.layernorm(acts.lnf.data(), acts.lnf_mean.data(), acts.lnf_rstd.data(), x_in, params.at(lay.lnf_g),
                params.at(lay.lnf_b), L, C);
  resize(acts.logits, static_cast<std::size_t>(L) * V);
  ops.matmul(acts.logits.data(), acts.lnf.data(), params.at(lay.head_w), params.at(lay.head_b), L, C, V);
}

template <typename T>
void backward(const Params<T>& params, std::span<const TokenId> ids, const Activations<T>& acts,
              std::span<const T> dlogits, std::span<T> grads, Backend backend) {
  const auto& cfg = params.config;
  const int L = acts.length;
  const int C = cfg.d_model, F = cfg.d_ff, H = cfg.heads, V = cfg.vocab_size;
  if (static_cast<int>(ids.size()) != L) throw input_error("backward: ids do not match activations");
  if (dlogits.size() != static_cast<std::size_t>(L) * V) throw input_error("backward: dlogits has wrong shape");
  if (grads.size() != params.data.size()) throw input_error("backward: gradient buffer has wrong size");
  const Ops<T> ops{backend};
  const auto& lay = params.layout;
  T* g = grads.data();
  const std::size_t LC = static_cast<std::size_t>(L) * C;

  std::vector<T> dx(LC, T(0));
  std::vector<T> dlnf(LC, T(0));
  ops.matmul_bwd(dlnf.data(), g + lay.head_w, g + lay.head_b, dlogits.data(), acts.lnf.data(), params.at(lay.head_w),
                 L, C, V);
  const T* x_last = cfg.layers > 0 ? acts.layers.back().x_out.data() : acts.x0.data();
  ops.layernorm_bwd(dx.data(), g + lay.lnf_g, g + lay.lnf_b, dlnf.data(), x_last, params.at(lay.lnf_g),
                    acts.lnf_mean.data(), acts.lnf_rstd.data(), L, C);

  std::vector<T> dmid(LC), dgelu(static_cast<std::size_t>(L) * F), dfc1(static_cast<std::size_t>(L) * F), dln(LC),
      dy(LC), dqkv(3 * LC), scratch(static_cast<std::size_t>(H) * L * L);
  for (int l = cfg.layers - 1; l >= 0; --l) {
    const auto& o = lay.layers[static_cast<std::size_t>(l)];
    const auto& a = acts.layers[static_cast<std::size_t>(l)];
    const T* x_in = l == 0 ? acts.x0.data() : acts.layers[static_cast<std::size_t>(l - 1)].x_out.data();

    // MLP branch: x_out = x_mid + fc2(gelu(fc1(ln2(x_mid))))
    dmid = dx;
    std::fill(dgelu.begin(), dgelu.end(), T(0));
    std::fill(dfc1.begin(), dfc1.end(), T(0));
    std::fill(dln.begin(), dln.end(), T(0));
    ops.matmul_bwd(dgelu.data(), g + o.fc2_w, g + o.fc2_b, dx.data(), a.gelu.data(), params.at(o.fc2_w), L, F, C);
    ops.gelu_bwd(dfc1.data(), a.fc1.data(), dgelu.data(), static_cast<std::ptrdiff_t>(L) * F);
    ops.matmul_bwd(dln.data(), g + o.fc1_w, g + o.fc1_b, dfc1.data(), a.ln2.data(), params.at(o.fc1_w), L, C, F);
    ops.layernorm_bwd(dmid.data(), g + o.ln2_g, g + o.ln2_b, dln.data(), a.x_mid.data(), params.at(o.ln2_g),
                      a.ln2_mean.data(), a.ln2_rstd.data(), L, C);

    // Attention branch: x_mid = x_in + proj(attn(qkv(ln1(x_in))))
    dx = dmid;
    std::fill(dy.begin(), dy.end(), T(0));
    std::fill(dqkv.begin(), dqkv.end(), T(0));
    std::fill(dln.begin(), dln.end(), T(0));
    ops.matmul_bwd(dy.data(), g + o.proj_w, g + o.proj_b, dmid.data(), a.attn_y.data(), params.at(o.proj_w), L, C, C);
    ops.attention_bwd(dqkv.data(), scratch.data(), dy.data(), a.qkv.data(), a.att.data(), L, C, H);
    ops.matmul_bwd(dln.data(), g + o.qkv_w, g + o.qkv_b, dqkv.data(), a.ln1.data(), params.at(o.qkv_w), L, C, 3 * C);
    ops.layernorm_bwd(dx.data(), g + o.ln1_g, g + o.ln1_b, dln.data(), x_in, params.at(o.ln1_g), a.ln1_mean.data(),
                      a.ln1_rstd.data(), L, C);
  }

  for (int i = 0; i < L; ++i) {
    T* te = g + lay.tok_emb + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * C;
    T* pe = g + lay.pos_emb + static_cast<std::size_t>(i) * C;
    for (int c = 0; c < C; ++c) {
      te[c] += dx[static_cast<std::size_t>(i) * C + c];
      pe[c] += dx[static_cast<std::size_t>(i) * C + c];
    }
  }
}

template void forward<float>(const Params<float>&, std::span<const TokenId>, Activations<float>&, Backend);
template void forward<double>(const Params<double>&, std::span<const TokenId>, Activations<double>&, Backend);
template void backward<float>(const Params<float>&, std::span<const TokenId>, const Activations<float>&,
                              std::span<const float>, std::span<float>, Backend);
template void backward<double>(const Params<double>&, std::span<const TokenId>, const Activations<double>&,
                               std::span<const double>, std::span<double>, Backend);

}  // namespace dsft
