#pragma once

// Dense kernels for the denoiser, in two flavours:
//   dsft::kernels            OpenMP-parallel, loop orders chosen for vectorization
//   dsft::kernels::reference straightforward serial loops, kept as the test oracle
//
// Every parallel kernel assigns each output element to exactly one thread and
// accumulates it in a fixed order, so results do not depend on the thread count.
//
// Layouts are row-major: activations [N x C], weights [in x out].
// Backward kernels accumulate (+=) into every gradient output.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <type_traits>
#include <vector>

namespace dsft::kernels {

inline constexpr double kLayerNormEps = 1e-5;

template <typename T>
inline T gelu_scalar(T x) {
  const T s = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T u = s * (x + static_cast<T>(0.044715) * x * x * x);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::tanh(u));
}

template <typename T>
inline T gelu_grad_scalar(T x) {
  const T s = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T u = s * (x + static_cast<T>(0.044715) * x * x * x);
  const T th = std::tanh(u);
  const T sech2 = static_cast<T>(1) - th * th;
  return static_cast<T>(0.5) * (static_cast<T>(1) + th) +
         static_cast<T>(0.5) * x * sech2 * s * (static_cast<T>(1) + static_cast<T>(3 * 0.044715) * x * x);
}

// Vectorizable single-precision exp (range reduction plus a degree-6 polynomial),
// within a few ulp of std::exp. Double precision defers to std::exp.
template <typename T>
inline T exp_fast(T x) {
  if constexpr (std::is_same_v<T, float>) {
    x = std::min(std::max(x, -87.0f), 88.0f);
    const float n = std::floor(x * 1.44269504088896341f + 0.5f);
    const float r = (x - n * 0.693359375f) + n * 2.12194440e-4f;
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const std::int32_t bits = (static_cast<std::int32_t>(n) + 127) << 23;
    return p * std::bit_cast<float>(bits);
  } else {
    return std::exp(x);
  }
}

template <typename T>
inline T tanh_fast(T u) {
  if constexpr (std::is_same_v<T, float>) {
    return 1.0f - 2.0f / (1.0f + exp_fast(2.0f * u));
  } else {
    return std::tanh(u);
  }
}

template <typename T>
inline T gelu_fast(T x) {
  const T s = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T u = s * (x + static_cast<T>(0.044715) * x * x * x);
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + tanh_fast(u));
}

template <typename T>
inline T gelu_grad_fast(T x) {
  const T s = static_cast<T>(std::sqrt(2.0 / std::numbers::pi));
  const T u = s * (x + static_cast<T>(0.044715) * x * x * x);
  const T th = tanh_fast(u);
  const T sech2 = static_cast<T>(1) - th * th;
  return static_cast<T>(0.5) * (static_cast<T>(1) + th) +
         static_cast<T>(0.5) * x * sech2 * s * (static_cast<T>(1) + static_cast<T>(3 * 0.044715) * x * x);
}

// dst[e * L + j] = src[j * stride + e] for one head slice.
template <typename T>
inline void transpose_head(T* dst, const T* src, int L, std::ptrdiff_t stride, int hs) {
  for (int j = 0; j < L; ++j)
    for (int e = 0; e < hs; ++e) dst[static_cast<std::ptrdiff_t>(e) * L + j] = src[j * stride + e];
}

// row[j] = sum_e x[e] * mt[e * L + j], accumulated over e in order.
template <typename T>
inline void score_row(T* row, const T* x, const T* mt, int L, int hs) {
  for (int j = 0; j < L; ++j) row[j] = 0;
  for (int e = 0; e < hs; ++e) {
    const T xe = x[e];
    const T* m = mt + static_cast<std::ptrdiff_t>(e) * L;
#pragma omp simd
    for (int j = 0; j < L; ++j) row[j] += xe * m[j];
  }
}

// Output columns are processed in blocks small enough to stay in registers.
inline constexpr int kColumnBlock = 64;

// acc[0..width) += sum_k x[k * x_stride] * rows[k * row_stride + (0..width)], k ascending.
template <typename T, int Width>
inline void accumulate_rows(T* acc, const T* x, std::ptrdiff_t x_stride, const T* rows, std::ptrdiff_t row_stride,
                            int count) {
  T local[Width];
  for (int o = 0; o < Width; ++o) local[o] = acc[o];
  for (int k = 0; k < count; ++k) {
    const T a = x[k * x_stride];
    const T* r = rows + k * row_stride;
#pragma omp simd
    for (int o = 0; o < Width; ++o) local[o] += a * r[o];
  }
  for (int o = 0; o < Width; ++o) acc[o] = local[o];
}

template <typename T>
inline void accumulate_rows_any(T* acc, int width, const T* x, std::ptrdiff_t x_stride, const T* rows,
                                std::ptrdiff_t row_stride, int count) {
  if (width == kColumnBlock) return accumulate_rows<T, kColumnBlock>(acc, x, x_stride, rows, row_stride, count);
  for (int k = 0; k < count; ++k) {
    const T a = x[k * x_stride];
    const T* r = rows + k * row_stride;
    for (int o = 0; o < width; ++o) acc[o] += a * r[o];
  }
}

// out[n,o] = bias[o] + sum_i inp[n,i] * w[i,o]; bias may be null.
template <typename T>
void matmul_forward(T* out, const T* inp, const T* w, const T* bias, int N, int I, int O) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    T* o_row = out + static_cast<std::ptrdiff_t>(n) * O;
    const T* i_row = inp + static_cast<std::ptrdiff_t>(n) * I;
    for (int o = 0; o < O; ++o) o_row[o] = bias ? bias[o] : T(0);
    for (int o0 = 0; o0 < O; o0 += kColumnBlock) {
      accumulate_rows_any(o_row + o0, std::min(kColumnBlock, O - o0), i_row, 1, w + o0, O, I);
    }
  }
}

template <typename T>
void matmul_backward(T* dinp, T* dw, T* dbias, const T* dout, const T* inp, const T* w, int N, int I, int O) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const T* d_row = dout + static_cast<std::ptrdiff_t>(n) * O;
    T* di_row = dinp + static_cast<std::ptrdiff_t>(n) * I;
    for (int i = 0; i < I; ++i) {
      const T* w_row = w + static_cast<std::ptrdiff_t>(i) * O;
      T acc = 0;
#pragma omp simd reduction(+ : acc)
      for (int o = 0; o < O; ++o) acc += d_row[o] * w_row[o];
      di_row[i] += acc;
    }
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < I; ++i) {
    T* dw_row = dw + static_cast<std::ptrdiff_t>(i) * O;
    for (int o0 = 0; o0 < O; o0 += kColumnBlock) {
      accumulate_rows_any(dw_row + o0, std::min(kColumnBlock, O - o0), inp + i, I, dout + o0, O, N);
    }
  }
  if (dbias) {
    for (int n = 0; n < N; ++n) {
      const T* d_row = dout + static_cast<std::ptrdiff_t>(n) * O;
      for (int o = 0; o < O; ++o) dbias[o] += d_row[o];
    }
  }
}

template <typename T>
void layernorm_forward(T* out, T* mean, T* rstd, const T* inp, const T* g, const T* b, int N, int C) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const T* x = inp + static_cast<std::ptrdiff_t>(n) * C;
    T m = 0;
#pragma omp simd reduction(+ : m)
    for (int c = 0; c < C; ++c) m += x[c];
    m /= static_cast<T>(C);
    T v = 0;
#pragma omp simd reduction(+ : v)
    for (int c = 0; c < C; ++c) v += (x[c] - m) * (x[c] - m);
    v /= static_cast<T>(C);
    const T s = static_cast<T>(1) / std::sqrt(v + static_cast<T>(kLayerNormEps));
    T* y = out + static_cast<std::ptrdiff_t>(n) * C;
    for (int c = 0; c < C; ++c) y[c] = (x[c] - m) * s * g[c] + b[c];
    mean[n] = m;
    rstd[n] = s;
  }
}

template <typename T>
void layernorm_backward(T* dinp, T* dg, T* db, const T* dout, const T* inp, const T* g, const T* mean,
                        const T* rstd, int N, int C) {
#pragma omp parallel for schedule(static)
  for (int n = 0; n < N; ++n) {
    const T* x = inp + static_cast<std::ptrdiff_t>(n) * C;
    const T* dy = dout + static_cast<std::ptrdiff_t>(n) * C;
    T* dx = dinp + static_cast<std::ptrdiff_t>(n) * C;
    const T m = mean[n];
    const T s = rstd[n];
    T dnorm_mean = 0;
    T dnorm_norm_mean = 0;
#pragma omp simd reduction(+ : dnorm_mean, dnorm_norm_mean)
    for (int c = 0; c < C; ++c) {
      const T norm = (x[c] - m) * s;
      const T dnorm = dy[c] * g[c];
      dnorm_mean += dnorm;
      dnorm_norm_mean += dnorm * norm;
    }
    dnorm_mean /= static_cast<T>(C);
    dnorm_norm_mean /= static_cast<T>(C);
    for (int c = 0; c < C; ++c) {
      const T norm = (x[c] - m) * s;
      const T dnorm = dy[c] * g[c];
      dx[c] += (dnorm - dnorm_mean - norm * dnorm_norm_mean) * s;
    }
  }
  for (int n = 0; n < N; ++n) {
    const T* x = inp + static_cast<std::ptrdiff_t>(n) * C;
    const T* dy = dout + static_cast<std::ptrdiff_t>(n) * C;
    const T m = mean[n];
    const T s = rstd[n];
    for (int c = 0; c < C; ++c) {
      dg[c] += dy[c] * (x[c] - m) * s;
      db[c] += dy[c];
    }
  }
}

// Full (non-causal) multi-head self-attention over one sequence.
// qkv: [L x 3C] with q, k, v blocks; att: [H x L x L] softmax probabilities; out: [L x C].
template <typename T>
void attention_forward(T* out, T* att, const T* qkv, int L, int C, int H) {
  const int hs = C / H;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hs)));
  const std::ptrdiff_t C3 = 3 * static_cast<std::ptrdiff_t>(C);
#pragma omp parallel for schedule(static)
  for (int h = 0; h < H; ++h) {
    std::vector<T> kt(static_cast<std::size_t>(hs) * L);
    transpose_head(kt.data(), qkv + C + h * hs, L, C3, hs);
    for (int i = 0; i < L; ++i) {
      const T* q = qkv + i * C3 + h * hs;
      T* a = att + (static_cast<std::ptrdiff_t>(h) * L + i) * L;
      score_row(a, q, kt.data(), L, hs);
      T mx = -INFINITY;
      for (int j = 0; j < L; ++j) {
        a[j] *= scale;
        if (a[j] > mx) mx = a[j];
      }
#pragma omp simd
      for (int j = 0; j < L; ++j) a[j] = exp_fast(a[j] - mx);
      T sum = 0;
      for (int j = 0; j < L; ++j) sum += a[j];
      const T inv = static_cast<T>(1) / sum;
      for (int j = 0; j < L; ++j) a[j] *= inv;
      T* y = out + static_cast<std::ptrdiff_t>(i) * C + h * hs;
      for (int e = 0; e < hs; ++e) y[e] = 0;
      for (int j = 0; j < L; ++j) {
        const T* v = qkv + j * C3 + 2 * C + h * hs;
        const T p = a[j];
        for (int e = 0; e < hs; ++e) y[e] += p * v[e];
      }
    }
  }
}

// scratch: [H x L x L], overwritten.
template <typename T>
void attention_backward(T* dqkv, T* scratch, const T* dout, const T* qkv, const T* att, int L, int C, int H) {
  const int hs = C / H;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hs)));
  const std::ptrdiff_t C3 = 3 * static_cast<std::ptrdiff_t>(C);
#pragma omp parallel for schedule(static)
  for (int h = 0; h < H; ++h) {
    const T* a = att + static_cast<std::ptrdiff_t>(h) * L * L;
    T* dpre = scratch + static_cast<std::ptrdiff_t>(h) * L * L;
    std::vector<T> vt(static_cast<std::size_t>(hs) * L);
    transpose_head(vt.data(), qkv + 2 * C + h * hs, L, C3, hs);
    for (int i = 0; i < L; ++i) {
      const T* dy = dout + static_cast<std::ptrdiff_t>(i) * C + h * hs;
      const T* a_row = a + static_cast<std::ptrdiff_t>(i) * L;
      T* dp_row = dpre + static_cast<std::ptrdiff_t>(i) * L;
      score_row(dp_row, dy, vt.data(), L, hs);
      T weighted = 0;
      for (int j = 0; j < L; ++j) weighted += a_row[j] * dp_row[j];
      for (int j = 0; j < L; ++j) dp_row[j] = a_row[j] * (dp_row[j] - weighted) * scale;
    }
    for (int i = 0; i < L; ++i) {
      T* dq = dqkv + i * C3 + h * hs;
      const T* dp_row = dpre + static_cast<std::ptrdiff_t>(i) * L;
      for (int j = 0; j < L; ++j) {
        const T* k = qkv + j * C3 + C + h * hs;
        const T d = dp_row[j];
        for (int e = 0; e < hs; ++e) dq[e] += d * k[e];
      }
    }
    for (int j = 0; j < L; ++j) {
      T* dk = dqkv + j * C3 + C + h * hs;
      T* dv = dqkv + j * C3 + 2 * C + h * hs;
      for (int i = 0; i < L; ++i) {
        const T* q = qkv + i * C3 + h * hs;
        const T* dy = dout + static_cast<std::ptrdiff_t>(i) * C + h * hs;
        const T d = dpre[static_cast<std::ptrdiff_t>(i) * L + j];
        const T p = a[static_cast<std::ptrdiff_t>(i) * L + j];
        for (int e = 0; e < hs; ++e) {
          dk[e] += d * q[e];
          dv[e] += p * dy[e];
        }
      }
    }
  }
}

template <typename T>
void gelu_forward(T* out, const T* inp, std::ptrdiff_t n) {
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = gelu_fast(inp[i]);
}

template <typename T>
void gelu_backward(T* dinp, const T* inp, const T* dout, std::ptrdiff_t n) {
#pragma omp parallel for simd schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) dinp[i] += gelu_grad_fast(inp[i]) * dout[i];
}

namespace reference {

template <typename T>
void matmul_forward(T* out, const T* inp, const T* w, const T* bias, int N, int I, int O) {
  for (int n = 0; n < N; ++n) {
    for (int o = 0; o < O; ++o) {
      T acc = bias ? bias[o] : T(0);
      for (int i = 0; i < I; ++i) acc += inp[n * I + i] * w[i * O + o];
      out[n * O + o] = acc;
    }
  }
}

template <typename T>
void matmul_backward(T* dinp, T* dw, T* dbias, const T* dout, const T* inp, const T* w, int N, int I, int O) {
  for (int n = 0; n < N; ++n) {
    for (int i = 0; i < I; ++i) {
      for (int o = 0; o < O; ++o) {
        dinp[n * I + i] += dout[n * O + o] * w[i * O + o];
        dw[i * O + o] += inp[n * I + i] * dout[n * O + o];
      }
    }
    if (dbias) {
      for (int o = 0; o < O; ++o) dbias[o] += dout[n * O + o];
    }
  }
}

template <typename T>
void layernorm_forward(T* out, T* mean, T* rstd, const T* inp, const T* g, const T* b, int N, int C) {
  for (int n = 0; n < N; ++n) {
    T m = 0, v = 0;
    for (int c = 0; c < C; ++c) m += inp[n * C + c];
    m /= static_cast<T>(C);
    for (int c = 0; c < C; ++c) v += (inp[n * C + c] - m) * (inp[n * C + c] - m);
    v /= static_cast<T>(C);
    const T s = static_cast<T>(1) / std::sqrt(v + static_cast<T>(kLayerNormEps));
    for (int c = 0; c < C; ++c) out[n * C + c] = (inp[n * C + c] - m) * s * g[c] + b[c];
    mean[n] = m;
    rstd[n] = s;
  }
}

template <typename T>
void layernorm_backward(T* dinp, T* dg, T* db, const T* dout, const T* inp, const T* g, const T* mean,
                        const T* rstd, int N, int C) {
  for (int n = 0; n < N; ++n) {
    T sum_dnorm = 0, sum_dnorm_norm = 0;
    for (int c = 0; c < C; ++c) {
      const T norm = (inp[n * C + c] - mean[n]) * rstd[n];
      sum_dnorm += dout[n * C + c] * g[c];
      sum_dnorm_norm += dout[n * C + c] * g[c] * norm;
      dg[c] += dout[n * C + c] * norm;
      db[c] += dout[n * C + c];
    }
    for (int c = 0; c < C; ++c) {
      const T norm = (inp[n * C + c] - mean[n]) * rstd[n];
      dinp[n * C + c] +=
          rstd[n] * (dout[n * C + c] * g[c] - sum_dnorm / static_cast<T>(C) - norm * sum_dnorm_norm / static_cast<T>(C));
    }
  }
}

template <typename T>
void attention_forward(T* out, T* att, const T* qkv, int L, int C, int H) {
  const int hs = C / H;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hs)));
  for (int h = 0; h < H; ++h) {
    for (int i = 0; i < L; ++i) {
      T* a = att + (h * L + i) * L;
      T mx = -INFINITY;
      for (int j = 0; j < L; ++j) {
        T dot = 0;
        for (int e = 0; e < hs; ++e) dot += qkv[i * 3 * C + h * hs + e] * qkv[j * 3 * C + C + h * hs + e];
        a[j] = dot * scale;
        mx = a[j] > mx ? a[j] : mx;
      }
      T sum = 0;
      for (int j = 0; j < L; ++j) sum += (a[j] = std::exp(a[j] - mx));
      for (int j = 0; j < L; ++j) a[j] /= sum;
      for (int e = 0; e < hs; ++e) {
        T acc = 0;
        for (int j = 0; j < L; ++j) acc += a[j] * qkv[j * 3 * C + 2 * C + h * hs + e];
        out[i * C + h * hs + e] = acc;
      }
    }
  }
}

template <typename T>
void attention_backward(T* dqkv, T* scratch, const T* dout, const T* qkv, const T* att, int L, int C, int H) {
  const int hs = C / H;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(hs)));
  for (int h = 0; h < H; ++h) {
    const T* a = att + h * L * L;
    T* datt = scratch + h * L * L;
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < L; ++j) {
        T acc = 0;
        for (int e = 0; e < hs; ++e) acc += dout[i * C + h * hs + e] * qkv[j * 3 * C + 2 * C + h * hs + e];
        datt[i * L + j] = acc;
        for (int e = 0; e < hs; ++e) dqkv[j * 3 * C + 2 * C + h * hs + e] += a[i * L + j] * dout[i * C + h * hs + e];
      }
    }
    for (int i = 0; i < L; ++i) {
      for (int j = 0; j < L; ++j) {
        // d softmax: p_j * (dp_j - sum_k p_k dp_k)
        T inner = 0;
        for (int k = 0; k < L; ++k) inner += a[i * L + k] * datt[i * L + k];
        const T dpre = a[i * L + j] * (datt[i * L + j] - inner) * scale;
        for (int e = 0; e < hs; ++e) {
          dqkv[i * 3 * C + h * hs + e] += dpre * qkv[j * 3 * C + C + h * hs + e];
          dqkv[j * 3 * C + C + h * hs + e] += dpre * qkv[i * 3 * C + h * hs + e];
        }
      }
    }
  }
}

template <typename T>
void gelu_forward(T* out, const T* inp, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = gelu_scalar(inp[i]);
}

template <typename T>
void gelu_backward(T* dinp, const T* inp, const T* dout, std::ptrdiff_t n) {
  for (std::ptrdiff_t i = 0; i < n; ++i) dinp[i] += gelu_grad_scalar(inp[i]) * dout[i];
}

}  // namespace reference

}  // namespace dsft::kernels
