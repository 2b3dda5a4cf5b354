#include <doctest.h>

#include <omp.h>

#include <cmath>
#include <functional>
#include <vector>

#include "dsft/kernels.hpp"
#include "dsft/rng.hpp"

namespace k = dsft::kernels;
namespace ref = dsft::kernels::reference;

namespace {

template <typename T>
std::vector<T> randn(std::size_t n, std::uint64_t seed, double scale = 1.0) {
  dsft::CounterRng rng(seed);
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
  return v;
}

template <typename T>
double max_rel(const std::vector<T>& a, const std::vector<T>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    worst = std::max(worst, d / std::max(1.0, std::abs(static_cast<double>(b[i]))));
  }
  return worst;
}

// Runs fn under the given OpenMP thread count.
template <typename F>
void with_threads(int n, F&& fn) {
  const int prev = omp_get_max_threads();
  omp_set_num_threads(n);
  fn();
  omp_set_num_threads(prev);
}

constexpr int N = 7, I = 24, O = 18, L = 9, C = 16, H = 4;

}  // namespace

TEST_CASE("matmul forward and backward agree with the reference") {
  const auto x = randn<double>(N * I, 1), w = randn<double>(I * O, 2), b = randn<double>(O, 3), dy = randn<double>(N * O, 4);
  std::vector<double> y1(N * O), y2(N * O);
  k::matmul_forward(y1.data(), x.data(), w.data(), b.data(), N, I, O);
  ref::matmul_forward(y2.data(), x.data(), w.data(), b.data(), N, I, O);
  CHECK(max_rel(y1, y2) < 1e-13);
  std::vector<double> dx1(N * I, 0.5), dw1(I * O, 0.25), db1(O, 1.0);
  auto dx2 = dx1, dw2 = dw1, db2 = db1;
  k::matmul_backward(dx1.data(), dw1.data(), db1.data(), dy.data(), x.data(), w.data(), N, I, O);
  ref::matmul_backward(dx2.data(), dw2.data(), db2.data(), dy.data(), x.data(), w.data(), N, I, O);
  CHECK(max_rel(dx1, dx2) < 1e-13);
  CHECK(max_rel(dw1, dw2) < 1e-13);
  CHECK(max_rel(db1, db2) < 1e-13);
}

TEST_CASE("layernorm forward and backward agree with the reference") {
  const auto x = randn<double>(N * C, 5, 3.0), g = randn<double>(C, 6), b = randn<double>(C, 7), dy = randn<double>(N * C, 8);
  std::vector<double> y1(N * C), y2(N * C), m1(N), m2(N), r1(N), r2(N);
  k::layernorm_forward(y1.data(), m1.data(), r1.data(), x.data(), g.data(), b.data(), N, C);
  ref::layernorm_forward(y2.data(), m2.data(), r2.data(), x.data(), g.data(), b.data(), N, C);
  CHECK(max_rel(y1, y2) < 1e-13);
  std::vector<double> dx1(N * C, 0.0), dg1(C, 0.0), db1(C, 0.0);
  auto dx2 = dx1, dg2 = dg1, db2 = db1;
  k::layernorm_backward(dx1.data(), dg1.data(), db1.data(), dy.data(), x.data(), g.data(), m1.data(), r1.data(), N, C);
  ref::layernorm_backward(dx2.data(), dg2.data(), db2.data(), dy.data(), x.data(), g.data(), m2.data(), r2.data(), N, C);
  CHECK(max_rel(dx1, dx2) < 1e-12);
  CHECK(max_rel(dg1, dg2) < 1e-12);
  CHECK(max_rel(db1, db2) < 1e-12);
}

TEST_CASE("attention forward and backward agree with the reference") {
  const auto qkv = randn<double>(L * 3 * C, 9), dy = randn<double>(L * C, 10);
  std::vector<double> y1(L * C), y2(L * C), a1(H * L * L), a2(H * L * L), s1(H * L * L), s2(H * L * L);
  k::attention_forward(y1.data(), a1.data(), qkv.data(), L, C, H);
  ref::attention_forward(y2.data(), a2.data(), qkv.data(), L, C, H);
  CHECK(max_rel(y1, y2) < 1e-13);
  CHECK(max_rel(a1, a2) < 1e-13);
  for (int h = 0; h < H; ++h) {
    for (int i = 0; i < L; ++i) {
      double row = 0;
      for (int j = 0; j < L; ++j) row += a1[static_cast<std::size_t>((h * L + i) * L + j)];
      REQUIRE(std::abs(row - 1.0) < 1e-12);
    }
  }
  std::vector<double> d1(L * 3 * C, 0.0), d2(L * 3 * C, 0.0);
  k::attention_backward(d1.data(), s1.data(), dy.data(), qkv.data(), a1.data(), L, C, H);
  ref::attention_backward(d2.data(), s2.data(), dy.data(), qkv.data(), a2.data(), L, C, H);
  CHECK(max_rel(d1, d2) < 1e-12);
}

TEST_CASE("gelu agrees with the reference and its derivative with finite differences") {
  const auto x = randn<double>(64, 11, 2.0), dy = randn<double>(64, 12);
  std::vector<double> y1(64), y2(64), d1(64, 0.0), d2(64, 0.0);
  k::gelu_forward(y1.data(), x.data(), 64);
  ref::gelu_forward(y2.data(), x.data(), 64);
  CHECK(y1 == y2);
  k::gelu_backward(d1.data(), x.data(), dy.data(), 64);
  ref::gelu_backward(d2.data(), x.data(), dy.data(), 64);
  CHECK(d1 == d2);
  for (double v : x) {
    const double h = 1e-6;
    const double fd = (k::gelu_scalar(v + h) - k::gelu_scalar(v - h)) / (2 * h);
    REQUIRE(std::abs(fd - k::gelu_grad_scalar(v)) < 1e-8);
  }
}

TEST_CASE("parallel kernels are bit-identical across thread counts") {
  const auto x = randn<float>(N * I, 21), w = randn<float>(I * O, 22), b = randn<float>(O, 23), dy = randn<float>(N * O, 24);
  const auto qkv = randn<float>(L * 3 * C, 25), dya = randn<float>(L * C, 26);
  const auto run = [&] {
    std::vector<float> out;
    std::vector<float> y(N * O), dx(N * I, 0.f), dw(I * O, 0.f), db(O, 0.f);
    k::matmul_forward(y.data(), x.data(), w.data(), b.data(), N, I, O);
    k::matmul_backward(dx.data(), dw.data(), db.data(), dy.data(), x.data(), w.data(), N, I, O);
    std::vector<float> ya(L * C), att(H * L * L), sc(H * L * L), dq(L * 3 * C, 0.f);
    k::attention_forward(ya.data(), att.data(), qkv.data(), L, C, H);
    k::attention_backward(dq.data(), sc.data(), dya.data(), qkv.data(), att.data(), L, C, H);
    for (const auto* v : {&y, &dx, &dw, &db, &ya, &att, &dq}) out.insert(out.end(), v->begin(), v->end());
    return out;
  };
  std::vector<float> one, four;
  with_threads(1, [&] { one = run(); });
  with_threads(4, [&] { four = run(); });
  CHECK(one == four);
}
