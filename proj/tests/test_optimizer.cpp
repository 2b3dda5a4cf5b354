#include <doctest.h>

#include <cmath>

#include "dsft/checkpoint.hpp"
#include "dsft/error.hpp"
#include "dsft/hash.hpp"
#include "dsft/optimizer.hpp"
#include "dsft/rng.hpp"
#include "support.hpp"

using namespace dsft;

TEST_CASE("zero gradients leave parameters exactly unchanged") {
  std::vector<float> p{1.5f, -2.0f, 0.0f, 3e-7f};
  const auto before = p;
  AdamState st(p.size());
  const std::vector<float> g(p.size(), 0.0f);
  for (int i = 0; i < 5; ++i) optimizer_step(p, g, st, 1e-3);
  CHECK(p == before);
  CHECK(st.t == 5);
}

TEST_CASE("first Adam step on a scalar matches the closed form") {
  // m1 = (1 - b1) g, v1 = (1 - b2) g^2; bias correction gives m_hat = g, v_hat = g^2,
  // so the step is lr * g / (|g| + eps).
  for (double g : {0.5, -3.0, 1e-3}) {
    std::vector<float> p{1.0f};
    AdamState st(1);
    const double lr = 0.1;
    optimizer_step(p, std::vector<float>{static_cast<float>(g)}, st, lr);
    const double gf = static_cast<float>(g);
    const double expected = 1.0 - lr * gf / (std::abs(gf) + 1e-8);
    CHECK(p[0] == static_cast<float>(expected));
    CHECK(st.m[0] == static_cast<float>(0.1 * gf));
    CHECK(st.v[0] == static_cast<float>(0.001 * gf * gf));
  }
}

TEST_CASE("two steps equal one step, checkpoint, reload, one step") {
  ModelConfig c;
  c.layers = 1;
  c.heads = 1;
  c.d_model = 4;
  c.d_ff = 8;
  c.max_len = 4;
  c.vocab_size = 9;
  const auto init = init_params(c, 3);
  CounterRng rng(5);
  std::vector<float> g1(init.data.size()), g2(init.data.size());
  for (auto& x : g1) x = static_cast<float>(rng.normal());
  for (auto& x : g2) x = static_cast<float>(rng.normal());

  auto straight = init;
  AdamState st(init.data.size());
  optimizer_step(straight.data, g1, st, 1e-2);
  optimizer_step(straight.data, g2, st, 1e-2);

  auto resumed = init;
  AdamState st2(init.data.size());
  optimizer_step(resumed.data, g1, st2, 1e-2);
  test::TempDir dir("adam_resume");
  Checkpoint ck;
  ck.params = resumed;
  ck.adam = st2;
  ck.step = 1;
  save_checkpoint(dir / "s1", ck);
  auto back = load_checkpoint(dir / "s1");
  REQUIRE(back.adam.has_value());
  CHECK(*back.adam == st2);
  optimizer_step(back.params.data, g2, *back.adam, 1e-2);
  CHECK(back.params.data == straight.data);
  CHECK(*back.adam == st);
}

TEST_CASE("optimizer rejects bad arguments") {
  std::vector<float> p(3, 0.0f);
  AdamState st(3);
  CHECK_THROWS_AS(optimizer_step(p, std::vector<float>(2, 0.0f), st, 1e-3), Error);
  CHECK_THROWS_AS(optimizer_step(p, std::vector<float>(3, 0.0f), st, 0.0), Error);
  AdamState wrong(2);
  CHECK_THROWS_AS(optimizer_step(p, std::vector<float>(3, 0.0f), wrong, 1e-3), Error);
}

TEST_CASE("tampered checkpoint blobs are refused") {
  ModelConfig c;
  c.layers = 1;
  c.heads = 1;
  c.d_model = 4;
  c.d_ff = 4;
  c.max_len = 4;
  c.vocab_size = 6;
  Checkpoint ck;
  ck.params = init_params(c, 1);
  test::TempDir dir("ckpt_tamper");
  save_checkpoint(dir / "x", ck);
  auto bytes = read_file(dir / "x.bin");
  bytes[7] ^= 0x10;
  write_file(dir / "x.bin", bytes);
  try {
    (void)load_checkpoint(dir / "x");
    FAIL("expected an integrity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Integrity);
  }
  CHECK_THROWS_AS(load_checkpoint(dir / "missing"), Error);
}
