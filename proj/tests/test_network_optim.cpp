// Network forward pass against an independently hand-rolled evaluation, plus
// optimizer, EMA and checkpoint behavior.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "ractd/checkpoint.hpp"
#include "ractd/optim.hpp"
#include "ractd/rng.hpp"
#include "ractd/tape.hpp"

using namespace ractd;

namespace {

// Independent forward pass: plain loops over the documented flat layout
// (per layer, column-major W then b), own mish. Shares nothing with
// mlp_eval besides the weight bytes.
std::vector<double> handrolled_forward(const NetworkParams& p, std::vector<double> h,
                                       const std::vector<double>& cond) {
  std::size_t off_idx = 0;
  for (std::size_t l = 0; l < p.layers.size(); ++l) {
    const std::size_t in_dim = static_cast<std::size_t>(p.layers[l].in);
    const std::size_t out_dim = static_cast<std::size_t>(p.layers[l].out);
    std::vector<double> in = h;
    in.insert(in.end(), cond.begin(), cond.end());
    REQUIRE(in.size() == in_dim);
    const double* block = p.flat.data() + p.offsets[off_idx];
    std::vector<double> z(out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) {
      double acc = block[in_dim * out_dim + r];  // bias
      for (std::size_t c = 0; c < in_dim; ++c) acc += block[c * out_dim + r] * in[c];
      z[r] = acc;
    }
    if (p.layers[l].act == Activation::Mish) {
      for (double& v : z) {
        const double sp = std::log(1.0 + std::exp(v));
        v = v * std::tanh(sp);
      }
    }
    h = std::move(z);
    ++off_idx;
  }
  return h;
}

}  // namespace

TEST_CASE("zero weights map any input to zero") {
  NetworkParams p = make_mlp(3, 0, {8, 8}, 2, Activation::Mish);
  Rng rng(1);
  const Vec y = mlp_eval(p, rng.normal_vec(3), Vec());
  CHECK(y.isZero(0.0));
}

TEST_CASE("a single identity layer reproduces its input") {
  NetworkParams p = NetworkParams::make({{4, 4, Activation::Identity}});
  for (int i = 0; i < 4; ++i) p.flat[i * 4 + i] = 1.0;  // W = I, b = 0
  Rng rng(2);
  const Vec x = rng.normal_vec(4);
  const Vec y = mlp_eval(p, x, Vec());
  for (int i = 0; i < 4; ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("two-layer net with seed-0 weights matches the hand-rolled forward pass") {
  NetworkParams p = make_mlp(1, 0, {4}, 1, Activation::Mish);
  Rng rng(0);
  p.init_uniform(rng);
  Vec x(1);
  x[0] = 0.5;
  const Vec got = mlp_eval(p, x, Vec());
  const auto want = handrolled_forward(p, {0.5}, {});
  REQUIRE(want.size() == 1);
  CHECK(got[0] == doctest::Approx(want[0]).epsilon(1e-12));

  // Conditioned variant exercises the per-layer concatenation.
  NetworkParams pc = make_mlp(2, 3, {5}, 2, Activation::Mish);
  pc.init_uniform(rng);
  const Vec xin = rng.normal_vec(2);
  const Vec cond = rng.normal_vec(3);
  const Vec got_c = mlp_eval(pc, xin, cond);
  const auto want_c = handrolled_forward(pc, {xin[0], xin[1]}, {cond[0], cond[1], cond[2]});
  REQUIRE(want_c.size() == 2);
  for (int i = 0; i < 2; ++i) CHECK(got_c[i] == doctest::Approx(want_c[i]).epsilon(1e-12));
}

TEST_CASE("forward pass is deterministic and tape forward matches plain eval bitwise") {
  Rng rng(5);
  NetworkParams p = make_mlp(6, 2, {16, 16}, 4, Activation::Silu);
  p.init_uniform(rng);
  const Vec x = rng.normal_vec(6);
  const Vec cond = rng.normal_vec(2);

  const Vec a = mlp_eval(p, x, cond);
  const Vec b = mlp_eval(p, x, cond);
  for (Index i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);

  Tape tape;
  const int src = tape.register_params(p, false);
  const int y = mlp_node(tape, src, p, tape.constant(x), tape.constant(cond));
  for (Index i = 0; i < a.size(); ++i) CHECK(tape.value(y)[i] == a[i]);
}

TEST_CASE("dimension mismatch names the offending layer") {
  NetworkParams p = make_mlp(3, 2, {4}, 1);
  try {
    mlp_eval(p, Vec::Zero(3), Vec::Zero(5));
    CHECK(false);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
  }
}

TEST_CASE("fourier features interleave sin/cos over doubling frequencies") {
  const Vec f = fourier_features(0.25, 2);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == doctest::Approx(std::sin(kPi * 0.25)));
  CHECK(f[1] == doctest::Approx(std::cos(kPi * 0.25)));
  CHECK(f[2] == doctest::Approx(std::sin(2.0 * kPi * 0.25)));
  CHECK(f[3] == doctest::Approx(std::cos(2.0 * kPi * 0.25)));
}

TEST_CASE("adam with zero gradient leaves parameters unchanged") {
  AdamState s = AdamState::make(3, 0.1);
  Vec p = Vec::Constant(3, 1.0);
  const Vec before = p;
  adam_step(s, p, Vec::Zero(3));
  adam_step(s, p, Vec::Zero(3));
  for (int i = 0; i < 3; ++i) CHECK(p[i] == before[i]);
}

TEST_CASE("first adam step moves by about -lr * sign(grad)") {
  AdamState s = AdamState::make(2, 0.1);
  s.eps = 1e-12;
  Vec p = Vec::Zero(2);
  Vec g(2);
  g << 3.0, -0.004;
  adam_step(s, p, g);
  CHECK(p[0] == doctest::Approx(-0.1).epsilon(1e-6));
  CHECK(p[1] == doctest::Approx(0.1).epsilon(1e-6));
}

TEST_CASE("adam drives a quadratic to its minimum") {
  AdamState s = AdamState::make(1, 0.1);
  Vec w = Vec::Zero(1);
  for (int i = 0; i < 100; ++i) {
    Vec g(1);
    g[0] = 2.0 * (w[0] - 2.0);
    adam_step(s, w, g);
  }
  CHECK(std::abs(w[0] - 2.0) < 0.05);
}

TEST_CASE("ema interpolates and converges geometrically") {
  NetworkParams target = NetworkParams::make({{1, 1, Activation::Identity}});
  NetworkParams source = target;
  target.flat.setConstant(2.0);
  source.flat.setConstant(0.0);

  NetworkParams t0 = target;
  ema_update(t0, source, 0.0);
  for (Index i = 0; i < t0.flat.size(); ++i) CHECK(t0.flat[i] == source.flat[i]);

  NetworkParams t1 = target;
  ema_update(t1, source, 0.5);
  CHECK(t1.flat[0] == doctest::Approx(1.0));

  // k updates against a fixed source: target_k = d^k t0 + (1 - d^k) s.
  const double d = 0.9;
  NetworkParams tk = target;
  for (int k = 1; k <= 20; ++k) {
    ema_update(tk, source, d);
    const double expect = std::pow(d, k) * 2.0;
    CHECK(tk.flat[0] == doctest::Approx(expect).epsilon(1e-12));
  }

  NetworkParams other = NetworkParams::make({{2, 1, Activation::Identity}});
  CHECK_THROWS_AS(ema_update(tk, other, 0.5), std::invalid_argument);
}

TEST_CASE("finite_diff_check on an analytic quadratic is tiny") {
  auto f = [](const Vec& p) {
    LossEval e;
    e.value = 0.5 * p.squaredNorm();
    e.grad = p;
    return e;
  };
  Rng rng(9);
  const Vec p = rng.normal_vec(5);
  CHECK(finite_diff_check(f, p) < 1e-9);
  auto bad = [](const Vec&) {
    return LossEval{std::nan(""), Vec::Zero(5)};
  };
  CHECK_THROWS_AS(finite_diff_check(bad, p), std::runtime_error);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  Rng rng(13);
  Checkpoint ckpt;
  ckpt.role = "teacher";
  ckpt.step = 1234;
  ckpt.config_hash = "deadbeefcafef00d";
  ckpt.meta = {{"x_dim", 16}, {"note", "round-trip"}};
  ckpt.params = make_mlp(4, 2, {8}, 4, Activation::Mish);
  ckpt.params.init_uniform(rng);

  const auto dir = std::filesystem::temp_directory_path() / "ractd_ckpt_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "model.ckpt";
  save_checkpoint(path, ckpt);
  const Checkpoint back = load_checkpoint(path, "teacher");

  CHECK(back.role == ckpt.role);
  CHECK(back.step == ckpt.step);
  CHECK(back.config_hash == ckpt.config_hash);
  CHECK(back.meta == ckpt.meta);
  REQUIRE(back.params.flat.size() == ckpt.params.flat.size());
  for (Index i = 0; i < ckpt.params.flat.size(); ++i)
    CHECK(back.params.flat[i] == ckpt.params.flat[i]);

  // Saving the loaded model reproduces the same bytes.
  const auto path2 = dir / "model2.ckpt";
  save_checkpoint(path2, back);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  const std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  const std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  CHECK_THROWS_AS(load_checkpoint(path, "student"), std::runtime_error);
  const auto bad = dir / "trunc.ckpt";
  std::ofstream(bad, std::ios::binary) << b1.substr(0, b1.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(bad), std::runtime_error);
  CHECK_THROWS_AS(load_checkpoint(dir / "missing.ckpt"), std::runtime_error);
}

TEST_CASE("validate rejects corrupted parameter blocks") {
  NetworkParams p = make_mlp(2, 0, {3}, 1);
  p.validate();
  NetworkParams bad = p;
  bad.flat.conservativeResize(bad.flat.size() - 1);
  CHECK_THROWS_AS(bad.validate(), std::runtime_error);
  NetworkParams nan_p = p;
  nan_p.flat[0] = std::nan("");
  CHECK_THROWS_AS(nan_p.validate(), std::runtime_error);
}
