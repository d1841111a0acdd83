#include <cmath>
#include <string>

#include "codemix/errors.hpp"
#include "codemix/numerics/grad_check.hpp"
#include "codemix/numerics/logmath.hpp"
#include "codemix/numerics/ops.hpp"
#include "doctest.h"
#include "helpers.hpp"

using namespace codemix;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_SUITE("numerics") {

TEST_CASE("tensor shape invariants") {
  Tensor t({2, 3}, 1.5);
  CHECK(t.numel() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(Tensor::vector({1, 2, 3}).rows() == 1);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK(shape_string({2, 3}) == "[2x3]");
}

TEST_CASE("matmul small cases") {
  Tape tape;
  Var eye = tape.constant(Tensor::matrix(2, 2, {1, 0, 0, 1}));
  Var m = tape.constant(Tensor::matrix(2, 2, {2, 3, 4, 5}));
  CHECK(ops::matmul(eye, m).value() == Tensor::matrix(2, 2, {2, 3, 4, 5}));
  Var a = tape.constant(Tensor::matrix(1, 2, {1, 2}));
  Var b = tape.constant(Tensor::matrix(2, 1, {3, 4}));
  CHECK(ops::matmul(a, b).value() == Tensor::matrix(1, 1, {11}));
}

TEST_CASE("matmul against the triple loop") {
  Rng rng(1);
  Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 2}, rng);
  Tape tape;
  Tensor c = ops::matmul(tape.constant(a), tape.constant(b)).value();
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 4; ++p) s += a.at(i, p) * b.at(p, j);
      CHECK(std::abs(c.at(i, j) - s) < 1e-12);
    }
  Tensor bt({2, 4});
  for (std::size_t p = 0; p < 4; ++p)
    for (std::size_t j = 0; j < 2; ++j) bt.at(j, p) = b.at(p, j);
  CHECK(max_abs_diff(ops::matmul_nt(tape.constant(a), tape.constant(bt)).value(), c) < 1e-12);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  Var a = tape.constant(Tensor({2, 3}));
  Var b = tape.constant(Tensor({2, 3}));
  try {
    ops::matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[2x3]") != msg.rfind("[2x3]"));
  }
}

TEST_CASE("softmax examples") {
  Tape tape;
  Tensor s = ops::softmax(tape.constant(Tensor::vector({0, 0}))).value();
  CHECK(s[0] == doctest::Approx(0.5));
  CHECK(s[1] == doctest::Approx(0.5));
  Tensor big = ops::softmax(tape.constant(Tensor::vector({1000, 0}))).value();
  CHECK(big.all_finite());
  CHECK(big[0] == doctest::Approx(1.0));
  CHECK(big[1] < 1e-300);
  Tensor x = ops::softmax(tape.constant(Tensor::vector({1, 2, 3}))).value();
  const double z = std::exp(1.0) + std::exp(2.0) + std::exp(3.0);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(x[i] - std::exp(i + 1.0) / z) < 1e-15);
  CHECK_THROWS_AS(ops::softmax(tape.constant(Tensor({0}))), DimensionError);
}

TEST_CASE("softmax sums to one and ignores constant shifts") {
  Rng rng(2);
  Tape tape;
  for (int rep = 0; rep < 20; ++rep) {
    Tensor v = random_tensor({7}, rng, 5.0);
    Tensor shifted = v;
    for (double& x : shifted.storage()) x += 3.7;
    Tensor a = ops::softmax(tape.constant(v)).value();
    Tensor b = ops::softmax(tape.constant(shifted)).value();
    double sum = 0.0;
    for (double x : a.storage()) {
      CHECK(x > 0.0);
      sum += x;
    }
    CHECK(std::abs(sum - 1.0) < 1e-12);
    CHECK(max_abs_diff(a, b) < 1e-12);
    Tensor ls = ops::log_softmax(tape.constant(v)).value();
    for (std::size_t i = 0; i < 7; ++i) CHECK(std::abs(std::exp(ls[i]) - a[i]) < 1e-12);
  }
}

TEST_CASE("log_add is exact at -inf") {
  CHECK(log_add(kLogZero, kLogZero) == kLogZero);
  CHECK(log_add(kLogZero, 0.5) == 0.5);
  CHECK(std::abs(log_add(std::log(0.25), std::log(0.5)) - std::log(0.75)) < 1e-15);
}

namespace {

ops::LstmWeights lstm_weights(Tape& tape, const Tensor& wx, const Tensor& wh, const Tensor& b) {
  return {tape.constant(wx), tape.constant(wh), tape.constant(b)};
}

double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_CASE("lstm_cell with zero params and zero state stays at zero") {
  Tape tape;
  const std::size_t in = 3, H = 4;
  auto w = lstm_weights(tape, Tensor({in, 4 * H}), Tensor({H, 4 * H}), Tensor({4 * H}));
  auto [h, c] = ops::lstm_cell(tape.constant(Tensor({1, in}, 0.7)), tape.constant(Tensor({1, H})),
                               tape.constant(Tensor({1, H})), w);
  for (double v : h.value().storage()) CHECK(v == 0.0);
  for (double v : c.value().storage()) CHECK(v == 0.0);
}

TEST_CASE("lstm_cell with saturated forget gate keeps the cell") {
  Tape tape;
  const std::size_t in = 2, H = 3;
  Tensor bias({4 * H});
  for (std::size_t j = H; j < 2 * H; ++j) bias[j] = 50.0;
  auto w = lstm_weights(tape, Tensor({in, 4 * H}), Tensor({H, 4 * H}), bias);
  Tensor c0 = Tensor::matrix(1, 3, {0.3, -0.8, 1.2});
  auto [h, c] = ops::lstm_cell(tape.constant(Tensor({1, in})), tape.constant(Tensor({1, H})),
                               tape.constant(c0), w);
  CHECK(max_abs_diff(c.value(), c0) < 1e-12);
}

TEST_CASE("lstm_cell against a scalar reimplementation") {
  Rng rng(3);
  const std::size_t in = 5, H = 4;
  Tensor wx = random_tensor({in, 4 * H}, rng), wh = random_tensor({H, 4 * H}, rng),
         b = random_tensor({4 * H}, rng), x = random_tensor({1, in}, rng),
         h0 = random_tensor({1, H}, rng), c0 = random_tensor({1, H}, rng);
  Tape tape;
  auto [h, c] = ops::lstm_cell(tape.constant(x), tape.constant(h0), tape.constant(c0),
                               lstm_weights(tape, wx, wh, b));
  for (std::size_t j = 0; j < H; ++j) {
    double g[4];
    for (std::size_t q = 0; q < 4; ++q) {
      double s = b[q * H + j];
      for (std::size_t p = 0; p < in; ++p) s += x[p] * wx.at(p, q * H + j);
      for (std::size_t p = 0; p < H; ++p) s += h0[p] * wh.at(p, q * H + j);
      g[q] = s;
    }
    const double cj = sig(g[1]) * c0[j] + sig(g[0]) * std::tanh(g[2]);
    const double hj = sig(g[3]) * std::tanh(cj);
    CHECK(std::abs(c.value()[j] - cj) < 1e-12);
    CHECK(std::abs(h.value()[j] - hj) < 1e-12);
  }
}

TEST_CASE("backward basics") {
  Tape tape;
  Var x = tape.input(Tensor::vector({1, -2, 3}));
  Var s = ops::sum(x);
  tape.backward(s);
  const Tensor gx = tape.grad(x);
  for (double g : gx.storage()) CHECK(g == 1.0);

  Tape t2;
  Var y = t2.input(Tensor::vector({3}));
  Var sq = ops::sum(ops::mul(y, y));
  t2.backward(sq);
  CHECK(t2.grad(y)[0] == doctest::Approx(6.0));

  Tape t3;
  Var v = t3.input(Tensor::vector({1, 2}));
  CHECK_THROWS(t3.backward(ops::tanh(v)));
}

TEST_CASE("fan-out gradients add up and unused tensors get zero") {
  Rng rng(4);
  Tensor x0 = random_tensor({1, 4}, rng);
  Tape tape;
  Var x = tape.input(x0);
  Var unused = tape.input(random_tensor({1, 4}, rng));
  (void)ops::tanh(unused);
  Var loss = ops::sum(ops::add(ops::tanh(x), ops::mul(x, x)));
  tape.backward(loss);
  Tensor joint = tape.grad(x);
  const Tensor gu = tape.grad(unused);
  for (double g : gu.storage()) CHECK(g == 0.0);

  Tape ta;
  Var xa = ta.input(x0);
  ta.backward(ops::sum(ops::tanh(xa)));
  Tape tb;
  Var xb = tb.input(x0);
  tb.backward(ops::sum(ops::mul(xb, xb)));
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(std::abs(joint[i] - (ta.grad(xa)[i] + tb.grad(xb)[i])) < 1e-14);
}

TEST_CASE("grad_check trivial cases") {
  Rng rng(5);
  Tensor x = random_tensor({2, 3}, rng);
  CHECK(grad_check([](Tape&, Var v) { return ops::sum(ops::mul(v, v)); }, x) < 1e-8);
  CHECK(grad_check([](Tape& t, Var) { return ops::sum(t.constant(Tensor({2}, 1.0))); }, x) == 0.0);
  CHECK_THROWS_AS(grad_check([](Tape&, Var v) { return ops::sum(v); }, x, 1e-2), ConfigError);
  CHECK(relative_error(2.0, 2.5) == doctest::Approx(0.2));
  CHECK(relative_error(0.1, 0.2) == doctest::Approx(0.1));
}

TEST_CASE("grad_check on every elementwise and row op") {
  Rng rng(6);
  const Tensor x = random_tensor({3, 4}, rng);
  const Tensor other = random_tensor({3, 4}, rng);
  const Tensor bias = random_tensor({4}, rng);
  const Tensor wmat = random_tensor({4, 2}, rng);
  const Tensor wnt = random_tensor({5, 4}, rng);
  const Tensor weights = random_tensor({3, 4}, rng);
  // Weighted sums keep the scalar sensitive to every output coordinate.
  auto wsum = [&](Tape& t, Var v) {
    Rng r(99);
    return ops::sum(ops::mul(v, t.constant(random_tensor(v.shape(), r))));
  };
  std::vector<std::pair<const char*, ScalarFn>> cases = {
      {"add", [&](Tape& t, Var v) { return wsum(t, ops::add(v, t.constant(other))); }},
      {"sub", [&](Tape& t, Var v) { return wsum(t, ops::sub(t.constant(other), v)); }},
      {"mul", [&](Tape& t, Var v) { return wsum(t, ops::mul(v, t.constant(other))); }},
      {"add_bias", [&](Tape& t, Var v) { return wsum(t, ops::add_bias(v, t.constant(bias))); }},
      {"scale", [&](Tape& t, Var v) { return wsum(t, ops::scale(v, -1.7)); }},
      {"neg", [&](Tape& t, Var v) { return wsum(t, ops::neg(v)); }},
      {"tanh", [&](Tape& t, Var v) { return wsum(t, ops::tanh(v)); }},
      {"sigmoid", [&](Tape& t, Var v) { return wsum(t, ops::sigmoid(v)); }},
      {"exp", [&](Tape& t, Var v) { return wsum(t, ops::exp(v)); }},
      {"pick", [&](Tape&, Var v) { return ops::pick(v, 5); }},
      {"logaddexp", [&](Tape& t, Var v) { return wsum(t, ops::logaddexp(v, t.constant(other))); }},
      {"softmax", [&](Tape& t, Var v) { return wsum(t, ops::softmax(v)); }},
      {"log_softmax", [&](Tape& t, Var v) { return wsum(t, ops::log_softmax(v)); }},
      {"row", [&](Tape& t, Var v) { return wsum(t, ops::row(v, 1)); }},
      {"slice_cols", [&](Tape& t, Var v) { return wsum(t, ops::slice_cols(v, 1, 3)); }},
      {"concat_rows",
       [&](Tape& t, Var v) { return wsum(t, ops::concat_rows({ops::row(v, 2), ops::row(v, 0)})); }},
      {"matmul", [&](Tape& t, Var v) { return wsum(t, ops::matmul(v, t.constant(wmat))); }},
      {"matmul_nt", [&](Tape& t, Var v) { return wsum(t, ops::matmul_nt(v, t.constant(wnt))); }},
      {"outer_add_rows",
       [&](Tape& t, Var v) { return wsum(t, ops::outer_add_rows(v, t.constant(other))); }},
  };
  for (auto& [name, f] : cases) {
    CAPTURE(name);
    CHECK(grad_check(f, x) < 1e-6);
  }
  // mask_future on a square input
  const Tensor sq = random_tensor({4, 4}, rng);
  CHECK(grad_check([&](Tape& t, Var v) { return wsum(t, ops::softmax(ops::mask_future(v, 1))); },
                   sq) < 1e-6);
}

TEST_CASE("mask_future masks exactly the frames past the look-ahead") {
  Tape tape;
  Tensor m = ops::mask_future(tape.constant(Tensor({4, 4}, 1.0)), 1).value();
  for (std::size_t t = 0; t < 4; ++t)
    for (std::size_t s = 0; s < 4; ++s) CHECK((s > t + 1) == std::isinf(m.at(t, s)));
}

TEST_CASE("grad_check on a composite lstm + softmax graph") {
  Rng rng(7);
  const std::size_t in = 3, H = 4;
  Tensor wx = random_tensor({in, 4 * H}, rng), wh = random_tensor({H, 4 * H}, rng),
         b = random_tensor({4 * H}, rng), xs = random_tensor({3, in}, rng);
  Tensor out = random_tensor({H, 5}, rng);
  auto f = [&](Tape& t, Var w) {
    ops::LstmWeights lw{w, t.constant(wh), t.constant(b)};
    Var h = t.constant(Tensor({1, H})), c = t.constant(Tensor({1, H}));
    Var loss = t.constant(Tensor(Shape{}));
    for (std::size_t s = 0; s < 3; ++s) {
      std::tie(h, c) = ops::lstm_cell(ops::row(t.constant(xs), s), h, c, lw);
      loss = ops::add(loss, ops::pick(ops::log_softmax(ops::matmul(h, t.constant(out))), s));
    }
    return ops::neg(loss);
  };
  CHECK(grad_check(f, wx) < 1e-4);
}

}
