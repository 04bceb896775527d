#include "doctest.h"

#include "lfsr/nn.hpp"
#include "lfsr/ops.hpp"
#include "support/oracles.hpp"

using namespace lfsr;

namespace {

Tensor<double> from(Shape shape, std::initializer_list<double> values) {
  Tensor<double> t(std::move(shape));
  std::copy(values.begin(), values.end(), t.data());
  return t;
}

std::vector<double> to_vec(const Tensor<double>& t) { return {t.data(), t.data() + t.numel()}; }

void require_gradcheck(const oracle::GradCheck& r) {
  INFO(r.where);
  CHECK(r.ok);
}

}  // namespace

TEST_SUITE("tensor") {
  TEST_CASE("shape validation") {
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 0}), ShapeError);
    CHECK_THROWS_AS(Tensor<float>(Shape{2, 2}, Array<float>::Zero(3)), ShapeError);
    Tensor<float> t(Shape{2, 3}, 1.5f);
    CHECK(t.numel() == 6);
    CHECK(t.values().sum() == doctest::Approx(9.0));
  }

  TEST_CASE("conv2d matches the direct loop") {
    std::mt19937_64 rng(1);
    auto x = oracle::random_tensor({2, 3, 5, 6}, rng);
    auto w = oracle::random_tensor({4, 3, 3, 3}, rng);
    auto b = oracle::random_tensor({4}, rng);
    auto got = conv2d(x, w, b), want = oracle::conv2d(x, w, b);
    REQUIRE(got.shape() == want.shape());
    CHECK((got.values() - want.values()).abs().maxCoeff() < 1e-12);

    auto w1 = oracle::random_tensor({2, 3, 1, 1}, rng);
    auto b1 = oracle::random_tensor({2}, rng);
    CHECK((conv2d(x, w1, b1).values() - oracle::conv2d(x, w1, b1).values()).abs().maxCoeff() < 1e-12);
  }

  TEST_CASE("conv2d zero and delta kernels") {
    std::mt19937_64 rng(2);
    auto x = oracle::random_tensor({2, 4, 4}, rng);
    Tensor<double> zero_w(Shape{3, 2, 3, 3}), zero_b(Shape{3});
    CHECK(conv2d(x, zero_w, zero_b).values().abs().maxCoeff() == 0.0);

    Tensor<double> delta(Shape{1, 2, 3, 3});
    delta.values()[(0 * 2 + 1) * 9 + 4] = 1.0;  // center tap on channel 1
    auto y = conv2d(x, delta, Tensor<double>(Shape{1}));
    CHECK((y.values() - x.values().segment(16, 16)).abs().maxCoeff() == 0.0);
  }

  TEST_CASE("conv2d rejects mismatched channels") {
    Tensor<float> x(Shape{2, 4, 4}), w(Shape{1, 3, 3, 3}), b(Shape{1});
    CHECK_THROWS_AS(conv2d(x, w, b), ShapeError);
    Tensor<float> even(Shape{1, 2, 2, 2});
    CHECK_THROWS_AS(conv2d(x, even, b), ShapeError);
  }

  TEST_CASE("conv2d gradients on a 1x4x4 input") {
    std::mt19937_64 rng(3);
    auto x = oracle::random_tensor({1, 4, 4}, rng);
    auto w = oracle::random_tensor({2, 1, 3, 3}, rng);
    auto b = oracle::random_tensor({2}, rng);
    auto target = oracle::random_tensor({2, 4, 4}, rng, 3.0, 4.0);
    require_gradcheck(oracle::gradcheck({x, w, b}, [&] { return l1_loss(conv2d(x, w, b), target); }));
  }

  TEST_CASE("relu values and gradients") {
    CHECK(to_vec(relu(from({3}, {-1, 0, 2}))) == std::vector<double>{0, 0, 2});

    auto neg = from({3}, {-1, -2, -0.5});
    neg.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> loss;
    {
      Tape<double>::Scope scope(tape);
      loss = sum(relu(neg));
    }
    tape.backward(loss);
    CHECK(loss.item() == 0.0);
    CHECK(neg.grad().abs().maxCoeff() == 0.0);

    auto zero = from({1}, {0.0});
    zero.set_requires_grad(true);
    Tape<double> tape2;
    {
      Tape<double>::Scope scope(tape2);
      loss = sum(relu(zero));
    }
    tape2.backward(loss);
    CHECK(zero.grad()[0] == 0.0);

    std::mt19937_64 rng(4);
    auto x = oracle::random_tensor({4, 5}, rng);
    for (Index i = 0; i < x.numel(); ++i)
      if (std::abs(x.values()[i]) < 1e-2) x.values()[i] = 0.5;
    auto weights = oracle::random_tensor({4, 5}, rng);
    require_gradcheck(oracle::gradcheck({x}, [&] { return sum(mul(relu(x), weights)); }));
  }

  TEST_CASE("elementwise op gradients") {
    std::mt19937_64 rng(5);
    auto a = oracle::random_tensor({3, 4}, rng), b = oracle::random_tensor({3, 4}, rng);
    auto w = oracle::random_tensor({3, 4}, rng);
    require_gradcheck(oracle::gradcheck({a, b}, [&] { return sum(mul(add(a, b), w)); }));
    require_gradcheck(oracle::gradcheck({a, b}, [&] { return sum(mul(sub(a, b), w)); }));
    require_gradcheck(oracle::gradcheck({a, b}, [&] { return sum(mul(mul(a, b), w)); }));
    require_gradcheck(oracle::gradcheck({a}, [&] { return mean(mul(scale(a, 2.5), w)); }));
    require_gradcheck(oracle::gradcheck({a}, [&] { return sum(mul(sigmoid(a), w)); }));
    auto s = oracle::random_tensor({3}, rng);
    require_gradcheck(oracle::gradcheck({a, s}, [&] { return sum(mul(scale_slices(a, s), w)); }));
  }

  TEST_CASE("sigmoid saturates and is one half at zero") {
    auto y = sigmoid(from({3}, {0.0, 40.0, -40.0}));
    CHECK(y.values()[0] == 0.5);
    CHECK(y.values()[1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(y.values()[2] == doctest::Approx(0.0));
    CHECK(sigmoid(from({1}, {-1000.0})).all_finite());
  }

  TEST_CASE("concat and slice") {
    auto a = from({1, 2, 2}, {1, 2, 3, 4}), b = from({1, 2, 2}, {5, 6, 7, 8});
    auto c = concat<double>({a, b}, 0);
    CHECK(c.shape() == Shape{2, 2, 2});
    CHECK(to_vec(concat<double>({a}, 0)) == to_vec(a));
    CHECK(to_vec(slice(c, 0, 0, 1)) == to_vec(a));
    CHECK(to_vec(slice(c, 0, 1, 1)) == to_vec(b));
    auto d = concat<double>({a, b}, 2);
    CHECK(d.shape() == Shape{1, 2, 4});
    CHECK(to_vec(d) == std::vector<double>{1, 2, 5, 6, 3, 4, 7, 8});
    CHECK(to_vec(slice(d, 2, 2, 2)) == to_vec(b));
    CHECK_THROWS_AS(concat<double>({a, from({1, 3, 1}, {1, 2, 3})}, 0), ShapeError);

    std::mt19937_64 rng(6);
    auto x = oracle::random_tensor({2, 3, 2}, rng), y = oracle::random_tensor({2, 1, 2}, rng);
    auto w = oracle::random_tensor({2, 4, 2}, rng);
    require_gradcheck(oracle::gradcheck({x, y}, [&] { return sum(mul(concat<double>({x, y}, 1), w)); }));
    auto w2 = oracle::random_tensor({2, 2, 2}, rng);
    require_gradcheck(oracle::gradcheck({x}, [&] { return sum(mul(slice(x, 1, 1, 2), w2)); }));
  }

  TEST_CASE("gather accumulates repeated indices") {
    std::mt19937_64 rng(7);
    auto x = oracle::random_tensor({3, 2, 2}, rng);
    auto w = oracle::random_tensor({4, 2, 2}, rng);
    auto g = gather(x, {2, 0, 2, 1});
    CHECK(to_vec(slice(g, 0, 0, 1)) == to_vec(slice(x, 0, 2, 1)));
    require_gradcheck(oracle::gradcheck({x}, [&] { return sum(mul(gather(x, {2, 0, 2, 1}), w)); }));
  }

  TEST_CASE("max_over_axis") {
    CHECK(to_vec(max_over_axis(from({4}, {1, 3, 2, 0}), 0, 2)) == std::vector<double>{3, 2});
    auto x = from({3, 2}, {1, 5, 4, 2, 0, 3});
    CHECK(to_vec(max_over_axis(x, 0, 3)) == to_vec(x));
    CHECK_THROWS_AS(max_over_axis(x, 0, 4), ShapeError);

    // Within-window permutations leave the output unchanged.
    auto a = from({4}, {1, 3, 2, 0}), b = from({4}, {3, 1, 0, 2});
    CHECK(to_vec(max_over_axis(a, 0, 2)) == to_vec(max_over_axis(b, 0, 2)));

    // Every group is non-empty for any k >= p.
    for (Index k = 1; k <= 12; ++k)
      for (Index p = 1; p <= k; ++p) {
        Index covered = 0;
        for (Index j = 0; j < p; ++j) {
          const auto [lo, hi] = pooling_window(k, p, j);
          CHECK(hi > lo);
          covered += hi - lo;
        }
        CHECK(covered == k);
      }

    // Ties route the gradient to the first index.
    auto tie = from({2}, {1.0, 1.0});
    tie.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> loss;
    {
      Tape<double>::Scope scope(tape);
      loss = sum(max_over_axis(tie, 0, 1));
    }
    tape.backward(loss);
    CHECK(tie.grad()[0] == 1.0);
    CHECK(tie.grad()[1] == 0.0);

    std::mt19937_64 rng(8);
    auto y = oracle::random_tensor({5, 2, 3}, rng);
    auto w = oracle::random_tensor({2, 2, 3}, rng);
    require_gradcheck(oracle::gradcheck({y}, [&] { return sum(mul(max_over_axis(y, 0, 2), w)); }));
  }

  TEST_CASE("adaptive average pooling") {
    Tensor<double> c(Shape{2, 3, 3}, 5.0);
    CHECK(to_vec(adaptive_avg_pool_to_scalar(c)) == std::vector<double>{5, 5});
    CHECK(adaptive_avg_pool_to_scalar(from({1, 2, 2}, {1, 2, 3, 4})).item() == 2.5);

    auto x = from({1, 2, 2}, {1, 2, 3, 4});
    x.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> loss;
    {
      Tape<double>::Scope scope(tape);
      loss = sum(adaptive_avg_pool_to_scalar(x));
    }
    tape.backward(loss);
    CHECK((x.grad() - 0.25).abs().maxCoeff() == 0.0);
  }

  TEST_CASE("pixel shuffle") {
    Tensor<double> x(Shape{4, 2, 2});
    for (Index c = 0; c < 4; ++c) x.values().segment(c * 4, 4).setConstant(static_cast<double>(c + 1));
    auto y = pixel_shuffle(x, 2);
    CHECK(y.shape() == Shape{1, 4, 4});
    CHECK(to_vec(y) == std::vector<double>{1, 2, 1, 2, 3, 4, 3, 4, 1, 2, 1, 2, 3, 4, 3, 4});
    CHECK_THROWS_AS(pixel_shuffle(Tensor<double>(Shape{3, 2, 2}), 2), ShapeError);

    std::mt19937_64 rng(9);
    auto r = oracle::random_tensor({2, 9, 3, 2}, rng);
    CHECK(to_vec(pixel_unshuffle(pixel_shuffle(r, 3), 3)) == to_vec(r));
    auto w = oracle::random_tensor({2, 1, 9, 6}, rng);
    require_gradcheck(oracle::gradcheck({r}, [&] { return sum(mul(pixel_shuffle(r, 3), w)); }));
  }

  TEST_CASE("reshape and permute") {
    std::mt19937_64 rng(10);
    auto x = oracle::random_tensor({2, 3, 4}, rng);
    auto p = permute(x, {2, 0, 1});
    CHECK(p.shape() == Shape{4, 2, 3});
    CHECK(p.values()[(1 * 2 + 1) * 3 + 2] == x.values()[(1 * 3 + 2) * 4 + 1]);
    CHECK(to_vec(permute(p, {1, 2, 0})) == to_vec(x));
    CHECK_THROWS_AS(reshape(x, Shape{5, 5}), ShapeError);
    auto w = oracle::random_tensor({4, 2, 3}, rng);
    require_gradcheck(oracle::gradcheck({x}, [&] { return sum(mul(permute(x, {2, 0, 1}), w)); }));
  }

  TEST_CASE("diff and l1 loss") {
    auto x = from({2, 3}, {1, 4, 9, 16, 25, 36});
    CHECK(to_vec(diff(x, 1)) == std::vector<double>{3, 5, 9, 11});
    CHECK(to_vec(diff(x, 0)) == std::vector<double>{15, 21, 27});

    std::mt19937_64 rng(11);
    auto a = oracle::random_tensor({3, 3}, rng);
    CHECK(l1_loss(a, a).item() == 0.0);
    Tensor<double> shifted(a.shape(), Array<double>(a.values() + 0.1));
    CHECK(l1_loss(shifted, a).item() == doctest::Approx(0.1).epsilon(1e-12));

    // d l1 / d prediction = sign(prediction - target) / numel
    auto pred = a.clone();
    pred.set_requires_grad(true);
    auto target = oracle::random_tensor({3, 3}, rng);
    Tape<double> tape;
    Tensor<double> loss;
    {
      Tape<double>::Scope scope(tape);
      loss = l1_loss(pred, target);
    }
    tape.backward(loss);
    Array<double> expected = (pred.values() - target.values()).sign() / 9.0;
    CHECK((pred.grad() - expected).abs().maxCoeff() == 0.0);

    auto w = oracle::random_tensor({2, 3}, rng);
    require_gradcheck(oracle::gradcheck({a}, [&] { return sum(mul(diff(a, 0), w)); }));
  }

  TEST_CASE("backward contract") {
    std::mt19937_64 rng(12);
    auto x = oracle::random_tensor({2, 2}, rng);
    x.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> loss, vec;
    {
      Tape<double>::Scope scope(tape);
      loss = sum(x);
      vec = relu(x);
    }
    CHECK_THROWS_AS(tape.backward(vec), ShapeError);
    tape.backward(loss);
    CHECK((x.grad() - 1.0).abs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(tape.backward(loss), std::logic_error);

    // l1(x, x) has zero gradient.
    x.zero_grad();
    tape.reset();
    {
      Tape<double>::Scope scope(tape);
      loss = l1_loss(x, x);
    }
    tape.backward(loss);
    CHECK(x.grad().abs().maxCoeff() == 0.0);

    // A detached loss is not an error and leaves gradients at zero.
    x.zero_grad();
    Tape<double> other;
    Tensor<double> detached = sum(x);
    other.backward(detached);
    CHECK(!x.has_grad());
  }

  TEST_CASE("fan-out accumulates") {
    auto x = from({1}, {3.0});
    x.set_requires_grad(true);
    Tape<double> tape;
    Tensor<double> loss;
    {
      Tape<double>::Scope scope(tape);
      loss = sum(add(mul(x, x), x));
    }
    tape.backward(loss);
    CHECK(x.grad()[0] == doctest::Approx(7.0));
  }

  TEST_CASE("no recording without a tape or without grad inputs") {
    Tape<double> tape;
    Tensor<double> a(Shape{2}, 1.0);
    {
      Tape<double>::Scope scope(tape);
      auto b = add(a, a);
      (void)b;
    }
    CHECK(tape.size() == 0);
  }

  TEST_CASE("conv -> relu -> mean composite") {
    std::mt19937_64 rng(13);
    auto x = oracle::random_tensor({1, 6, 6}, rng);
    auto w = oracle::random_tensor({3, 1, 3, 3}, rng);
    auto b = oracle::random_tensor({3}, rng, 0.1, 0.3);
    require_gradcheck(oracle::gradcheck({x, w, b}, [&] { return mean(relu(conv2d(x, w, b))); }));
  }

  TEST_CASE("forward ops are deterministic") {
    Rng rng(14);
    auto conv = Conv2d<float>::make(2, 3, 3, rng);
    Tensor<float> x(Shape{2, 2, 9, 7});
    for (Index i = 0; i < x.numel(); ++i) x.values()[i] = std::sin(0.37f * static_cast<float>(i));
    auto y1 = conv(x), y2 = conv(x);
    CHECK((y1.values() == y2.values()).all());
  }

  TEST_CASE("uniform initialization bound") {
    Rng rng(15);
    auto conv = Conv2d<float>::make(4, 8, 3, rng);
    const double bound = std::sqrt(1.0 / 36.0);
    CHECK(conv.weight.values().abs().maxCoeff() <= bound);
    CHECK(conv.bias.values().abs().maxCoeff() == 0.0f);
  }
}
