#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include "funginet/autograd.hpp"
#include "funginet/layers.hpp"
#include "funginet/rng.hpp"
#include "funginet/tensor_ops.hpp"
#include "oracles.hpp"

using namespace funginet;

namespace {

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1, double hi = 1,
                     DType dt = DType::f32) {
  std::vector<double> v(shape_product(shape));
  for (double& x : v) x = rng.uniform(lo, hi);
  return Tensor::from(v, std::move(shape), dt);
}

}  // namespace

TEST_CASE("conv2d hand dot product on a 2x2 window") {
  Tensor x = Tensor::from({1, 2, 3, 4}, {1, 1, 2, 2});
  ConvParams p;
  p.weights = Tensor::from({1, 0, 0, 1}, {1, 1, 2, 2});
  Tensor y = conv2d(x, p);
  CHECK(y.shape() == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(y.value_at(0) == doctest::Approx(5));
}

TEST_CASE("conv2d 1x1 identity kernel reproduces the input") {
  Rng rng(7);
  Tensor x = random_tensor({2, 1, 3, 3}, rng);
  ConvParams p;
  p.weights = Tensor::from({1}, {1, 1, 1, 1});
  p.bias = Tensor::zeros({1});
  Tensor y = conv2d(x, p);
  REQUIRE(y.shape() == x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y.value_at(i) == doctest::Approx(x.value_at(i)));
}

TEST_CASE("conv2d spatial size formula") {
  CHECK(conv_out_extent(224, 7, 2, 3) == 112);
  CHECK(conv_out_extent(112, 3, 2, 1) == 56);
  CHECK(conv_out_extent(224, 11, 4, 2) == 55);

  Rng rng(3);
  Tensor x = random_tensor({1, 3, 224, 224}, rng);
  ConvParams p;
  p.weights = random_tensor({8, 3, 7, 7}, rng);
  p.stride_h = p.stride_w = 2;
  p.pad_h = p.pad_w = 3;
  Tensor y = conv2d(x, p);
  CHECK(y.shape() == std::vector<std::size_t>{1, 8, 112, 112});
}

TEST_CASE("conv2d errors: channel mismatch and oversized kernel") {
  Tensor x = Tensor::zeros({1, 3, 4, 4});
  ConvParams p;
  p.weights = Tensor::zeros({2, 4, 3, 3});
  CHECK_THROWS_WITH_AS(conv2d(x, p), doctest::Contains("channels"), std::invalid_argument);
  p.weights = Tensor::zeros({2, 3, 6, 6});
  CHECK_THROWS_WITH_AS(conv2d(x, p), doctest::Contains("kernel"), std::invalid_argument);
}

TEST_CASE("conv2d matches the direct 7-loop oracle over a geometry sweep") {
  Rng rng(42);
  for (int stride : {1, 2}) {
    for (int pad : {0, 1}) {
      for (std::size_t kernel : {1u, 2u, 3u}) {
        std::size_t n = 1 + rng.below(2), c = 1 + rng.below(3);
        std::size_t h = kernel + rng.below(6), w = kernel + rng.below(6);
        std::size_t o = 1 + rng.below(3);
        Tensor x = random_tensor({n, c, h, w}, rng);
        ConvParams p;
        p.weights = random_tensor({o, c, kernel, kernel}, rng);
        p.bias = random_tensor({o}, rng);
        p.stride_h = p.stride_w = stride;
        p.pad_h = p.pad_w = pad;
        Tensor got = conv2d(x, p);
        Tensor want = oracles::direct_conv2d(x, p.weights, p.bias, stride, stride, pad, pad);
        REQUIRE(got.shape() == want.shape());
        for (std::size_t i = 0; i < got.size(); ++i) {
          double g = got.value_at(i), ww = want.value_at(i);
          double rel = std::fabs(g - ww) / std::max({std::fabs(g), std::fabs(ww), 1e-5});
          CHECK(rel < 1e-5);
        }
      }
    }
  }
}

TEST_CASE("max pool takes window maxima and the size formula holds") {
  Tensor x = Tensor::from({1, 2, 3, 4}, {1, 1, 2, 2});
  PoolSpec spec{PoolKind::max, 2, 2, 1, 1, 0, 0};
  Tensor y = pool2d(x, spec);
  CHECK(y.shape() == std::vector<std::size_t>{1, 1, 1, 1});
  CHECK(y.value_at(0) == 4);

  Rng rng(11);
  Tensor big = random_tensor({1, 2, 112, 112}, rng);
  PoolSpec p112{PoolKind::max, 3, 3, 2, 2, 1, 1};
  CHECK(pool2d(big, p112).shape() == std::vector<std::size_t>{1, 2, 56, 56});
}

TEST_CASE("constant inputs stay constant under every pooling kind") {
  Tensor x = Tensor::full({1, 1, 6, 6}, 2.5);
  PoolSpec mx{PoolKind::max, 2, 2, 2, 2, 0, 0};
  PoolSpec avg{PoolKind::average, 2, 2, 2, 2, 0, 0};
  PoolSpec glob;
  glob.kind = PoolKind::global_average;
  for (const PoolSpec& spec : {mx, avg, glob}) {
    Tensor y = pool2d(x, spec);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.value_at(i) == doctest::Approx(2.5));
  }
}

TEST_CASE("average pooling divides by the full kernel area including padding") {
  // Single 1x1 input, kernel 2, pad 1: windows hold one real cell + 3 pads.
  Tensor x = Tensor::from({8.0}, {1, 1, 1, 1});
  PoolSpec spec{PoolKind::average, 2, 2, 1, 1, 1, 1};
  Tensor y = pool2d(x, spec);
  CHECK(y.shape() == std::vector<std::size_t>{1, 1, 2, 2});
  for (std::size_t i = 0; i < 4; ++i) CHECK(y.value_at(i) == doctest::Approx(8.0 / 4.0));
}

TEST_CASE("max pool backward deposits gradient only at the argmax, first on ties") {
  // 4x4 inputs pooled by 2x2/2: exactly one grad cell per window.
  Rng rng(13);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({1, 1, 4, 4}, rng, -1, 1, DType::f64);
    x.set_requires_grad(true);
    Tape tape;
    {
      TapeScope scope(tape);
      PoolSpec spec{PoolKind::max, 2, 2, 2, 2, 0, 0};
      Tensor y = pool2d(x, spec);
      backward(sum(y), tape);
    }
    for (std::size_t wi = 0; wi < 2; ++wi) {
      for (std::size_t wj = 0; wj < 2; ++wj) {
        int nonzero = 0;
        double best = -1e300;
        std::size_t best_flat = 0;
        for (std::size_t a = 0; a < 2; ++a) {
          for (std::size_t b = 0; b < 2; ++b) {
            std::size_t flat = (wi * 2 + a) * 4 + (wj * 2 + b);
            if (x.grad_at(flat) != 0.0) ++nonzero;
            if (x.value_at(flat) > best) {
              best = x.value_at(flat);
              best_flat = flat;
            }
          }
        }
        CHECK(nonzero == 1);
        CHECK(x.grad_at(best_flat) == doctest::Approx(1.0));
      }
    }
  }

  // Explicit tie: all-equal window routes to the first cell in row-major order.
  Tensor t = Tensor::full({1, 1, 2, 2}, 3.0, DType::f64);
  t.set_requires_grad(true);
  Tape tape;
  {
    TapeScope scope(tape);
    PoolSpec spec{PoolKind::max, 2, 2, 1, 1, 0, 0};
    backward(sum(pool2d(t, spec)), tape);
  }
  CHECK(t.grad_at(0) == doctest::Approx(1.0));
  CHECK(t.grad_at(1) == 0.0);
  CHECK(t.grad_at(2) == 0.0);
  CHECK(t.grad_at(3) == 0.0);
}

TEST_CASE("train-mode batchnorm standardizes each channel") {
  Rng rng(17);
  Tensor x = random_tensor({4, 3, 5, 5}, rng, -3, 3);
  BatchNormState s;
  s.gamma = Tensor::full({3}, 1.0);
  s.beta = Tensor::zeros({3});
  s.running_mean = Tensor::zeros({3});
  s.running_var = Tensor::full({3}, 1.0);
  Tensor y = batchnorm2d(x, s, Mode::train);

  const std::size_t plane = 25, batch = 4, ch = 3;
  for (std::size_t c = 0; c < ch; ++c) {
    double mean = 0, var = 0;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < plane; ++i) mean += y.value_at((n * ch + c) * plane + i);
    mean /= batch * plane;
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t i = 0; i < plane; ++i) {
        double d = y.value_at((n * ch + c) * plane + i) - mean;
        var += d * d;
      }
    var /= batch * plane;
    CHECK(std::fabs(mean) < 1e-4);
    CHECK(std::fabs(var - 1.0) < 1e-3);
  }
}

TEST_CASE("eval-mode batchnorm with unit running stats is near identity") {
  Rng rng(19);
  Tensor x = random_tensor({2, 2, 3, 3}, rng);
  BatchNormState s;
  s.gamma = Tensor::full({2}, 1.0);
  s.beta = Tensor::zeros({2});
  s.running_mean = Tensor::zeros({2});
  s.running_var = Tensor::full({2}, 1.0);
  s.epsilon = 1e-12;
  Tensor y = batchnorm2d(x, s, Mode::eval);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(std::fabs(y.value_at(i) - x.value_at(i)) < 1e-5);
  }
}

TEST_CASE("train-mode batchnorm maps a constant channel to beta exactly") {
  Tensor x = Tensor::full({2, 1, 3, 3}, 7.25);
  BatchNormState s;
  s.gamma = Tensor::full({1}, 2.0);
  s.beta = Tensor::full({1}, -0.5);
  s.running_mean = Tensor::zeros({1});
  s.running_var = Tensor::full({1}, 1.0);
  Tensor y = batchnorm2d(x, s, Mode::train);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y.value_at(i) == doctest::Approx(-0.5));
}

TEST_CASE("batchnorm updates running statistics with the momentum rule") {
  Tensor x = Tensor::from({0, 2, 0, 2}, {4, 1, 1, 1});  // mean 1, biased var 1
  BatchNormState s;
  s.gamma = Tensor::full({1}, 1.0);
  s.beta = Tensor::zeros({1});
  s.running_mean = Tensor::zeros({1});
  s.running_var = Tensor::full({1}, 1.0);
  s.momentum = 0.1;
  batchnorm2d(x, s, Mode::train);
  CHECK(s.running_mean.value_at(0) == doctest::Approx(0.1 * 1.0));
  CHECK(s.running_var.value_at(0) == doctest::Approx(0.9 * 1.0 + 0.1 * 1.0));
}

TEST_CASE("linear applies x W^T + b") {
  Tensor x = Tensor::from({1, 2}, {1, 2});
  Tensor w = Tensor::from({3, 4}, {1, 2});
  Tensor b = Tensor::from({5}, {1});
  Tensor y = linear(x, w, b);
  CHECK(y.value_at(0) == doctest::Approx(16));

  Tensor eye = Tensor::from({1, 0, 0, 1}, {2, 2});
  Tensor x2 = Tensor::from({7, -2}, {1, 2});
  Tensor y2 = linear(x2, eye, Tensor::zeros({2}));
  CHECK(y2.value_at(0) == doctest::Approx(7));
  CHECK(y2.value_at(1) == doctest::Approx(-2));

  CHECK_THROWS_AS(linear(Tensor::zeros({1, 3}), w, b), std::invalid_argument);
}

TEST_CASE("dropout contracts: rate 0 and eval mode are identities") {
  Rng rng(23);
  Tensor x = random_tensor({2, 5}, rng);
  Rng d1(1);
  Tensor y_eval = dropout(x, DropoutSpec{0.7}, Mode::eval, d1);
  CHECK(y_eval.same_impl(x));
  Rng d2(2);
  Tensor y_zero = dropout(x, DropoutSpec{0.0}, Mode::train, d2);
  CHECK(y_zero.same_impl(x));
  Rng d3(3);
  CHECK_THROWS_AS(dropout(x, DropoutSpec{1.0}, Mode::train, d3), std::invalid_argument);
}

TEST_CASE("dropout preserves the mean through inverted scaling") {
  std::size_t n = 100000;
  Tensor x = Tensor::full({n}, 1.0);
  Rng rng(31);
  Tensor y = dropout(x, DropoutSpec{0.5}, Mode::train, rng);
  double mean = 0;
  for (std::size_t i = 0; i < n; ++i) mean += y.value_at(i);
  mean /= static_cast<double>(n);
  CHECK(std::fabs(mean - 1.0) < 0.02);
}

TEST_CASE("softmax cross entropy on uniform 2-class logits is ln 2") {
  Tensor logits = Tensor::from({0, 0}, {1, 2});
  Tensor loss0 = softmax_cross_entropy(logits, {0});
  Tensor loss1 = softmax_cross_entropy(logits, {1});
  CHECK(loss0.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
  CHECK(loss1.item() == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("softmax cross entropy is stable under extreme logits") {
  Tensor logits = Tensor::from({1000, -1000}, {1, 2}, DType::f64);
  Tensor loss = softmax_cross_entropy(logits, {0});
  CHECK(std::isfinite(loss.item()));
  CHECK(loss.item() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("softmax cross entropy hand value -ln(3/4)") {
  Tensor logits = Tensor::from({0.0, std::log(3.0)}, {1, 2}, DType::f64);
  Tensor loss = softmax_cross_entropy(logits, {1});
  CHECK(loss.item() == doctest::Approx(-std::log(3.0 / 4.0)).epsilon(1e-9));
}

TEST_CASE("softmax cross entropy rejects out-of-range targets") {
  Tensor logits = Tensor::zeros({2, 2});
  CHECK_THROWS_WITH_AS(softmax_cross_entropy(logits, {0, 2}), doctest::Contains("out of range"),
                       std::invalid_argument);
}

TEST_CASE("softmax cross entropy gradient equals (softmax - onehot)/N") {
  Rng rng(37);
  Tensor logits = random_tensor({3, 4}, rng, -2, 2, DType::f64);
  logits.set_requires_grad(true);
  std::vector<int> targets = {1, 3, 0};
  Tape tape;
  {
    TapeScope scope(tape);
    Tensor loss = softmax_cross_entropy(logits, targets);
    backward(loss, tape);
  }
  for (std::size_t i = 0; i < 3; ++i) {
    std::vector<double> p = softmax_row(logits, i);
    for (std::size_t k = 0; k < 4; ++k) {
      double expected = (p[k] - (targets[i] == static_cast<int>(k) ? 1.0 : 0.0)) / 3.0;
      CHECK(std::fabs(logits.grad_at(i * 4 + k) - expected) < 1e-6);
    }
  }
}

TEST_CASE("relu clamps negatives and zero") {
  Tensor x = Tensor::from({-1, 0, 2}, {3});
  Tensor y = relu(x);
  CHECK(y.value_at(0) == 0);
  CHECK(y.value_at(1) == 0);
  CHECK(y.value_at(2) == 2);
}
