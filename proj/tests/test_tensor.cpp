// tensor-core: conv/linear/relu/maxpool/softmax forward semantics against
// independent oracles, and every backward pass against central finite
// differences.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <functional>
#include <vector>

#include "prunix/nn.hpp"
#include "prunix/rng.hpp"
#include "prunix/tensor.hpp"

using namespace prunix;

namespace {

Tensor random_tensor(Rng& rng, std::vector<std::size_t> shape, float lo = -1.0f,
                     float hi = 1.0f) {
  Tensor t(std::move(shape));
  for (float& x : t.data) x = rng.uniform_f(lo, hi);
  return t;
}

// Independent brute-force cross-correlation: nested loops, no im2col.
Tensor conv_oracle(const Tensor& input, const Tensor& kernel,
                   std::size_t stride, std::size_t pad) {
  const std::size_t c = input.dim(0), h = input.dim(1), w = input.dim(2);
  const std::size_t n = kernel.dim(0), k = kernel.dim(2);
  const std::size_t oh = (h - k + 2 * pad) / stride + 1;
  const std::size_t ow = (w - k + 2 * pad) / stride + 1;
  Tensor out({n, oh, ow});
  for (std::size_t f = 0; f < n; ++f)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        double acc = 0.0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t u = 0; u < k; ++u)
            for (std::size_t v = 0; v < k; ++v) {
              const std::ptrdiff_t y =
                  static_cast<std::ptrdiff_t>(oy * stride + u) -
                  static_cast<std::ptrdiff_t>(pad);
              const std::ptrdiff_t x =
                  static_cast<std::ptrdiff_t>(ox * stride + v) -
                  static_cast<std::ptrdiff_t>(pad);
              if (y < 0 || y >= static_cast<std::ptrdiff_t>(h) || x < 0 ||
                  x >= static_cast<std::ptrdiff_t>(w))
                continue;
              acc += static_cast<double>(
                         input.data[(ch * h + y) * w + x]) *
                     kernel.data[((f * c + ch) * k + u) * k + v];
            }
        out.data[(f * oh + oy) * ow + ox] = static_cast<float>(acc);
      }
  return out;
}

// Central finite differences of a scalar-valued functional against the
// analytic gradient, with a floor that absorbs float32 evaluation noise.
void check_gradient(std::vector<float>& param,
                    const std::function<double()>& loss,
                    const std::vector<float>& analytic, double eps,
                    double tol = 1e-3) {
  REQUIRE(param.size() == analytic.size());
  double gmax = 0.0;
  for (const float g : analytic) gmax = std::max(gmax, double(std::fabs(g)));
  const double floor = std::max(0.02 * gmax, 1e-3);
  for (std::size_t i = 0; i < param.size(); ++i) {
    const float save = param[i];
    param[i] = save + static_cast<float>(eps);
    const double up = loss();
    param[i] = save - static_cast<float>(eps);
    const double down = loss();
    param[i] = save;
    const double fd = (up - down) / (2.0 * eps);
    const double rel = std::fabs(fd - analytic[i]) /
                       std::max({std::fabs(fd), double(std::fabs(analytic[i])),
                                 floor});
    CAPTURE(i);
    CAPTURE(fd);
    CAPTURE(analytic[i]);
    CHECK(rel < tol);
  }
}

double weighted_sum(const Tensor& t, const std::vector<float>& coeff) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i)
    s += static_cast<double>(t.data[i]) * coeff[i];
  return s;
}

}  // namespace

TEST_CASE("conv2d pinned examples") {
  // 1x3x3 ones * 1x1x2x2 ones -> 2x2 of 4
  Tensor x = Tensor::full({1, 3, 3}, 1.0f);
  Tensor k = Tensor::full({1, 1, 2, 2}, 1.0f);
  Tensor y = nn::conv2d(x, k, 1, 0);
  REQUIRE(y.shape == std::vector<std::size_t>{1, 2, 2});
  for (const float v : y.data) CHECK(v == 4.0f);

  // identity 1x1 kernel
  Rng rng(11);
  Tensor xr = random_tensor(rng, {1, 4, 5});
  Tensor ik = Tensor::full({1, 1, 1, 1}, 1.0f);
  Tensor yr = nn::conv2d(xr, ik, 1, 0);
  CHECK(yr.data == xr.data);
}

TEST_CASE("conv2d error cases") {
  Tensor x({2, 4, 4});
  CHECK_THROWS_AS(nn::conv2d(x, Tensor({1, 3, 2, 2}), 1, 0),
                  std::invalid_argument);  // channel mismatch
  CHECK_THROWS_AS(nn::conv2d(x, Tensor({1, 2, 2, 2}), 2, 0),
                  std::invalid_argument);  // (4-2)/2+1 ok; width 4 same; pick non-exact
  // (4 - 3 + 0) = 1, stride 2 -> not integral
  CHECK_THROWS_AS(nn::conv2d(x, Tensor({1, 2, 3, 3}), 2, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(nn::conv2d(x, Tensor({1, 2, 5, 5}), 1, 0),
                  std::invalid_argument);  // kernel larger than input
}

TEST_CASE("conv2d matches the brute-force oracle on 50 random shapes") {
  Rng rng(123);
  for (int iter = 0; iter < 50; ++iter) {
    const std::size_t c = 1 + rng.uniform_int(3);
    const std::size_t n = 1 + rng.uniform_int(3);
    const std::size_t k = 1 + rng.uniform_int(3);
    const std::size_t pad = rng.uniform_int(2);
    std::size_t h = k + rng.uniform_int(5);
    std::size_t w = k + rng.uniform_int(5);
    std::size_t stride = 1 + rng.uniform_int(2);
    // force exact output dims
    h += (stride - (h - k + 2 * pad) % stride) % stride;
    w += (stride - (w - k + 2 * pad) % stride) % stride;

    Tensor x = random_tensor(rng, {c, h, w});
    Tensor kk = random_tensor(rng, {n, c, k, k});
    Tensor got = nn::conv2d(x, kk, stride, pad);
    Tensor want = conv_oracle(x, kk, stride, pad);
    REQUIRE(got.shape == want.shape);
    for (std::size_t i = 0; i < got.numel(); ++i)
      CHECK(std::fabs(got.data[i] - want.data[i]) <= 1e-6);
  }
}

TEST_CASE("conv2d stride-2 spot check") {
  // (4-2)/2+1 = 2 outputs per axis; windows must not overlap
  Tensor x = Tensor::from({1, 4, 4}, {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12,
                                      13, 14, 15, 16});
  Tensor k = Tensor::full({1, 1, 2, 2}, 1.0f);
  Tensor y = nn::conv2d(x, k, 2, 0);
  CHECK(y.data == std::vector<float>{14, 22, 46, 54});
}

TEST_CASE("linear pinned examples") {
  Tensor in = Tensor::from({2}, {1, 2});
  Tensor id = Tensor::from({2, 2}, {1, 0, 0, 1});
  Tensor b0 = Tensor::zeros({2});
  CHECK(nn::linear(in, id, b0).data == std::vector<float>{1, 2});

  Tensor w = Tensor::from({2, 2}, {1, 0.5f, 0, 0.25f});
  CHECK(nn::linear(in, w, b0).data == std::vector<float>{2.0f, 0.5f});

  Tensor zero = Tensor::zeros({2});
  Tensor b = Tensor::from({2}, {0.3f, -0.7f});
  CHECK(nn::linear(zero, w, b).data == std::vector<float>{0.3f, -0.7f});

  CHECK_THROWS_AS(nn::linear(Tensor({3}), w, b), std::invalid_argument);
}

TEST_CASE("relu, maxpool, cross-entropy pinned examples") {
  Tensor x = Tensor::from({3}, {-1, 0, 2});
  CHECK(nn::relu(x).data == std::vector<float>{0, 0, 2});

  Tensor p = Tensor::from({1, 2, 2}, {1, 2, 3, 4});
  Tensor pooled = nn::maxpool2d(p, 2);
  CHECK(pooled.data == std::vector<float>{4});

  Tensor logits = Tensor::zeros({10});
  CHECK(nn::softmax_cross_entropy(logits, 3) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-6));
  CHECK_THROWS_AS(nn::softmax_cross_entropy(logits, 10),
                  std::invalid_argument);
}

TEST_CASE("maxpool ties route the gradient to the first maximal element") {
  Tensor x = Tensor::from({1, 2, 2}, {5, 5, 5, 5});
  Tensor dy = Tensor::from({1, 1, 1}, {1});
  Tensor dx({1, 2, 2});
  nn::maxpool2d_backward(x, dy, 2, dx.data.data());
  CHECK(dx.data == std::vector<float>{1, 0, 0, 0});
}

TEST_CASE("conv2d backward matches finite differences") {
  Rng rng(42);
  Tensor x = random_tensor(rng, {2, 5, 5});
  Tensor k = random_tensor(rng, {2, 2, 3, 3});
  const std::size_t stride = 1, pad = 1;
  Tensor out = nn::conv2d(x, k, stride, pad);
  std::vector<float> coeff(out.numel());
  for (float& cv : coeff) cv = rng.uniform_f(-1.0f, 1.0f);

  Tensor dout = Tensor::from(out.shape, coeff);
  std::vector<float> dx(x.numel(), 0.0f), dk(k.numel(), 0.0f);
  nn::conv2d_backward(x, k, dout, stride, pad, dx.data(), dk.data());

  const auto loss = [&] {
    return weighted_sum(nn::conv2d(x, k, stride, pad), coeff);
  };
  check_gradient(x.data, loss, dx, 1e-2);
  check_gradient(k.data, loss, dk, 1e-2);
}

TEST_CASE("linear backward matches finite differences") {
  Rng rng(43);
  Tensor x = random_tensor(rng, {6});
  Tensor w = random_tensor(rng, {4, 6});
  Tensor b = random_tensor(rng, {4});
  std::vector<float> coeff(4);
  for (float& cv : coeff) cv = rng.uniform_f(-1.0f, 1.0f);
  Tensor dout = Tensor::from({4}, coeff);

  std::vector<float> dx(6, 0.0f), dw(24, 0.0f), db(4, 0.0f);
  nn::linear_backward(x, w, dout, dx.data(), dw.data(), db.data());
  const auto loss = [&] { return weighted_sum(nn::linear(x, w, b), coeff); };
  check_gradient(x.data, loss, dx, 1e-2);
  check_gradient(w.data, loss, dw, 1e-2);
  check_gradient(b.data, loss, db, 1e-2);
}

TEST_CASE("relu backward matches finite differences away from the kink") {
  Rng rng(44);
  Tensor x({20});
  for (float& v : x.data) {
    do {
      v = rng.uniform_f(-1.0f, 1.0f);
    } while (std::fabs(v) < 0.05f);  // keep both FD probes on one side
  }
  std::vector<float> coeff(20);
  for (float& cv : coeff) cv = rng.uniform_f(-1.0f, 1.0f);
  Tensor dy = Tensor::from({20}, coeff);
  std::vector<float> dx(20, 0.0f);
  nn::relu_backward(x, dy, dx.data());
  const auto loss = [&] { return weighted_sum(nn::relu(x), coeff); };
  check_gradient(x.data, loss, dx, 1e-2);
}

TEST_CASE("maxpool backward matches finite differences away from ties") {
  Rng rng(45);
  Tensor x({1, 4, 4});
  // distinct values with gaps > 2*eps so the argmax never flips
  std::vector<std::size_t> order(16);
  for (std::size_t i = 0; i < 16; ++i) order[i] = i;
  rng.shuffle(order);
  for (std::size_t i = 0; i < 16; ++i)
    x.data[order[i]] = static_cast<float>(i) * 0.1f;

  std::vector<float> coeff(4);
  for (float& cv : coeff) cv = rng.uniform_f(-1.0f, 1.0f);
  Tensor dy = Tensor::from({1, 2, 2}, coeff);
  std::vector<float> dx(16, 0.0f);
  nn::maxpool2d_backward(x, dy, 2, dx.data());
  const auto loss = [&] { return weighted_sum(nn::maxpool2d(x, 2), coeff); };
  check_gradient(x.data, loss, dx, 1e-2);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences") {
  Rng rng(46);
  Tensor logits = random_tensor(rng, {10}, -2.0f, 2.0f);
  Tensor dlogits;
  nn::softmax_cross_entropy(logits, 4, &dlogits);
  const auto loss = [&] {
    return static_cast<double>(nn::softmax_cross_entropy(logits, 4));
  };
  check_gradient(logits.data, loss, dlogits.data, 1e-3);
}

TEST_CASE("chain rule sanity: d(w*w)/dw = 2w") {
  // f(w) = linear(x=w, W=[w]) = w$^2$; dL/dW + dL/dx evaluated at x=w gives 6.
  Tensor x = Tensor::from({1}, {3.0f});
  Tensor w = Tensor::from({1, 1}, {3.0f});
  Tensor b = Tensor::zeros({1});
  Tensor dout = Tensor::from({1}, {1.0f});
  std::vector<float> dx(1, 0.0f), dw(1, 0.0f);
  nn::linear_backward(x, w, dout, dx.data(), dw.data(), nullptr);
  CHECK(dx[0] + dw[0] == 6.0f);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  Rng rng(47);
  Tensor x = random_tensor(rng, {2, 4, 4});
  Tensor k = random_tensor(rng, {3, 2, 3, 3});
  Tensor dout = Tensor::zeros({3, 4, 4});
  std::vector<float> dx(x.numel(), 0.0f), dk(k.numel(), 0.0f);
  nn::conv2d_backward(x, k, dout, 1, 1, dx.data(), dk.data());
  for (const float g : dx) CHECK(g == 0.0f);
  for (const float g : dk) CHECK(g == 0.0f);
}

TEST_CASE("sgd_step semantics") {
  Tensor w = Tensor::from({1}, {1.0f});
  w.ensure_grad();
  w.grad[0] = 2.0f;
  nn::sgd_step(w, 0.1f);
  CHECK(w.data[0] == doctest::Approx(0.8f));
  CHECK(w.grad[0] == 0.0f);  // grads zeroed

  // zero grad -> unchanged
  nn::sgd_step(w, 0.1f);
  CHECK(w.data[0] == doctest::Approx(0.8f));

  CHECK_THROWS_AS(nn::sgd_step(w, 0.0f), std::invalid_argument);
}

TEST_CASE("two sgd steps equal one step with summed updates") {
  Rng rng(48);
  Tensor a = random_tensor(rng, {16});
  Tensor b = a;
  Tensor g1 = random_tensor(rng, {16});
  Tensor g2 = random_tensor(rng, {16});
  const float lr = 0.05f;

  a.ensure_grad();
  a.grad = g1.data;
  nn::sgd_step(a, lr);
  a.grad = g2.data;
  nn::sgd_step(a, lr);

  // one step with summed update, applied in the same order
  b.ensure_grad();
  for (std::size_t i = 0; i < 16; ++i) {
    b.data[i] = (b.data[i] - lr * g1.data[i]) - lr * g2.data[i];
  }
  CHECK(a.data == b.data);
}

TEST_CASE("operations are deterministic") {
  Rng rng(49);
  Tensor x = random_tensor(rng, {3, 6, 6});
  Tensor k = random_tensor(rng, {4, 3, 3, 3});
  Tensor y1 = nn::conv2d(x, k, 1, 1);
  Tensor y2 = nn::conv2d(x, k, 1, 1);
  CHECK(std::memcmp(y1.data.data(), y2.data.data(),
                    y1.numel() * sizeof(float)) == 0);
}
