#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "lsfd/autodiff.hpp"
#include "oracles.hpp"

using namespace lsfd;

TEST_SUITE_BEGIN("tensor");

TEST_CASE("conv2d: identity kernel reproduces the input") {
  Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  Tensor w({1, 1, 3, 3}, {0, 0, 0, 0, 1, 0, 0, 0, 0});
  Tensor b = Tensor({1, 1, 1, 1});
  Tensor y = conv2d(x, w, b, 1);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] == x.data()[i]);
  }
}

TEST_CASE("conv2d: 1x1 kernel acts as affine scaling") {
  Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  Tensor w({1, 1, 1, 1}, {2});
  Tensor b({1, 1, 1, 1}, {1});
  Tensor y = conv2d(x, w, b, 0);
  CHECK(y.data()[0] == 3);
  CHECK(y.data()[1] == 5);
  CHECK(y.data()[2] == 7);
  CHECK(y.data()[3] == 9);
}

TEST_CASE("conv2d: matches the direct convolution reference") {
  Rng rng(42);
  Tensor x = random_uniform({2, 3, 5, 5}, rng, -1, 1);
  Tensor w = random_uniform({4, 3, 3, 3}, rng, -1, 1);
  Tensor b = random_uniform({1, 4, 1, 1}, rng, -1, 1);
  Tensor got = conv2d(x, w, b, 1);
  Tensor want = oracle::conv2d_direct(x, w, b, 1);
  for (int64_t i = 0; i < got.numel(); ++i) {
    CHECK(std::fabs(got.data()[i] - want.data()[i]) <= 1e-12);
  }
}

TEST_CASE("conv2d: channel mismatch raises") {
  Tensor x({1, 2, 4, 4});
  Tensor w({1, 3, 3, 3});
  Tensor b({1, 1, 1, 1});
  CHECK_THROWS_AS(conv2d(x, w, b, 1), ShapeError);
}

TEST_CASE("leaky_relu: definition and relu case") {
  Tensor x({1, 1, 1, 3}, {-10, 0, 10});
  Tensor y = leaky_relu(x, 0.1);
  CHECK(y.data()[0] == doctest::Approx(-1.0));
  CHECK(y.data()[1] == 0.0);
  CHECK(y.data()[2] == 10.0);

  Tensor x2({1, 1, 1, 2}, {-3, 5});
  Tensor y2 = leaky_relu(x2, 0.0);
  CHECK(y2.data()[0] == 0.0);
  CHECK(y2.data()[1] == 5.0);
}

TEST_CASE("pointwise: elementwise semantics") {
  Tensor x({1, 1, 1, 3}, {1, 2, 3});
  Tensor y({1, 1, 1, 3}, {4, 5, 6});
  Tensor m = mul(x, y);
  CHECK(m.data()[0] == 4);
  CHECK(m.data()[1] == 10);
  CHECK(m.data()[2] == 18);

  Tensor z = sub(x, x);
  for (int64_t i = 0; i < z.numel(); ++i) CHECK(z.data()[i] == 0.0);

  Tensor bad({1, 1, 3, 1});
  CHECK_THROWS_AS(add(x, bad), ShapeError);
}

TEST_CASE("pointwise mul: gradient w.r.t. x equals y") {
  Rng rng(7);
  Tensor x = random_signed({1, 2, 3, 3}, rng);
  Tensor y = random_signed({1, 2, 3, 3}, rng);
  Tape tape;
  Tensor xt = tape.leaf(x, true);
  Tensor loss = reduce_sum(mul(xt, y));
  tape.backward(loss);
  Tensor g = tape.grad(xt);
  for (int64_t i = 0; i < g.numel(); ++i) {
    CHECK(g.data()[i] == doctest::Approx(y.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("avg_pool: arithmetic mean and identity") {
  Tensor x({1, 1, 2, 2}, {1, 3, 5, 7});
  Tensor y = avg_pool(x, 2);
  CHECK(y.numel() == 1);
  CHECK(y.data()[0] == 4.0);

  Tensor same = avg_pool(x, 1);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(same.data()[i] == x.data()[i]);

  CHECK_THROWS_AS(avg_pool(Tensor({1, 1, 3, 3}), 2), ShapeError);
}

TEST_CASE("avg_pool: preserves the global mean") {
  Rng rng(3);
  Tensor x = random_uniform({1, 2, 8, 8}, rng, -2, 2);
  Tensor y = avg_pool(x, 4);
  const double mx = reduce(x, Reduce::Mean).item();
  const double my = reduce(y, Reduce::Mean).item();
  CHECK(std::fabs(mx - my) <= 1e-12);
}

TEST_CASE("broadcast_channel: copies and identity") {
  Tensor x({1, 1, 1, 1}, {2});
  Tensor y = broadcast_channel(x, 3);
  CHECK(y.shape() == Shape{1, 3, 1, 1});
  for (int64_t i = 0; i < 3; ++i) CHECK(y.data()[i] == 2.0);

  Tensor same = broadcast_channel(x, 1);
  CHECK(same.data()[0] == 2.0);

  CHECK_THROWS_AS(broadcast_channel(Tensor({1, 2, 1, 1}), 3), ShapeError);
}

TEST_CASE("pixel_shuffle: shape law, identity, permutation round-trip") {
  Rng rng(5);
  Tensor x = random_uniform({1, 4, 2, 2}, rng, -1, 1);
  Tensor y = pixel_shuffle(x, 2);
  CHECK(y.shape() == Shape{1, 1, 4, 4});

  Tensor same = pixel_shuffle(x, 1);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(same.data()[i] == x.data()[i]);

  // Multiset equality: output elements are a permutation of the input's.
  std::vector<double> a(x.data(), x.data() + x.numel());
  std::vector<double> b(y.data(), y.data() + y.numel());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  CHECK(a == b);

  // Inverse rearrangement reproduces the input exactly.
  Tensor back(x.shape());
  for (int64_t c = 0; c < 1; ++c)
    for (int64_t yy = 0; yy < 2; ++yy)
      for (int64_t xx = 0; xx < 2; ++xx)
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx)
            back.at(0, (c * 2 + dy) * 2 + dx, yy, xx) =
                y.at(0, c, yy * 2 + dy, xx * 2 + dx);
  for (int64_t i = 0; i < x.numel(); ++i)
    CHECK(back.data()[i] == x.data()[i]);

  CHECK_THROWS_AS(pixel_shuffle(Tensor({1, 3, 2, 2}), 2), ShapeError);
}

TEST_CASE("l2_normalize: 3-4-5 triangle and unit-norm fixed point") {
  Tensor x({1, 1, 1, 2}, {3, 4});
  Tensor y = l2_normalize(x);
  CHECK(y.data()[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(y.data()[1] == doctest::Approx(0.8).epsilon(1e-12));

  Tensor z = l2_normalize(y);
  CHECK(std::fabs(z.data()[0] - y.data()[0]) <= 1e-12);
  CHECK(std::fabs(z.data()[1] - y.data()[1]) <= 1e-12);

  CHECK_THROWS_AS(l2_normalize(Tensor({1, 1, 2, 2})), DegenerateInputError);
}

TEST_CASE("l2_normalize: per-sample unit norms") {
  Rng rng(9);
  Tensor x = random_uniform({3, 2, 4, 4}, rng, -1, 1);
  Tensor y = l2_normalize(x);
  const int64_t m = 2 * 4 * 4;
  for (int64_t n = 0; n < 3; ++n) {
    double s = 0.0;
    for (int64_t j = 0; j < m; ++j) {
      s += y.data()[n * m + j] * y.data()[n * m + j];
    }
    CHECK(std::sqrt(s) == doctest::Approx(1.0).epsilon(1e-10));
  }
}

TEST_CASE("reduce: l1_mean, channel_sum, sum identity") {
  Tensor x({1, 1, 1, 2}, {-1, 3});
  CHECK(l1_mean(x).item() == 2.0);

  Tensor c({1, 3, 1, 1}, {1, 2, 3});
  Tensor cs = reduce(c, Reduce::ChannelSum);
  CHECK(cs.shape() == Shape{1, 1, 1, 1});
  CHECK(cs.item() == 6.0);
  CHECK_THROWS_AS(reduce(Tensor({1, 2, 1, 1}), Reduce::ChannelSum),
                  ShapeError);

  Rng rng(2);
  Tensor pos = random_uniform({2, 3, 4, 4}, rng, 0.0, 2.0);
  const double s = reduce_sum(pos).item();
  const double lm = l1_mean(pos).item();
  CHECK(s == doctest::Approx(lm * double(pos.numel())).epsilon(1e-12));
}

TEST_CASE("dft2: constant plane concentrates in the DC bin") {
  const double c = 0.7;
  Tensor x = Tensor::full({1, 1, 4, 6}, c);
  auto [re, im] = dft2(x);
  CHECK(re.data()[0] == doctest::Approx(c * 4 * 6).epsilon(1e-12));
  for (int64_t i = 1; i < re.numel(); ++i) {
    CHECK(std::fabs(re.data()[i]) <= 1e-10);
  }
  for (int64_t i = 0; i < im.numel(); ++i) {
    CHECK(std::fabs(im.data()[i]) <= 1e-10);
  }
}

TEST_CASE("dft2: linearity") {
  Rng rng(10);
  Tensor x = random_uniform({1, 1, 8, 8}, rng, -1, 1);
  Tensor y = random_uniform({1, 1, 8, 8}, rng, -1, 1);
  auto [rx, ix] = dft2(x);
  auto [ry, iy] = dft2(y);
  auto [rs, is] = dft2(add(x, y));
  for (int64_t i = 0; i < rs.numel(); ++i) {
    CHECK(std::fabs(rs.data()[i] - rx.data()[i] - ry.data()[i]) <= 1e-10);
    CHECK(std::fabs(is.data()[i] - ix.data()[i] - iy.data()[i]) <= 1e-10);
  }
}

TEST_CASE("dft2: matches the naive double-sum reference") {
  Rng rng(11);
  Tensor x = random_uniform({1, 1, 8, 8}, rng, -1, 1);
  auto [re, im] = dft2(x);
  std::vector<double> f(x.data(), x.data() + x.numel());
  std::vector<double> rre, rim;
  oracle::dft2_direct(f, 8, 8, rre, rim);
  for (int64_t i = 0; i < re.numel(); ++i) {
    CHECK(std::fabs(re.data()[i] - rre[i]) <= 1e-9);
    CHECK(std::fabs(im.data()[i] - rim[i]) <= 1e-9);
  }
}

TEST_CASE("backward: sum seeds ones, l1_mean seeds 1/numel") {
  Rng rng(12);
  Tensor x = random_uniform({1, 2, 3, 3}, rng, 0.5, 2.0);
  {
    Tape tape;
    Tensor xt = tape.leaf(x, true);
    tape.backward(reduce_sum(xt));
    Tensor g = tape.grad(xt);
    for (int64_t i = 0; i < g.numel(); ++i) CHECK(g.data()[i] == 1.0);
  }
  {
    Tape tape;
    Tensor xt = tape.leaf(x, true);
    tape.backward(l1_mean(xt));
    Tensor g = tape.grad(xt);
    for (int64_t i = 0; i < g.numel(); ++i) {
      CHECK(g.data()[i] == doctest::Approx(1.0 / 18.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("backward: rejects non-scalar loss") {
  Tape tape;
  Tensor xt = tape.leaf(Tensor::full({1, 1, 2, 2}, 1.0), true);
  CHECK_THROWS_AS(tape.backward(xt), ContractError);
}

TEST_CASE("backward: parameters off the loss path get zero grads") {
  Parameter used(Tensor::full({1, 1, 1, 1}, 2.0), "used");
  Parameter unused(Tensor::full({1, 1, 1, 1}, 3.0), "unused");
  Tape tape;
  Tensor a = tape.leaf(used);
  tape.leaf(unused);
  tape.backward(reduce_sum(a));
  CHECK(used.grad.data()[0] == 1.0);
  CHECK(unused.grad.data()[0] == 0.0);
}

TEST_CASE("backward: composite chain matches finite differences") {
  Rng rng(13);
  Tensor x = random_signed({1, 2, 6, 6}, rng);
  Tensor w = random_signed({3, 2, 3, 3}, rng, 0.1, 0.5);
  Tensor b = random_signed({1, 3, 1, 1}, rng);
  const double err = grad_check(
      [&](const Tensor& t) {
        return l1_mean(l2_normalize(leaky_relu(conv2d(t, w, b, 1), 0.1)));
      },
      x);
  CHECK(err < 1e-5);
}

TEST_CASE("grad_check: trivial cases") {
  Rng rng(14);
  Tensor x = random_signed({1, 2, 4, 4}, rng);
  // sum is linear, so a wide step keeps the difference rounding-free
  CHECK(grad_check([](const Tensor& t) { return reduce_sum(t); }, x, 1e-2) <
        1e-10);
  CHECK(grad_check([](const Tensor& t) { return l1_mean(t); }, x) < 1e-6);
}

TEST_CASE("gradcheck suite: every op under 1e-5") {
  for (const auto& [name, err] : gradcheck_suite()) {
    INFO(name);
    CHECK(err < 1e-5);
  }
}

TEST_CASE("forward determinism: identical inputs, identical bits") {
  Rng rng(15);
  Tensor x = random_uniform({2, 3, 6, 6}, rng, -1, 1);
  Tensor w = random_uniform({4, 3, 3, 3}, rng, -1, 1);
  Tensor b = random_uniform({1, 4, 1, 1}, rng, -1, 1);
  Tensor y1 = l2_normalize(leaky_relu(conv2d(x, w, b, 1), 0.1));
  Tensor y2 = l2_normalize(leaky_relu(conv2d(x, w, b, 1), 0.1));
  for (int64_t i = 0; i < y1.numel(); ++i) {
    CHECK(y1.data()[i] == y2.data()[i]);
  }
}

TEST_CASE("tensors from different tapes cannot mix") {
  Tape t1, t2;
  Tensor a = t1.leaf(Tensor::full({1, 1, 1, 1}, 1.0), true);
  Tensor b = t2.leaf(Tensor::full({1, 1, 1, 1}, 2.0), true);
  CHECK_THROWS_AS(add(a, b), ContractError);
}

TEST_SUITE_END();
