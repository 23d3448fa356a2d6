#include <cmath>

#include "doctest.h"
#include "lsfd/model.hpp"
#include "oracles.hpp"

using namespace lsfd;

namespace {

ModelConfig rcan_cfg(int channels, int blocks, int groups, int scale,
                     int reduction = 16, uint64_t seed = 1) {
  ModelConfig c;
  c.variant = Variant::RcanLike;
  c.channels = channels;
  c.n_blocks = blocks;
  c.n_groups = groups;
  c.scale = scale;
  c.reduction = reduction;
  c.seed = seed;
  return c;
}

ModelConfig edsr_cfg(int channels, int blocks, int scale, uint64_t seed = 1) {
  ModelConfig c;
  c.variant = Variant::EdsrLike;
  c.channels = channels;
  c.n_blocks = blocks;
  c.scale = scale;
  c.seed = seed;
  return c;
}

bool within_pct(int64_t got, double want, double pct) {
  return std::fabs(double(got) - want) / want <= pct / 100.0;
}

}  // namespace

TEST_SUITE_BEGIN("model");

TEST_CASE("parameter counts match the reference configurations") {
  // RCAN-style teacher/student at x4, channel attention reduction 16.
  CHECK(within_pct(Model(rcan_cfg(64, 20, 10, 4)).param_count(), 15.59e6, 5));
  CHECK(within_pct(Model(rcan_cfg(64, 6, 10, 4)).param_count(), 5.17e6, 5));
  // EDSR-style teacher/student at x4.
  CHECK(within_pct(Model(edsr_cfg(256, 32, 4)).param_count(), 43e6, 5));
  CHECK(within_pct(Model(edsr_cfg(64, 16, 4)).param_count(), 1.5e6, 5));
}

TEST_CASE("toy parameter count matches the layer-by-layer sum") {
  const int C = 8, B = 2, G = 2, r = 4, S = 2;
  Model m(rcan_cfg(C, B, G, S, r));
  auto conv_p = [](int cout, int cin, int k) {
    return cout * cin * k * k + cout;
  };
  const int cr = C / r;
  const int rcab = 2 * conv_p(C, C, 3) + conv_p(cr, C, 1) + conv_p(C, cr, 1);
  const int group = B * rcab + conv_p(C, C, 3);
  const int expect = conv_p(C, 3, 3) + G * group + conv_p(C, C, 3) +
                     conv_p(S * S * C, C, 3) + conv_p(3, C, 3);
  CHECK(m.param_count() == expect);
}

TEST_CASE("forward shape law and tap shapes") {
  Model m(rcan_cfg(8, 2, 2, 2, 4));
  Tensor x = Tensor::full({1, 3, 8, 8}, 0.25);
  auto out = m.forward(nullptr, x);
  CHECK(out.sr.shape() == Shape{1, 3, 16, 16});
  CHECK(out.taps.size() == m.tap_points().size());
  CHECK(out.taps.size() == 2);
  for (const Tensor& t : out.taps) {
    CHECK(t.shape() == Shape{1, 8, 8, 8});
  }

  Model m3(rcan_cfg(4, 1, 1, 3, 4));
  CHECK(m3.forward(nullptr, Tensor::full({1, 3, 4, 4}, 0.1)).sr.shape() ==
        Shape{1, 3, 12, 12});
  Model m4(rcan_cfg(4, 1, 1, 4, 4));
  CHECK(m4.forward(nullptr, Tensor::full({1, 3, 4, 4}, 0.1)).sr.shape() ==
        Shape{1, 3, 16, 16});

  CHECK_THROWS_AS(m.forward(nullptr, Tensor({1, 1, 8, 8})), ShapeError);
}

TEST_CASE("edsr taps are evenly spaced block outputs") {
  Model m(edsr_cfg(4, 8, 2));
  const auto& taps = m.tap_points();
  REQUIRE(taps.size() == 4);
  CHECK(taps[0] == "block_out/2");
  CHECK(taps[1] == "block_out/4");
  CHECK(taps[2] == "block_out/6");
  CHECK(taps[3] == "block_out/8");
}

TEST_CASE("forward determinism: same seed, same input, same bits") {
  Rng rng(77);
  Tensor x = random_uniform({1, 3, 6, 6}, rng, -0.5, 0.5);
  Model a(rcan_cfg(8, 1, 1, 2, 4, 9));
  Model b(rcan_cfg(8, 1, 1, 2, 4, 9));
  Tensor ya = a.forward(nullptr, x).sr;
  Tensor yb = b.forward(nullptr, x).sr;
  for (int64_t i = 0; i < ya.numel(); ++i) {
    CHECK(ya.data()[i] == yb.data()[i]);
  }
}

TEST_CASE("zeroed tail conv leaves only the long-skip path") {
  Rng rng(5);
  Tensor x = random_uniform({1, 3, 6, 6}, rng, -0.5, 0.5);
  Model a(rcan_cfg(8, 2, 2, 2, 4, 3));
  Model b(rcan_cfg(8, 2, 2, 2, 4, 3));
  // Scramble every trunk-group parameter of b, then cut the trunk in both.
  Rng scramble(999);
  for (Parameter& p : b.parameters()) {
    if (p.name.rfind("group", 0) == 0) {
      for (int64_t i = 0; i < p.value.numel(); ++i) {
        p.value.data()[i] = scramble.uniform(-0.3, 0.3);
      }
    }
  }
  for (Model* m : {&a, &b}) {
    for (const char* n : {"tail.weight", "tail.bias"}) {
      Parameter* p = m->find(n);
      REQUIRE(p != nullptr);
      std::fill(p->value.data(), p->value.data() + p->value.numel(), 0.0);
    }
  }
  Tensor ya = a.forward(nullptr, x).sr;
  Tensor yb = b.forward(nullptr, x).sr;
  for (int64_t i = 0; i < ya.numel(); ++i) {
    CHECK(ya.data()[i] == yb.data()[i]);
  }
}

TEST_CASE("channel_attention: forced-open gate is the identity") {
  Rng rng(8);
  Tensor x = random_uniform({2, 8, 4, 4}, rng, -1, 1);
  Tensor w1 = Tensor({2, 8, 1, 1});
  Tensor b1 = Tensor({1, 2, 1, 1});
  Tensor w2 = Tensor({8, 2, 1, 1});
  Tensor b2 = Tensor::full({1, 8, 1, 1}, 40.0);  // sigmoid(40) ~ 1
  Tensor y = channel_attention(x, w1, b1, w2, b2);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(x.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("channel_attention: gate keeps magnitudes bounded by the input") {
  Rng rng(9);
  Tensor x = random_uniform({1, 4, 5, 5}, rng, 0.0, 2.0);
  Tensor w1 = random_uniform({1, 4, 1, 1}, rng, -0.5, 0.5);
  Tensor b1 = random_uniform({1, 1, 1, 1}, rng, -0.5, 0.5);
  Tensor w2 = random_uniform({4, 1, 1, 1}, rng, -0.5, 0.5);
  Tensor b2 = random_uniform({1, 4, 1, 1}, rng, -0.5, 0.5);
  Tensor y = channel_attention(x, w1, b1, w2, b2);
  for (int64_t i = 0; i < x.numel(); ++i) {
    CHECK(y.data()[i] >= 0.0);
    CHECK(y.data()[i] <= x.data()[i]);
  }
}

TEST_CASE("channel_attention: gradient check through the whole gate") {
  Rng rng(10);
  Tensor x = random_signed({1, 4, 4, 4}, rng);
  Tensor w1 = random_signed({2, 4, 1, 1}, rng, 0.1, 0.4);
  Tensor b1 = random_signed({1, 2, 1, 1}, rng, 0.05, 0.2);
  Tensor w2 = random_signed({4, 2, 1, 1}, rng, 0.1, 0.4);
  Tensor b2 = random_signed({1, 4, 1, 1}, rng, 0.05, 0.2);
  auto sq_mean = [](const Tensor& t) {
    return reduce(mul(t, t), Reduce::Mean);
  };
  CHECK(grad_check([&](const Tensor& t) {
          return sq_mean(channel_attention(t, w1, b1, w2, b2));
        }, x) < 1e-5);
  CHECK(grad_check([&](const Tensor& t) {
          return sq_mean(channel_attention(x, t, b1, w2, b2));
        }, w1) < 1e-5);
}

TEST_CASE("init_params: seed-determined, seed-sensitive, right spread") {
  Model a(rcan_cfg(16, 1, 1, 2, 4, 11));
  Model b(rcan_cfg(16, 1, 1, 2, 4, 11));
  Model c(rcan_cfg(16, 1, 1, 2, 4, 12));
  auto ia = a.parameters().begin();
  auto ib = b.parameters().begin();
  auto ic = c.parameters().begin();
  bool any_diff_c = false;
  for (; ia != a.parameters().end(); ++ia, ++ib, ++ic) {
    for (int64_t i = 0; i < ia->value.numel(); ++i) {
      CHECK(ia->value.data()[i] == ib->value.data()[i]);
      if (ia->value.data()[i] != ic->value.data()[i]) any_diff_c = true;
    }
  }
  CHECK(any_diff_c);

  // uniform(-b, b) has std b/sqrt(3); check a large conv layer.
  Model big(rcan_cfg(64, 1, 1, 2, 16, 13));
  Parameter* w = big.find("group1.block1.conv1.weight");
  REQUIRE(w != nullptr);
  const double bound = std::sqrt(1.0 / (64.0 * 9.0));
  double mean = 0.0;
  for (int64_t i = 0; i < w->value.numel(); ++i) mean += w->value.data()[i];
  mean /= double(w->value.numel());
  double var = 0.0;
  for (int64_t i = 0; i < w->value.numel(); ++i) {
    const double d = w->value.data()[i] - mean;
    var += d * d;
  }
  var /= double(w->value.numel());
  const double want = bound / std::sqrt(3.0);
  CHECK(std::fabs(std::sqrt(var) - want) / want < 0.2);

  // Biases start at zero.
  Parameter* bias = big.find("head.bias");
  REQUIRE(bias != nullptr);
  for (int64_t i = 0; i < bias->value.numel(); ++i) {
    CHECK(bias->value.data()[i] == 0.0);
  }
}

TEST_CASE("pair_taps: equal group counts give the identity pairing") {
  Model t(rcan_cfg(4, 1, 10, 2, 4));
  Model s(rcan_cfg(4, 1, 10, 2, 4));
  FeatureTapSet set = pair_taps(t, s);
  REQUIRE(set.pairs.size() == 10);
  for (int j = 0; j < 10; ++j) {
    CHECK(set.pairs[j].first == j);
    CHECK(set.pairs[j].second == j);
  }
}

TEST_CASE("pair_taps: proportional mapping 2 taps onto 4") {
  Model t(edsr_cfg(4, 4, 2));
  Model s(edsr_cfg(4, 2, 2));
  FeatureTapSet set = pair_taps(t, s);
  REQUIRE(set.pairs.size() == 2);
  CHECK(set.pairs[0].first == 1);  // student tap 1 -> teacher tap 2
  CHECK(set.pairs[0].second == 0);
  CHECK(set.pairs[1].first == 3);  // student tap 2 -> teacher tap 4
  CHECK(set.pairs[1].second == 1);
}

TEST_CASE("pair_taps: total, deterministic, rejects deeper students") {
  for (int s = 1; s <= 6; ++s) {
    for (int t = s; t <= 8; ++t) {
      Model teacher(rcan_cfg(4, 1, t, 2, 4));
      Model student(rcan_cfg(4, 1, s, 2, 4));
      FeatureTapSet p1 = pair_taps(teacher, student);
      FeatureTapSet p2 = pair_taps(teacher, student);
      REQUIRE(p1.pairs.size() == size_t(s));
      for (int j = 0; j < s; ++j) {
        CHECK(p1.pairs[j].second == j);
        CHECK(p1.pairs[j].first >= 0);
        CHECK(p1.pairs[j].first < t);
        CHECK(p1.pairs[j] == p2.pairs[j]);
        if (j > 0) CHECK(p1.pairs[j].first > p1.pairs[j - 1].first);
      }
    }
  }
  Model teacher(rcan_cfg(4, 1, 2, 2, 4));
  Model student(rcan_cfg(4, 1, 3, 2, 4));
  CHECK_THROWS_AS(pair_taps(teacher, student), ConfigError);
}

TEST_CASE("end-to-end gradient check on a toy model") {
  ModelConfig cfg = rcan_cfg(4, 1, 1, 2, 4, 21);
  Model m(cfg);
  CHECK(m.param_count() < 5000);
  Rng rng(22);
  Tensor x = random_uniform({1, 3, 6, 6}, rng, -0.5, 0.5);

  Tape tape;
  auto out = m.forward(&tape, tape.leaf(x, false));
  Tensor loss = l1_mean(out.sr);
  // Kink guard: the comparison below assumes no output sits on the |.| kink.
  double min_abs = 1e9;
  for (int64_t i = 0; i < out.sr.numel(); ++i) {
    min_abs = std::min(min_abs, std::fabs(out.sr.data()[i]));
  }
  REQUIRE(min_abs > 1e-4);
  tape.backward(loss);

  auto loss_fn = [&]() { return l1_mean(m.forward(nullptr, x).sr).item(); };
  // eps wider than the op-level default: deep parameters have tiny
  // gradients, and difference rounding dominates at 1e-6.
  double worst = 0.0;
  for (Parameter& p : m.parameters()) {
    worst = std::max(worst,
                     oracle::max_rel_err_param(loss_fn, p, p.grad, 1e-4));
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("invalid configs are rejected") {
  CHECK_THROWS_AS(Model(rcan_cfg(8, 2, 2, 5, 4)), ConfigError);   // scale
  CHECK_THROWS_AS(Model(rcan_cfg(8, 0, 2, 2, 4)), ConfigError);   // blocks
  CHECK_THROWS_AS(Model(rcan_cfg(8, 2, 0, 2, 4)), ConfigError);   // groups
  CHECK_THROWS_AS(Model(rcan_cfg(4, 2, 2, 2, 16)), ConfigError);  // reduction
  CHECK_THROWS_AS(Model(rcan_cfg(9, 2, 2, 2, 4)), ConfigError);   // divisibility
}

TEST_SUITE_END();
