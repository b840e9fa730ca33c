#include <cmath>
#include <vector>

#include "doctest.h"
#include "gaitmm/blocks.hpp"
#include "helpers.hpp"
#include "naive.hpp"

using namespace gaitmm;
using testing::random_map;

namespace {

struct ConvStore {
  std::vector<double> kernel, bias;
  int out, in;
  ConvStore(int o, int i, Rng& rng) : kernel(Conv3dWeights::kernel_size(o, i)), bias(o), out(o), in(i) {
    for (double& v : kernel) v = rng.uniform(-0.5, 0.5);
    for (double& v : bias) v = rng.uniform(-0.5, 0.5);
  }
  Conv3dWeights view() const { return {out, in, kernel, bias}; }
  Conv3dGrads grads(std::vector<double>& gk, std::vector<double>& gb) const {
    gk.assign(kernel.size(), 0.0);
    gb.assign(bias.size(), 0.0);
    return {out, in, gk, gb};
  }
};

struct SeparableStore {
  std::vector<double> dw, pw, bias;
  int out, in;
  SeparableStore(int o, int i, Rng& rng) : dw(i * 27), pw(o * i), bias(o), out(o), in(i) {
    for (double& v : dw) v = rng.uniform(-0.5, 0.5);
    for (double& v : pw) v = rng.uniform(-0.5, 0.5);
    for (double& v : bias) v = rng.uniform(-0.5, 0.5);
  }
  DepthwiseSeparable3dWeights view() const { return {out, in, dw, pw, bias}; }
};

double max_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  REQUIRE(a.shape() == b.shape());
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

double dot(const FeatureMap& a, const FeatureMap& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

}  // namespace

TEST_CASE("conv3d matches the seven-loop reference") {
  Rng rng(11);
  for (int trial = 0; trial < 8; ++trial) {
    const int in = 1 + static_cast<int>(rng.index(3)), out = 1 + static_cast<int>(rng.index(4));
    const FeatureMap x = random_map(in, 1 + static_cast<int>(rng.index(5)), 1 + static_cast<int>(rng.index(6)),
                                    1 + static_cast<int>(rng.index(6)), rng);
    ConvStore w(out, in, rng);
    CHECK(max_abs_diff(conv3d_forward(x, w.view()), oracle::conv3d(x, w.view())) < 1e-12);
  }
}

TEST_CASE("conv3d keeps the shape and rejects a channel mismatch") {
  Rng rng(1);
  ConvStore w(3, 2, rng);
  const FeatureMap y = conv3d_forward(random_map(2, 4, 5, 6, rng), w.view());
  CHECK(y.shape() == Shape4{3, 4, 5, 6});
  CHECK(testing::error_kind_of([&] { conv3d_forward(random_map(1, 4, 5, 6, rng), w.view()); }) == ErrorKind::kConfig);
}

TEST_CASE("conv3d backward is the adjoint of the forward pass") {
  Rng rng(5);
  const FeatureMap x = random_map(2, 4, 5, 3, rng);
  ConvStore w(3, 2, rng);
  const FeatureMap dy = random_map(3, 4, 5, 3, rng);
  std::vector<double> gk, gb;
  const FeatureMap dx = conv3d_backward(x, w.view(), dy, w.grads(gk, gb));

  // <dy, conv(x + h*v)> is affine in h with slope <dx, v>.
  const FeatureMap v = random_map(2, 4, 5, 3, rng);
  FeatureMap xp = x;
  for (std::size_t i = 0; i < xp.size(); ++i) xp.values()[i] += v.values()[i];
  const double slope = dot(dy, conv3d_forward(xp, w.view())) - dot(dy, conv3d_forward(x, w.view()));
  CHECK(slope == doctest::Approx(dot(dx, v)).epsilon(1e-10));

  for (std::size_t idx : {std::size_t{0}, std::size_t{17}, gk.size() - 1}) {
    ConvStore plus = w, minus = w;
    plus.kernel[idx] += 1e-6;
    minus.kernel[idx] -= 1e-6;
    const double fd = (dot(dy, conv3d_forward(x, plus.view())) - dot(dy, conv3d_forward(x, minus.view()))) / 2e-6;
    CHECK(gk[idx] == doctest::Approx(fd).epsilon(1e-7));
  }
  double bias_sum = 0.0;
  for (int t = 0; t < 4; ++t)
    for (int h = 0; h < 5; ++h)
      for (int c = 0; c < 3; ++c) bias_sum += dy.at(1, t, h, c);
  CHECK(gb[1] == doctest::Approx(bias_sum));
}

TEST_CASE("depthwise-separable conv matches the reference and its adjoint") {
  Rng rng(21);
  const FeatureMap x = random_map(3, 4, 4, 5, rng);
  SeparableStore w(2, 3, rng);
  CHECK(max_abs_diff(dwconv3d_forward(x, w.view()), oracle::dwconv3d(x, w.view())) < 1e-12);

  const FeatureMap dy = random_map(2, 4, 4, 5, rng);
  std::vector<double> gdw(w.dw.size()), gpw(w.pw.size()), gb(w.bias.size());
  const FeatureMap dx = dwconv3d_backward(x, w.view(), dy, {2, 3, gdw, gpw, gb});
  const FeatureMap v = random_map(3, 4, 4, 5, rng);
  FeatureMap xp = x;
  for (std::size_t i = 0; i < xp.size(); ++i) xp.values()[i] += v.values()[i];
  const double slope = dot(dy, dwconv3d_forward(xp, w.view())) - dot(dy, dwconv3d_forward(x, w.view()));
  CHECK(slope == doctest::Approx(dot(dx, v)).epsilon(1e-10));
  SeparableStore plus = w, minus = w;
  plus.dw[40] += 1e-6;
  minus.dw[40] -= 1e-6;
  CHECK(gdw[40] == doctest::Approx((dot(dy, dwconv3d_forward(x, plus.view())) -
                                    dot(dy, dwconv3d_forward(x, minus.view()))) / 2e-6).epsilon(1e-7));
}

TEST_CASE("pme convolves every part on its own") {
  Rng rng(3);
  const FeatureMap x = random_map(2, 3, 8, 4, rng);
  std::vector<ConvStore> stores;
  PartFilterBank bank;
  for (int j = 0; j < 4; ++j) stores.emplace_back(3, 2, rng);
  for (const auto& s : stores) bank.banks.emplace_back(s.view());
  const FeatureMap y = pme_forward(x, bank);
  CHECK(max_abs_diff(y, oracle::pme(x, bank)) < 1e-12);
  // Part-local padding: part 0 does not see row 2 of the input.
  FeatureMap x2 = x;
  x2.at(0, 1, 2, 1) += 10.0;
  const FeatureMap y2 = pme_forward(x2, bank);
  for (int c = 0; c < 3; ++c)
    for (int t = 0; t < 3; ++t)
      for (int h = 0; h < 2; ++h)
        for (int w = 0; w < 4; ++w) CHECK(y2.at(c, t, h, w) == y.at(c, t, h, w));
}

TEST_CASE("pme with a single part equals bme with the same weights") {
  Rng rng(4);
  const FeatureMap x = random_map(2, 3, 6, 5, rng);
  ConvStore w(3, 2, rng);
  PartFilterBank bank;
  bank.banks.emplace_back(w.view());
  CHECK(max_abs_diff(pme_forward(x, bank), bme_forward(x, w.view())) == 0.0);
}

TEST_CASE("pme rejects a height that does not split into parts") {
  Rng rng(4);
  ConvStore w(1, 1, rng);
  PartFilterBank bank;
  for (int j = 0; j < 3; ++j) bank.banks.emplace_back(w.view());
  CHECK(testing::error_kind_of([&] { pme_forward(random_map(1, 3, 8, 2, rng), bank); }) == ErrorKind::kConfig);
}

TEST_CASE("ffsl sums both paths before the leaky unit") {
  Rng rng(8);
  const FeatureMap x = random_map(2, 3, 4, 3, rng);
  ConvStore body(2, 2, rng), p0(2, 2, rng), p1(2, 2, rng);
  PartFilterBank bank;
  bank.banks = {p0.view(), p1.view()};
  const FeatureMap y = ffsl_forward(x, body.view(), bank, true, 0.01);
  const FeatureMap a = oracle::conv3d(x, body.view()), b = oracle::pme(x, bank);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = a.values()[i] + b.values()[i];
    CHECK(y.values()[i] == doctest::Approx(z > 0 ? z : 0.01 * z).epsilon(1e-12));
  }
  const FeatureMap body_only = ffsl_forward(x, body.view(), bank, false, 0.01);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double z = a.values()[i];
    CHECK(body_only.values()[i] == doctest::Approx(z > 0 ? z : 0.01 * z).epsilon(1e-12));
  }
}

TEST_CASE("lma reduces to strided max and mean pooling") {
  Rng rng(9);
  const FeatureMap x = random_map(2, 9, 3, 2, rng);
  const FeatureMap mx = lma_forward(x, {1.0, 0.0});
  const FeatureMap mean = lma_forward(x, {0.0, 1.0});
  CHECK(mx.frames() == 3);
  for (int c = 0; c < 2; ++c)
    for (int t = 0; t < 3; ++t)
      for (int h = 0; h < 3; ++h)
        for (int w = 0; w < 2; ++w) {
          const double a = x.at(c, 3 * t, h, w), b = x.at(c, 3 * t + 1, h, w), d = x.at(c, 3 * t + 2, h, w);
          CHECK(mx.at(c, t, h, w) == std::max({a, b, d}));
          CHECK(mean.at(c, t, h, w) == doctest::Approx((a + b + d) / 3.0).epsilon(1e-15));
        }
  CHECK(testing::error_kind_of([&] { lma_forward(random_map(1, 10, 2, 2, rng), {}); }) == ErrorKind::kShape);
}

TEST_CASE("lma on a constant clip returns (p1 + p2) times the constant") {
  const FeatureMap x(1, 6, 2, 2, 2.0);
  const FeatureMap y = lma_forward(x, {0.3, 0.9});
  for (double v : y.values()) CHECK(v == doctest::Approx(2.4));
}

TEST_CASE("msma matches the reference and compresses frames by three") {
  Rng rng(12);
  const FeatureMap x = random_map(3, 12, 8, 3, rng);
  MsmaParams mp{{rng.uniform(), rng.uniform()}, {}};
  for (int j = 0; j < 4; ++j) mp.part_lmas.push_back({rng.uniform(), rng.uniform()});
  const FeatureMap y = msma_forward(x, mp);
  CHECK(y.shape() == Shape4{3, 4, 8, 3});
  CHECK(max_abs_diff(y, oracle::msma(x, mp)) < 1e-12);
}

TEST_CASE("lma and msma backward match finite differences") {
  Rng rng(13);
  const FeatureMap x = random_map(2, 6, 4, 2, rng);
  MsmaParams mp{{0.7, 0.4}, {{0.2, 0.9}, {0.6, 0.1}}};
  const FeatureMap dy = random_map(2, 2, 4, 2, rng);
  MsmaGrads g;
  const FeatureMap dx = msma_backward(x, mp, dy, g);
  auto loss = [&](const MsmaParams& p) { return dot(dy, msma_forward(x, p)); };
  const double h = 1e-6;
  MsmaParams a = mp, b = mp;
  a.global_lma.p1 += h;
  b.global_lma.p1 -= h;
  CHECK(g.global_lma.p1 == doctest::Approx((loss(a) - loss(b)) / (2 * h)).epsilon(1e-8));
  a = mp;
  b = mp;
  a.part_lmas[1].p2 += h;
  b.part_lmas[1].p2 -= h;
  CHECK(g.part_lmas[1].p2 == doctest::Approx((loss(a) - loss(b)) / (2 * h)).epsilon(1e-8));
  const FeatureMap v = random_map(2, 6, 4, 2, rng, -1e-7, 1e-7);
  FeatureMap xp = x;
  for (std::size_t i = 0; i < xp.size(); ++i) xp.values()[i] += v.values()[i];
  CHECK(loss(mp) + dot(dx, v) == doctest::Approx(dot(dy, msma_forward(xp, mp))).epsilon(1e-12));
}

TEST_CASE("temporal pooling keeps the per-pixel maximum") {
  Rng rng(14);
  const FeatureMap x = random_map(2, 5, 3, 3, rng);
  const FeatureMap y = temporal_pool(x);
  CHECK(y.shape() == Shape4{2, 1, 3, 3});
  CHECK(max_abs_diff(y, oracle::temporal_max(x)) == 0.0);
  const FeatureMap dy = random_map(2, 1, 3, 3, rng);
  const FeatureMap dx = temporal_pool_backward(x, dy);
  double total = 0.0;
  for (double v : dx.values()) total += v;
  double expect = 0.0;
  for (double v : dy.values()) expect += v;
  CHECK(total == doctest::Approx(expect));
}

TEST_CASE("gem matches direct power sums") {
  Rng rng(15);
  const FeatureMap pooled = random_map(3, 1, 8, 4, rng, 0.0, 2.0);
  for (double delta : {1.0, 2.5, 6.5, 20.0}) {
    const StripMatrix a = gem_pool(pooled, delta, 4);
    const StripMatrix b = oracle::gem(pooled, delta, 4, kGemEpsilon);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("gem at delta 1 is the strip mean of the clamped input") {
  Rng rng(16);
  const FeatureMap pooled = random_map(2, 1, 6, 5, rng, 0.0, 3.0);
  const StripMatrix g = gem_pool(pooled, 1.0, 3);
  for (int s = 0; s < 3; ++s)
    for (int c = 0; c < 2; ++c) {
      double sum = 0.0;
      for (int h = 2 * s; h < 2 * s + 2; ++h)
        for (int w = 0; w < 5; ++w) sum += std::max(pooled.at(c, 0, h, w), kGemEpsilon);
      CHECK(std::abs(g(s, c) - sum / 10.0) < 1e-12);
    }
}

TEST_CASE("gem with a very large exponent approaches the strip max") {
  Rng rng(17);
  const FeatureMap pooled = random_map(1, 1, 4, 4, rng, 0.1, 1.0);
  const StripMatrix g = gem_pool(pooled, 2000.0, 1);
  double mx = 0.0;
  for (double v : pooled.values()) mx = std::max(mx, v);
  CHECK(g(0, 0) == doctest::Approx(mx).epsilon(2e-3));
  CHECK(g(0, 0) <= mx);
}

TEST_CASE("gem rejects non-positive exponents and uneven strips") {
  Rng rng(18);
  const FeatureMap pooled = random_map(1, 1, 4, 4, rng, 0.0, 1.0);
  CHECK(testing::error_kind_of([&] { gem_pool(pooled, 0.0, 2); }) == ErrorKind::kParameter);
  CHECK(testing::error_kind_of([&] { gem_pool(pooled, -1.0, 2); }) == ErrorKind::kParameter);
  CHECK(testing::error_kind_of([&] { gem_pool(pooled, 2.0, 3); }) == ErrorKind::kConfig);
}

TEST_CASE("gem backward matches finite differences in input and exponent") {
  Rng rng(19);
  const FeatureMap pooled = random_map(2, 1, 4, 3, rng, 0.05, 1.5);
  const StripMatrix dy = testing::random_strips(2, 2, rng);
  const double delta = 3.3;
  const GemBackward g = gem_backward(pooled, delta, 2, dy);
  auto loss = [&](const FeatureMap& p, double d) { return (gem_pool(p, d, 2).array() * dy.array()).sum(); };
  const double h = 1e-6;
  CHECK(g.grad_delta == doctest::Approx((loss(pooled, delta + h) - loss(pooled, delta - h)) / (2 * h)).epsilon(1e-7));
  FeatureMap a = pooled, b = pooled;
  a.at(1, 0, 3, 2) += h;
  b.at(1, 0, 3, 2) -= h;
  CHECK(g.grad_input.at(1, 0, 3, 2) == doctest::Approx((loss(a, delta) - loss(b, delta)) / (2 * h)).epsilon(1e-7));
}

TEST_CASE("sefc applies an independent affine map per strip") {
  Rng rng(20);
  const int strips = 3, in = 4, out = 2;
  std::vector<std::vector<double>> weights(strips), biases(strips);
  std::vector<LinearWeights> maps;
  for (int s = 0; s < strips; ++s) {
    weights[s].resize(out * in);
    biases[s].resize(out);
    for (double& v : weights[s]) v = rng.uniform(-1, 1);
    for (double& v : biases[s]) v = rng.uniform(-1, 1);
    maps.push_back({out, in, weights[s], biases[s]});
  }
  const StripMatrix x = testing::random_strips(strips, in, rng);
  HeadParams hp;
  hp.sefc_weights = maps;
  const StripMatrix y = sefc_forward(x, hp);
  CHECK((y - oracle::strip_linear(x, maps)).cwiseAbs().maxCoeff() < 1e-14);
  // Changing strip 1's input leaves the other strips untouched.
  StripMatrix x2 = x;
  x2(1, 0) += 1.0;
  const StripMatrix y2 = sefc_forward(x2, hp);
  CHECK(y2.row(0) == y.row(0));
  CHECK(y2.row(2) == y.row(2));
  CHECK(y2.row(1) != y.row(1));
}

TEST_CASE("leaky relu and its derivative") {
  FeatureMap z(1, 1, 1, 4);
  z.at(0, 0, 0, 0) = -2.0;
  z.at(0, 0, 0, 1) = 0.0;
  z.at(0, 0, 0, 2) = 3.0;
  z.at(0, 0, 0, 3) = -0.5;
  const FeatureMap y = leaky_relu(z, 0.01);
  CHECK(y.at(0, 0, 0, 0) == doctest::Approx(-0.02));
  CHECK(y.at(0, 0, 0, 2) == 3.0);
  FeatureMap g(1, 1, 1, 4, 1.0);
  leaky_relu_backward_inplace(z, 0.01, g);
  CHECK(g.at(0, 0, 0, 0) == doctest::Approx(0.01));
  CHECK(g.at(0, 0, 0, 2) == 1.0);
}
