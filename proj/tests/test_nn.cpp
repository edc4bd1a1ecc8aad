#include <doctest.h>

#include <cmath>
#include <random>

#include "spermflow/errors.hpp"
#include "spermflow/model.hpp"
#include "spermflow/ops.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace spermflow;
using nn::BasicTensor;
using test_support::gradient_check;
using test_support::random_tensor;
using test_support::Tensor64;

namespace {

// Direct cross-correlation, written independently of the im2col path.
// Every compared entry within tolerance and kink crossings rare.
void require_gradients(const test_support::GradCheck& r, double tolerance = 1e-4) {
  CHECK(r.probed > 0);
  CHECK(r.worst < tolerance);
  CHECK(r.kinks * 20 <= r.probed);
}

Tensor64 away_from_zero(nn::Shape shape, std::mt19937_64& rng) {
  auto t = random_tensor(std::move(shape), rng);
  for (auto& v : t.values()) v = v < 0 ? v - 0.05 : v + 0.05;
  return t;
}

}  // namespace

TEST_CASE("tensor basics") {
  nn::Tensor t({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.rank() == 2);
  CHECK_FALSE(t.requires_grad());
  CHECK(t.grad().empty());
  CHECK_THROWS(t.item());
  CHECK_THROWS_AS(nn::Tensor({2, 2}, std::vector<float>(3)), std::invalid_argument);

  nn::Tensor alias = t;
  alias.values()[0] = 9.0f;
  CHECK(t.values()[0] == 9.0f);
  auto copy = t.clone();
  copy.values()[0] = 1.0f;
  CHECK(t.values()[0] == 9.0f);
}

TEST_CASE("backward accumulates and releases the graph") {
  std::mt19937_64 rng(1);
  auto a = random_tensor({1, 4}, rng);
  auto w = random_tensor({2, 4}, rng);
  auto b = random_tensor({2}, rng);
  auto y = nn::linear(a, w, b);
  CHECK(y.has_grad_fn());
  y.backward(std::vector<double>{1.0, 1.0});
  CHECK_FALSE(y.has_grad_fn());
  const std::vector<double> first(w.grad().begin(), w.grad().end());
  nn::linear(a, w, b).backward(std::vector<double>{1.0, 1.0});
  for (std::size_t i = 0; i < first.size(); ++i) CHECK(w.grad()[i] == doctest::Approx(2 * first[i]));

  nn::NoGradGuard guard;
  CHECK_FALSE(nn::grad_enabled());
  CHECK_FALSE(nn::linear(a, w, b).has_grad_fn());
}

TEST_CASE("conv2d: 1x1 identity kernel") {
  std::mt19937_64 rng(2);
  auto x = random_tensor({2, 1, 4, 5}, rng, false);
  Tensor64 w({1, 1, 1, 1}, 1.0);
  const auto y = nn::conv2d(x, w, {1, 0});
  CHECK(y.shape() == x.shape());
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);
}

TEST_CASE("conv2d matches the direct oracle on random shapes") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> pick(1, 3);
  int tested = 0;
  while (tested < 20) {
    const int n = pick(rng), c = pick(rng), k = pick(rng), kh = pick(rng), kw = pick(rng);
    const int h = pick(rng) + 3, wd = pick(rng) + 3, stride = pick(rng) % 2 + 1, pad = pick(rng) - 1;
    if (pad * 2 > std::min(kh, kw)) continue;
    auto x = random_tensor({n, c, h, wd}, rng, false);
    auto w = random_tensor({k, c, kh, kw}, rng, false);
    const auto y = nn::conv2d(x, w, {stride, pad});
    const auto expect = oracles::direct_conv(x, w, stride, pad);
    REQUIRE(static_cast<std::size_t>(y.numel()) == expect.size());
    double worst = 0;
    for (std::size_t i = 0; i < expect.size(); ++i) worst = std::max(worst, std::abs(y.values()[i] - expect[i]));
    CHECK(worst < 1e-6);
    ++tested;
  }
}

TEST_CASE("conv2d shape errors") {
  Tensor64 x({1, 2, 4, 4});
  CHECK_THROWS_AS(nn::conv2d(x, Tensor64({1, 3, 3, 3}), {1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(nn::conv2d(x, Tensor64({1, 2, 5, 5}), {1, 0}), std::invalid_argument);
  CHECK(nn::conv_output_size(256, 7, 2, 3) == 128);
  CHECK(nn::conv_output_size(5, 3, 2, 0) == 2);  // floor
}

TEST_CASE("gradient checks for individual layers") {
  std::mt19937_64 rng(4);

  SUBCASE("conv2d") {
    auto x = random_tensor({2, 3, 6, 5}, rng);
    auto w = random_tensor({4, 3, 3, 3}, rng);
    require_gradients(gradient_check([&] { return nn::conv2d(x, w, {2, 1}); }, {x, w}));
  }
  SUBCASE("batch_norm2d in training mode") {
    auto x = random_tensor({3, 2, 3, 3}, rng);
    auto g = random_tensor({2}, rng, true, 0.5, 1.5);
    auto b = random_tensor({2}, rng);
    Tensor64 rm({2}, 0.0), rv({2}, 1.0);
    require_gradients(gradient_check([&] { return nn::batch_norm2d(x, g, b, rm, rv, true); }, {x, g, b}));
  }
  SUBCASE("batch_norm2d in eval mode") {
    auto x = random_tensor({2, 2, 3, 3}, rng);
    auto g = random_tensor({2}, rng);
    auto b = random_tensor({2}, rng);
    Tensor64 rm({2}, std::vector<double>{0.1, -0.2}), rv({2}, std::vector<double>{0.5, 2.0});
    require_gradients(gradient_check([&] { return nn::batch_norm2d(x, g, b, rm, rv, false); }, {x, g, b}));
  }
  SUBCASE("linear") {
    auto x = random_tensor({3, 5}, rng);
    auto w = random_tensor({4, 5}, rng);
    auto b = random_tensor({4}, rng);
    require_gradients(gradient_check([&] { return nn::linear(x, w, b); }, {x, w, b}));
  }
  SUBCASE("relu") {
    auto x = away_from_zero({2, 3, 4}, rng);
    require_gradients(gradient_check([&] { return nn::relu(x); }, {x}));
  }
  SUBCASE("max_pool2d") {
    auto x = random_tensor({2, 2, 7, 6}, rng);
    require_gradients(gradient_check([&] { return nn::max_pool2d(x, 3, 2, 1); }, {x}, 1, 1000));
  }
  SUBCASE("adaptive_avg_pool2d and flatten") {
    auto x = random_tensor({2, 3, 4, 5}, rng);
    require_gradients(gradient_check([&] { return nn::flatten(nn::adaptive_avg_pool2d(x)); }, {x}));
  }
  SUBCASE("add") {
    auto a = random_tensor({2, 3}, rng);
    auto b = random_tensor({2, 3}, rng);
    require_gradients(gradient_check([&] { return nn::add(a, b); }, {a, b}));
  }
  SUBCASE("dropout with a fixed mask") {
    auto x = random_tensor({4, 8}, rng);
    std::vector<double> mask(32);
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 == 0 ? 0.0 : 2.0;
    require_gradients(gradient_check([&] { return nn::apply_mask(x, mask); }, {x}));
    // Reseeding before each forward reproduces the same mask.
    std::mt19937_64 drop_rng;
    require_gradients(gradient_check(
              [&] {
                drop_rng.seed(99);
                return nn::dropout(x, 0.5, true, drop_rng);
              },
              {x}));
  }
  SUBCASE("residual block with projection") {
    std::mt19937_64 init(5);
    auto block = nn::make_basic_block<double>(3, 4, 2, init);
    auto x = random_tensor({2, 3, 6, 6}, rng);
    std::vector<Tensor64> wrt{x,
                              block.conv1.weight,
                              block.conv1.gamma,
                              block.conv2.weight,
                              block.conv2.beta,
                              block.downsample->weight};
    require_gradients(gradient_check([&] { return block.forward(x, true); }, wrt, 7, 48));
  }
  SUBCASE("residual block without projection") {
    std::mt19937_64 init(6);
    auto block = nn::make_basic_block<double>(3, 3, 1, init);
    auto x = random_tensor({2, 3, 5, 5}, rng);
    require_gradients(gradient_check([&] { return block.forward(x, true); }, {x, block.conv1.weight, block.conv2.weight}, 8,
                         48));
  }
}

TEST_CASE("batch_norm2d statistics") {
  std::mt19937_64 rng(8);
  auto x = random_tensor({4, 2, 5, 5}, rng, false, -3.0, 5.0);
  Tensor64 g({2}, 1.0), b({2}, 0.0), rm({2}, 0.0), rv({2}, 1.0);
  const auto y = nn::batch_norm2d(x, g, b, rm, rv, true);
  for (int c = 0; c < 2; ++c) {
    double mean = 0, sq = 0, xm = 0, xsq = 0;
    const int count = 4 * 25;
    for (int n = 0; n < 4; ++n)
      for (int i = 0; i < 25; ++i) {
        const double v = y.values()[(n * 2 + c) * 25 + i];
        const double u = x.values()[(n * 2 + c) * 25 + i];
        mean += v, sq += v * v, xm += u, xsq += u * u;
      }
    mean /= count;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(std::abs(sq / count - mean * mean - 1.0) < 1e-4);
    // running stats: momentum 0.1 toward the batch mean and unbiased variance
    xm /= count;
    const double unbiased = (xsq - count * xm * xm) / (count - 1);
    CHECK(rm.values()[c] == doctest::Approx(0.1 * xm).epsilon(1e-9));
    CHECK(rv.values()[c] == doctest::Approx(0.9 + 0.1 * unbiased).epsilon(1e-9));
  }

  SUBCASE("already normalised input passes through") {
    Tensor64 z({1, 1, 2, 2}, std::vector<double>{1.0, -1.0, 1.0, -1.0});
    Tensor64 g1({1}, 1.0), b1({1}, 0.0), m1({1}, 0.0), v1({1}, 1.0);
    const auto out = nn::batch_norm2d(z, g1, b1, m1, v1, true);
    for (int i = 0; i < 4; ++i) CHECK(out.values()[i] == doctest::Approx(z.values()[i]).epsilon(1e-4));
  }
  SUBCASE("eval mode reads running stats and leaves them untouched") {
    Tensor64 z({1, 1, 1, 2}, std::vector<double>{3.0, 5.0});
    Tensor64 g1({1}, 2.0), b1({1}, 1.0), m1({1}, 1.0), v1({1}, 4.0);
    const auto out = nn::batch_norm2d(z, g1, b1, m1, v1, false);
    CHECK(out.values()[0] == doctest::Approx(2.0 * 2.0 / std::sqrt(4.0 + 1e-5) + 1.0));
    CHECK(m1.values()[0] == 1.0);
    CHECK(v1.values()[0] == 4.0);
  }
  CHECK_THROWS_AS(nn::batch_norm2d(x, Tensor64({3}, 1.0), b, rm, rv, true), std::invalid_argument);
}

TEST_CASE("relu, pooling and linear definitions") {
  Tensor64 x({1, 4}, std::vector<double>{-2.0, -0.0, 0.5, 3.0});
  const auto r = nn::relu(x);
  CHECK(r.values()[0] == 0.0);
  CHECK(r.values()[1] == 0.0);
  CHECK(r.values()[2] == 0.5);
  CHECK(r.values()[3] == 3.0);

  Tensor64 flat({1, 2, 3, 3}, 4.25);
  const auto avg = nn::adaptive_avg_pool2d(flat);
  CHECK(avg.shape() == nn::Shape{1, 2, 1, 1});
  CHECK(avg.values()[0] == 4.25);

  // Equal values: the first maximum in row-major order receives the gradient.
  Tensor64 ties({1, 1, 2, 2}, 1.0, true);
  auto pooled = nn::max_pool2d(ties, 3, 2, 1);
  CHECK(pooled.shape() == nn::Shape{1, 1, 1, 1});
  pooled.backward(std::vector<double>{1.0});
  CHECK(ties.grad()[0] == 1.0);
  CHECK(ties.grad()[1] == 0.0);
  CHECK(ties.grad()[3] == 0.0);

  CHECK_THROWS_AS(nn::linear(Tensor64({2, 3}), Tensor64({4, 2}), Tensor64({4})), std::invalid_argument);
  CHECK_THROWS_AS(nn::add(Tensor64({2, 3}), Tensor64({3, 2})), std::invalid_argument);
}

TEST_CASE("dropout modes") {
  std::mt19937_64 rng(10);
  auto x = random_tensor({3, 7}, rng, false);
  for (bool training : {true, false}) {
    const auto y = nn::dropout(x, 0.0, training, rng);
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);
  }
  const auto e = nn::dropout(x, 0.9, false, rng);
  for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(e.values()[i] == x.values()[i]);
  CHECK_THROWS_AS(nn::dropout(x, 1.0, true, rng), std::invalid_argument);
  CHECK_THROWS_AS(nn::dropout(x, -0.1, true, rng), std::invalid_argument);
}

TEST_CASE("dropout Monte Carlo matches the inverted-dropout expectation") {
  std::mt19937_64 rng(12);
  const int trials = 10000;
  const double input = 0.8;
  nn::Tensor x({1, 1}, static_cast<float>(input));
  int survivors = 0;
  double sum = 0;
  for (int t = 0; t < trials; ++t) {
    const float y = nn::dropout(x, 0.5, true, rng).values()[0];
    if (y != 0.0f) {
      ++survivors;
      CHECK(y == doctest::Approx(2 * input));
    }
    sum += y;
  }
  CHECK(std::abs(survivors / double(trials) - 0.5) <= 0.02);
  CHECK(std::abs(sum / trials - input) <= 0.02 * input);
}

TEST_CASE("property: dropout keeps the survivor fraction near 1-p") {
  std::mt19937_64 gen(13);
  std::uniform_real_distribution<double> prob(0.05, 0.9);
  for (int round = 0; round < 10; ++round) {
    const double p = prob(gen);
    nn::Tensor x({100, 100}, 1.0f);
    const auto y = nn::dropout(x, p, true, gen);
    const auto kept = std::count_if(y.values().begin(), y.values().end(), [](float v) { return v != 0.0f; });
    // 10^4 Bernoulli draws: 5 standard deviations is below 0.025
    CHECK(std::abs(kept / 1e4 - (1 - p)) < 0.025);
    for (float v : y.values()) {
      if (v != 0.0f) CHECK(v == doctest::Approx(1.0 / (1.0 - p)));
    }
  }
}

TEST_CASE("property: linear gradient checks over random shapes") {
  std::mt19937_64 gen(14);
  std::uniform_int_distribution<int> dim(1, 6);
  for (int round = 0; round < 8; ++round) {
    auto x = random_tensor({dim(gen), dim(gen)}, gen);
    auto w = random_tensor({dim(gen), x.dim(1)}, gen);
    auto b = random_tensor({w.dim(0)}, gen);
    require_gradients(gradient_check([&] { return nn::linear(x, w, b); }, {x, w, b}, round));
  }
}
