#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "spermflow/errors.hpp"
#include "spermflow/flow.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace spermflow;
using test_support::smooth_texture;
using test_support::wrap_shift;
using oracles::block_match;
using oracles::median;
using oracles::Quadratic;
using oracles::sample;

TEST_CASE("polynomial expansion recovers quadratic signals in the interior") {
  const Quadratic shapes[] = {
      {0.2, 0.004, -0.003, 2e-4, 1e-4, 3e-4},
      {0.5, -0.01, 0.006, -1e-4, -2e-4, 1.5e-4},
      {0.1, 0.0, 0.0, 3e-4, 0.0, 0.0},
  };
  for (int poly_n : {5, 7}) {
    flow::FarnebackParams params;
    params.poly_n = poly_n;
    params.poly_sigma = poly_n == 5 ? 1.1 : 1.5;
    for (const auto& f : shapes) {
      const auto frame = sample(f, 32, 28);
      const auto poly = flow::polynomial_expansion(frame, params);
      const int m = poly_n / 2;
      double worst = 0;
      for (int y = m; y < 28 - m; ++y)
        for (int x = m; x < 32 - m; ++x) {
          const auto expect = f.local_coefficients(x, y);
          for (int k = 0; k < flow::PolyExpansion::kCount; ++k) {
            worst = std::max(worst, std::abs(poly.at(x, y, static_cast<flow::PolyExpansion::Coef>(k)) - expect[k]));
          }
        }
      CHECK(worst < 1e-5);
    }
  }
}

TEST_CASE("identical frames give zero flow") {
  const auto f = smooth_texture(96, 80, 3);
  const auto flow = flow::estimate_flow(f, f, {});
  CHECK(flow.width == 96);
  CHECK(flow.height == 80);
  float worst = 0;
  for (float v : flow.data) worst = std::max(worst, std::abs(v));
  CHECK(worst <= 1e-3f);
}

TEST_CASE("wraparound shift is recovered and agrees with block matching") {
  const auto prev = smooth_texture(128, 128, 11);
  for (auto [dx, dy] : {std::pair{3, 1}, std::pair{-2, 2}, std::pair{1, -3}}) {
    const auto next = wrap_shift(prev, dx, dy);
    const auto flow = flow::estimate_flow(prev, next, {});
    const int margin = 8;
    int good = 0, total = 0;
    std::vector<double> us, vs;
    for (int y = margin; y < 128 - margin; ++y)
      for (int x = margin; x < 128 - margin; ++x) {
        ++total;
        if (std::hypot(flow.u(x, y) - dx, flow.v(x, y) - dy) <= 0.5) ++good;
        us.push_back(flow.u(x, y));
        vs.push_back(flow.v(x, y));
      }
    CHECK(good >= 0.8 * total);

    std::vector<double> bu, bv;
    for (int y = margin; y < 128 - margin; y += 8)
      for (int x = margin; x < 128 - margin; x += 8) {
        const auto [mx, my] = block_match(prev, next, x, y, 4, 5);
        bu.push_back(mx);
        bv.push_back(my);
      }
    CHECK(std::abs(median(us) - median(bu)) <= 0.5);
    CHECK(std::abs(median(vs) - median(bv)) <= 0.5);
  }
}

TEST_CASE("initial flow guess is accepted and checked") {
  const auto prev = smooth_texture(64, 64, 5);
  const auto next = wrap_shift(prev, 2, 0);
  flow::FlowField guess(64, 64);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x) guess.u(x, y) = 2.0f;
  const auto flow = flow::estimate_flow(prev, next, {}, guess);
  CHECK(flow.u(32, 32) == doctest::Approx(2.0).epsilon(0.1));
  CHECK_THROWS_AS(flow::estimate_flow(prev, next, {}, flow::FlowField(8, 8)), InputError);
}

TEST_CASE("flow estimation rejects mismatched frames and bad parameters") {
  const auto a = smooth_texture(32, 32, 1);
  const auto b = smooth_texture(40, 32, 1);
  CHECK_THROWS_AS(flow::estimate_flow(a, b, {}), InputError);

  flow::FarnebackParams bad;
  bad.pyr_scale = 1.0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = {};
  bad.poly_n = 4;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = {};
  bad.winsize = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
  bad = {};
  bad.levels = 0;
  CHECK_THROWS_AS(bad.validate(), InputError);
}

TEST_CASE("flow_to_rgb encodes direction as hue and magnitude as value") {
  // Independent HSV oracle (full saturation).
  const auto oracle = [](double hue, double value) {
    const double c = value;
    const double hp = hue / 60.0;
    const double x = c * (1 - std::abs(std::fmod(hp, 2.0) - 1));
    double r = 0, g = 0, b = 0;
    if (hp < 1) r = c, g = x;
    else if (hp < 2) r = x, g = c;
    else if (hp < 3) g = c, b = x;
    else if (hp < 4) g = x, b = c;
    else if (hp < 5) r = x, b = c;
    else r = c, b = x;
    return std::array<int, 3>{static_cast<int>(std::lround(r * 255)), static_cast<int>(std::lround(g * 255)),
                              static_cast<int>(std::lround(b * 255))};
  };

  flow::FlowField zero(4, 3);
  for (auto b : flow::flow_to_rgb(zero).data) CHECK(b == 0);

  flow::FlowField field(5, 1);
  const double angles[] = {0, 45, 135, 200, 300};
  const double lengths[] = {0.0, 1.0, 2.0, 3.0, 4.0};
  for (int i = 0; i < 5; ++i) {
    const double a = angles[i] * std::numbers::pi / 180;
    field.u(i, 0) = static_cast<float>(lengths[i] * std::cos(a));
    field.v(i, 0) = static_cast<float>(lengths[i] * std::sin(a));
  }
  const auto img = flow::flow_to_rgb(field);
  for (int i = 1; i < 5; ++i) {
    const auto expect = oracle(angles[i], lengths[i] / 4.0);
    for (int c = 0; c < 3; ++c) CHECK(std::abs(img.at(i, 0, c) - expect[c]) <= 1);
  }
  for (int c = 0; c < 3; ++c) CHECK(img.at(0, 0, c) == 0);

  flow::FlowField uniform(3, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 3; ++x) uniform.v(x, y) = -1.5f;  // straight up: hue 270
  const auto up = flow::flow_to_rgb(uniform);
  const auto expect = oracle(270, 1.0);
  for (int c = 0; c < 3; ++c) CHECK(std::abs(up.at(1, 1, c) - expect[c]) <= 1);
}

TEST_CASE(".flo files round trip bit-exactly") {
  test_support::TempDir dir("flo");
  flow::FlowField f(7, 3);
  for (std::size_t i = 0; i < f.data.size(); ++i) f.data[i] = static_cast<float>(i) * 0.37f - 2.0f;
  flow::write_flo(dir / "f.flo", f);
  const auto back = flow::read_flo(dir / "f.flo");
  CHECK(back.width == 7);
  CHECK(back.height == 3);
  CHECK(back.data == f.data);
  const auto bytes = test_support::read_bytes(dir / "f.flo");
  CHECK(std::string(bytes.begin(), bytes.begin() + 4) == "PIEH");
  CHECK(bytes.size() == 12 + 7 * 3 * 8);

  std::ofstream(dir / "bad.flo", std::ios::binary) << "NOPE";
  CHECK_THROWS_AS(flow::read_flo(dir / "bad.flo"), InputError);
}
