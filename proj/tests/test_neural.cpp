#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "meshforge/error.hpp"
#include "meshforge/neural.hpp"

using namespace meshforge;

namespace {

std::vector<double> random_rows(std::size_t rows, int width, std::uint64_t seed, double lo = -1, double hi = 1) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> x(rows * static_cast<std::size_t>(width));
  for (double& v : x) v = u(rng);
  return x;
}

// 2 -> 2 (ReLU) -> 1 with hand-picked weights; one hidden unit is switched off at x = (1, 2).
std::pair<Architecture, ModelParams> hand_net() {
  Architecture a{"hand", 2, {2}, SkipSpec::None};
  ModelParams p = layout_params(a);
  p.values = {1, -1, 0.5, 2, 0.5, -10, 3, 5, 0.25};
  return {a, p};
}

double loss_at(const ModelParams& p, const Architecture& a, const std::vector<double>& x, const std::vector<double>& y) {
  const auto out = forward_batch(p, a, x, y.size());
  double s = 0;
  for (std::size_t i = 0; i < y.size(); ++i) s += (out[i] - y[i]) * (out[i] - y[i]);
  return s / static_cast<double>(y.size());
}

void check_gradient(const Architecture& a, std::uint64_t seed) {
  ModelParams p = init_params(a, seed);
  // nonzero biases so every parameter is exercised
  std::mt19937_64 rng(seed + 1);
  std::normal_distribution<double> n(0, 0.1);
  for (const auto& L : p.layers)
    for (int j = 0; j < L.fan_out; ++j) p.values[L.b + static_cast<std::size_t>(j)] = n(rng);
  const std::size_t rows = 8;
  const auto x = random_rows(rows, a.input_dim, seed + 2);
  const auto y = random_rows(rows, 1, seed + 3);
  std::vector<double> g;
  backward(p, a, x, y, g);
  REQUIRE(g.size() == p.size());
  const double h = 1e-5;
  double diff2 = 0, norm2 = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    ModelParams q = p;
    q.values[i] = p.values[i] + h;
    const double up = loss_at(q, a, x, y);
    q.values[i] = p.values[i] - h;
    const double dn = loss_at(q, a, x, y);
    const double fd = (up - dn) / (2 * h);
    diff2 += (fd - g[i]) * (fd - g[i]);
    norm2 += g[i] * g[i];
    CHECK(std::abs(fd - g[i]) <= 1e-5 * std::max(1.0, std::abs(g[i])));
  }
  CHECK(std::sqrt(diff2) <= 1e-5 * std::sqrt(norm2));
}

}  // namespace

TEST_CASE("parameter initialisation") {
  const Architecture fcn = fcn_architecture(27);
  CHECK(parameter_count(fcn) == 38449);
  CHECK(parameter_count(fcn_architecture(24)) == 38353);
  const ModelParams a = init_params(fcn, 7), b = init_params(fcn, 7);
  CHECK(a.values == b.values);
  CHECK(init_params(fcn, 8).values != a.values);
  for (const auto& L : a.layers) {
    for (int j = 0; j < L.fan_out; ++j) CHECK(a.values[L.b + static_cast<std::size_t>(j)] == 0.0);
    if (L.fan_in < 64) continue;
    const std::size_t n = static_cast<std::size_t>(L.fan_in * L.fan_out);
    double s = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      s += a.values[L.w + i];
      s2 += a.values[L.w + i] * a.values[L.w + i];
    }
    const double mean = s / static_cast<double>(n);
    const double sd = std::sqrt(s2 / static_cast<double>(n) - mean * mean);
    CHECK(sd == doctest::Approx(std::sqrt(2.0 / L.fan_in)).epsilon(0.1));
  }
  const Architecture r1 = resnet1_architecture(27);
  CHECK(r1.needs_projection());
  CHECK(parameter_count(r1) == parameter_count(fcn) + 32 * 8);
  CHECK(parameter_count(resnet2_architecture(24)) == 24 * 128 + 128 + 6 * (128 * 128 + 128) + 128 + 1);
}

TEST_CASE("forward pass") {
  SUBCASE("zero weights give zero output") {
    const Architecture a = fcn_architecture(24);
    const ModelParams p = layout_params(a);
    const auto x = random_rows(10, 24, 1);
    for (double y : forward_batch(p, a, x, 10)) CHECK(y == 0.0);
  }
  SUBCASE("hand-computed single hidden layer") {
    const auto [a, p] = hand_net();
    // z = (1*1 + 2*0.5 + 0.5, 1*(-1) + 2*2 - 10) = (2.5, -7) -> relu (2.5, 0) -> 3*2.5 + 0.25
    CHECK(forward(p, a, std::vector<double>{1, 2}) == 7.75);
    // both units on at x = (0, 6): z = (3.5, 2)
    CHECK(forward(p, a, std::vector<double>{0, 6}) == doctest::Approx(3 * 3.5 + 5 * 2 + 0.25));
  }
  SUBCASE("batched forward equals row-by-row") {
    const Architecture a = architecture_preset("resnet1", 5, true);
    const ModelParams p = init_params(a, 3);
    const auto x = random_rows(17, 5, 4);
    const auto y = forward_batch(p, a, x, 17);
    for (std::size_t r = 0; r < 17; ++r)
      CHECK(y[r] == doctest::Approx(forward(p, a, std::span<const double>(x).subspan(r * 5, 5))).epsilon(1e-14));
  }
  SUBCASE("resnet2 with dead middle layers and identity tail reduces to the first layer") {
    const Architecture a = architecture_preset("resnet2", 5, true);
    ModelParams p = init_params(a, 11);
    for (std::size_t l = 1; l <= 6; ++l) {
      const auto& L = p.layers[l];
      for (int i = 0; i < L.fan_in * L.fan_out; ++i) p.values[L.w + static_cast<std::size_t>(i)] = 0.0;
      if (l >= 4)
        for (int i = 0; i < L.fan_in; ++i) p.values[L.w + static_cast<std::size_t>(i * L.fan_out + i)] = 1.0;
    }
    const auto& L0 = p.layers[0];
    const auto& Lo = p.layers[7];
    p.values[Lo.b] = 0.3;
    const auto x = random_rows(20, 5, 12);
    const auto y = forward_batch(p, a, x, 20);
    for (std::size_t r = 0; r < 20; ++r) {
      double out = 0.3;
      for (int j = 0; j < 4; ++j) {
        double z = p.values[L0.b + static_cast<std::size_t>(j)];
        for (int i = 0; i < 5; ++i) z += x[r * 5 + static_cast<std::size_t>(i)] * p.values[L0.w + static_cast<std::size_t>(i * 4 + j)];
        out += std::max(z, 0.0) * p.values[Lo.w + static_cast<std::size_t>(j)];
      }
      CHECK(y[r] == doctest::Approx(out).epsilon(1e-13));
    }
  }
  SUBCASE("resnet1 with a zero projection equals the plain network") {
    const Architecture r = architecture_preset("resnet1", 5, true);
    const Architecture f = architecture_preset("fcn", 5, true);
    REQUIRE(r.needs_projection());
    ModelParams pr = init_params(r, 5);
    ModelParams pf = layout_params(f);
    std::copy_n(pr.values.begin(), pf.size(), pf.values.begin());
    for (std::size_t i = pf.size(); i < pr.size(); ++i) pr.values[i] = 0.0;
    const auto x = random_rows(30, 5, 6);
    CHECK(forward_batch(pr, r, x, 30) == forward_batch(pf, f, x, 30));
  }
  SUBCASE("shape errors") {
    const auto [a, p] = hand_net();
    CHECK_THROWS_AS(forward(p, a, std::vector<double>{1, 2, 3}), Error);
    CHECK_THROWS_AS(forward(layout_params(fcn_architecture(24)), a, std::vector<double>{1, 2}), Error);
  }
}

TEST_CASE("backward pass") {
  SUBCASE("exact fit has zero gradient") {
    const auto [a, p] = hand_net();
    const std::vector<double> x{1, 2, 0, 6, -1, 1};
    const auto y = forward_batch(p, a, x, 3);
    std::vector<double> g;
    CHECK(backward(p, a, x, y, g) == 0.0);
    for (double v : g) CHECK(v == 0.0);
  }
  SUBCASE("hand network matches finite differences") {
    const Architecture a{"small", 5, {4, 3}, SkipSpec::None};
    for (std::uint64_t s = 0; s < 3; ++s) check_gradient(a, s);
  }
  SUBCASE("all presets at toy width, five seeds") {
    for (const char* name : {"fcn", "resnet1", "resnet2"})
      for (std::uint64_t s = 0; s < 5; ++s) {
        CAPTURE(name);
        CAPTURE(s);
        check_gradient(architecture_preset(name, 5, true), 100 + s);
      }
  }
  SUBCASE("duplicating every sample leaves the mean gradient unchanged") {
    const Architecture a = architecture_preset("resnet2", 5, true);
    const ModelParams p = init_params(a, 9);
    const auto x = random_rows(6, 5, 10);
    const auto y = random_rows(6, 1, 11);
    std::vector<double> xx = x, yy = y, g1, g2;
    xx.insert(xx.end(), x.begin(), x.end());
    yy.insert(yy.end(), y.begin(), y.end());
    const double l1 = backward(p, a, x, y, g1);
    const double l2 = backward(p, a, xx, yy, g2);
    CHECK(l1 == doctest::Approx(l2).epsilon(1e-14));
    for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == doctest::Approx(g2[i]).epsilon(1e-12).scale(1e-12));
  }
}

TEST_CASE("Adam steps") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    AdamState s(3);
    std::vector<double> p{1, -2, 3};
    const std::vector<double> g(3, 0.0);
    for (int i = 0; i < 5; ++i) adam_step(s, p, g);
    CHECK(p == std::vector<double>{1, -2, 3});
  }
  SUBCASE("two steps on f = theta^2 / 2 from theta = 1") {
    AdamState s(1);
    std::vector<double> th{1.0};
    adam_step(s, th, std::vector<double>{th[0]});
    CHECK(std::abs(th[0] - 0.9990000000099999999) < 1e-12);
    CHECK(std::abs(s.m[0] - 0.1) < 1e-15);
    CHECK(std::abs(s.v[0] - 0.001) < 1e-15);
    adam_step(s, th, std::vector<double>{th[0]});
    CHECK(std::abs(th[0] - 0.9980000262238366057) < 1e-12);
    CHECK(std::abs(s.m[0] - 0.18990000000099999999) < 1e-15);
    CHECK(std::abs(s.v[0] - 0.0019970010000199799998) < 1e-15);
    CHECK(s.t == 2);
  }
  SUBCASE("first step from zero with unit gradient") {
    AdamState s(1);
    std::vector<double> th{0.0};
    adam_step(s, th, std::vector<double>{1.0});
    CHECK(std::abs(th[0] - (-0.00099999999000000010)) < 1e-15);
  }
  SUBCASE("size mismatch") {
    AdamState s(2);
    std::vector<double> th{0.0};
    CHECK_THROWS_AS(adam_step(s, th, std::vector<double>{1.0}), Error);
  }
}

TEST_CASE("training") {
  SUBCASE("constant target is learned") {
    const Architecture a = architecture_preset("fcn", 3, true);
    const auto x = random_rows(256, 3, 1);
    const std::vector<double> y(256, 2.5);
    TrainConfig c;
    c.batch_size = 32;
    c.epochs = 150;
    c.seed = 4;
    c.lr = 1e-2;
    const TrainResult r = train(a, x, y, c);
    CHECK(r.loss_history.size() == 150);
    CHECK(r.loss_history.back() < 1e-3);
  }
  SUBCASE("sine regression") {
    const std::size_t n = 200;
    const auto x = random_rows(n, 1, 2, -std::numbers::pi, std::numbers::pi);
    std::vector<double> y(n);
    double mean = 0;
    for (std::size_t i = 0; i < n; ++i) mean += (y[i] = std::sin(x[i])) / static_cast<double>(n);
    double var = 0;
    for (double v : y) var += (v - mean) * (v - mean) / static_cast<double>(n);
    const Architecture a{"mlp", 1, {32, 32}, SkipSpec::None};
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 200;
    c.seed = 1;
    c.lr = 3e-3;
    const TrainResult r = train(a, x, y, c);
    CHECK(loss_at(r.params, a, x, y) < 0.2 * var);
  }
  SUBCASE("identical seeds give identical runs") {
    const Architecture a = architecture_preset("resnet2", 4, true);
    const auto x = random_rows(100, 4, 3);
    const auto y = random_rows(100, 1, 4);
    TrainConfig c;
    c.batch_size = 16;
    c.epochs = 5;
    c.seed = 77;
    const TrainResult r1 = train(a, x, y, c), r2 = train(a, x, y, c);
    CHECK(r1.params.values == r2.params.values);
    CHECK(r1.loss_history == r2.loss_history);
    c.seed = 78;
    CHECK(train(a, x, y, c).params.values != r1.params.values);
  }
  SUBCASE("full-batch training of a linear model decreases the loss every step") {
    const Architecture a{"linear", 3, {}, SkipSpec::None};
    const std::size_t n = 64;
    const auto x = random_rows(n, 3, 5);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = 3 * x[3 * i] - 2 * x[3 * i + 1] + 1.5 * x[3 * i + 2] + 4;
    TrainConfig c;
    c.batch_size = n;
    c.epochs = 100;
    c.seed = 6;
    c.lr = 1e-3;
    const TrainResult r = train(a, x, y, c);
    for (std::size_t i = 1; i < r.loss_history.size(); ++i) CHECK(r.loss_history[i] < r.loss_history[i - 1]);
  }
  SUBCASE("non-finite targets raise NonFiniteLoss") {
    const Architecture a = architecture_preset("fcn", 2, true);
    auto x = random_rows(40, 2, 8);
    std::vector<double> y(40, 1.0);
    y[17] = std::numeric_limits<double>::quiet_NaN();
    TrainConfig c;
    c.batch_size = 40;
    c.epochs = 3;
    try {
      train(a, x, y, c);
      FAIL("expected NonFiniteLoss");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::NonFiniteLoss);
      CHECK(std::string(e.what()).find("epoch 0") != std::string::npos);
    }
  }
  SUBCASE("argument errors") {
    const Architecture a = architecture_preset("fcn", 2, true);
    TrainConfig c;
    CHECK_THROWS_AS(train(a, std::vector<double>{}, std::vector<double>{}, c), Error);
    CHECK_THROWS_AS(train(a, std::vector<double>{1, 2, 3}, std::vector<double>{1}, c), Error);
    CHECK_THROWS_AS(architecture_preset("transformer", 2), Error);
  }
}

TEST_CASE("model files") {
  Model m;
  m.arch = architecture_preset("resnet1", 6, true);
  m.params = init_params(m.arch, 21);
  m.norm.feature_mean = {1, 2, 3, 4, 5, 6};
  m.norm.feature_scale = {0.5, 1, 2, 4, 8, 0.1};
  m.norm.target_mean = -1.25;
  m.norm.target_scale = 3.5;
  m.seed = 21;
  m.kind = "poisson";
  m.epochs = 12;
  std::stringstream buf;
  save_model(buf, m);
  const std::string bytes = buf.str();

  SUBCASE("round trip is bit-exact") {
    std::stringstream in(bytes);
    const Model r = load_model(in);
    CHECK(r.params.values == m.params.values);
    CHECK(r.arch.hidden == m.arch.hidden);
    CHECK(r.arch.skip == m.arch.skip);
    CHECK(r.kind == "poisson");
    CHECK(r.epochs == 12);
    CHECK(r.seed == 21);
    const auto x = random_rows(100, 6, 22, -10, 10);
    CHECK(predict_log_area(r, x, 100) == predict_log_area(m, x, 100));
    std::stringstream again;
    save_model(again, r);
    CHECK(again.str() == bytes);
  }
  SUBCASE("truncated file") {
    for (std::size_t cut : {std::size_t{3}, bytes.size() / 2, bytes.size() - 1}) {
      std::stringstream in(bytes.substr(0, cut));
      try {
        load_model(in);
        FAIL("expected FormatError");
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::FormatError);
      }
    }
  }
  SUBCASE("flipped payload byte fails the checksum") {
    std::string bad = bytes;
    bad[bad.size() - 20] ^= 0x01;
    std::stringstream in(bad);
    CHECK_THROWS_AS(load_model(in), Error);
  }
  SUBCASE("unknown version is reported") {
    std::string bad = bytes;
    const auto at = bad.find("\"version\":1");
    REQUIRE(at != std::string::npos);
    bad[at + 10] = '2';
    std::stringstream in(bad);
    try {
      load_model(in);
      FAIL("expected FormatError");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::FormatError);
      CHECK(std::string(e.what()).find("version 2") != std::string::npos);
    }
  }
}
