#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "crowdmap/tensor_nn.hpp"

using namespace crowdmap;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng,
                     double scale = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& v : t.values) v = dist(rng);
  return t;
}

void randomize_layer(ConvLayer& layer, std::mt19937_64& rng,
                     double scale = 0.5) {
  std::uniform_real_distribution<double> dist(-scale, scale);
  for (double& w : layer.weights) w = dist(rng);
  for (double& b : layer.bias) b = dist(rng);
}

// Finite-difference oracle over an arbitrary scalar function of a flat
// parameter view.
template <typename Loss>
double central_difference(double* slot, double h, Loss&& f) {
  const double original = *slot;
  *slot = original + h;
  const double up = f();
  *slot = original - h;
  const double down = f();
  *slot = original;
  return (up - down) / (2.0 * h);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t({2, 3, 4});
  CHECK(t.size() == 24);
  t.ensure_grad();
  CHECK(t.has_grad());
  CHECK_NOTHROW(t.check_invariants());
  t.grad.pop_back();
  CHECK_THROWS_AS(t.check_invariants(), ValidationError);
  CHECK_THROWS_AS(Tensor({2, 0, 3}), ValidationError);
}

TEST_CASE("conv2d_forward basics") {
  SECTION("1x1 identity kernel") {
    std::mt19937_64 rng(1);
    const Tensor x = random_tensor({1, 5, 7}, rng);
    ConvLayer layer = make_conv(1, 1, 1);
    layer.weights[0] = 1.0;
    const Tensor y = conv2d_forward(x, layer);
    CHECK(y.shape == x.shape);
    CHECK(y.values == x.values);
  }

  SECTION("zero input yields the bias everywhere") {
    Tensor x({2, 4, 4});
    ConvLayer layer = make_conv(3, 2, 3);
    layer.bias = {0.5, -1.0, 2.0};
    const Tensor y = conv2d_forward(x, layer);
    for (int oc = 0; oc < 3; ++oc) {
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
          REQUIRE(y.at3(oc, r, c) == layer.bias[static_cast<std::size_t>(oc)]);
        }
      }
    }
  }

  SECTION("all-ones 3x3 kernel spreads an impulse into a plateau") {
    Tensor x({1, 7, 7});
    x.at3(0, 3, 3) = 1.0;
    ConvLayer layer = make_conv(3, 1, 1);
    std::fill(layer.weights.begin(), layer.weights.end(), 1.0);
    const Tensor y = conv2d_forward(x, layer);
    for (int r = 0; r < 7; ++r) {
      for (int c = 0; c < 7; ++c) {
        const bool in_plateau = std::abs(r - 3) <= 1 && std::abs(c - 3) <= 1;
        REQUIRE(y.at3(0, r, c) == (in_plateau ? 1.0 : 0.0));
      }
    }
  }

  SECTION("spatial extent is preserved for every odd kernel") {
    std::mt19937_64 rng(2);
    for (int k : {1, 3, 5, 7, 9, 11}) {
      const Tensor x = random_tensor({1, 13, 17}, rng);
      ConvLayer layer = make_conv(k, 1, 2);
      randomize_layer(layer, rng);
      const Tensor y = conv2d_forward(x, layer);
      CHECK(y.dim(1) == 13);
      CHECK(y.dim(2) == 17);
    }
  }

  SECTION("channel mismatch is an error") {
    Tensor x({2, 4, 4});
    ConvLayer layer = make_conv(3, 3, 1);
    CHECK_THROWS_AS(conv2d_forward(x, layer), ValidationError);
  }

  SECTION("linearity in the input") {
    std::mt19937_64 rng(3);
    ConvLayer layer = make_conv(3, 2, 2);
    randomize_layer(layer, rng);
    const Tensor x1 = random_tensor({2, 6, 6}, rng);
    const Tensor x2 = random_tensor({2, 6, 6}, rng);
    const double a = 0.7, b = -1.3;
    Tensor mix({2, 6, 6});
    for (std::size_t i = 0; i < mix.size(); ++i) {
      mix.values[i] = a * x1.values[i] + b * x2.values[i];
    }
    const Tensor y_mix = conv2d_forward(mix, layer);
    const Tensor y1 = conv2d_forward(x1, layer);
    const Tensor y2 = conv2d_forward(x2, layer);
    Tensor zero({2, 6, 6});
    const Tensor y0 = conv2d_forward(zero, layer);  // pure bias response
    for (std::size_t i = 0; i < y_mix.size(); ++i) {
      const double expected = a * y1.values[i] + b * y2.values[i] -
                              (a + b - 1.0) * y0.values[i];
      REQUIRE(y_mix.values[i] == Catch::Approx(expected).margin(1e-10));
    }
  }
}

TEST_CASE("conv2d_backward") {
  std::mt19937_64 rng(4);

  SECTION("zero upstream gradient gives zero gradients") {
    const Tensor x = random_tensor({2, 5, 5}, rng);
    ConvLayer layer = make_conv(3, 2, 2);
    randomize_layer(layer, rng);
    Tensor go({2, 5, 5});
    const ConvGrads g = conv2d_backward(x, layer, go);
    for (double v : g.grad_x.values) REQUIRE(v == 0.0);
    for (double v : g.grad_weights) REQUIRE(v == 0.0);
    for (double v : g.grad_bias) REQUIRE(v == 0.0);
  }

  SECTION("bias gradient is the per-channel sum of the upstream gradient") {
    const Tensor x = random_tensor({1, 4, 4}, rng);
    ConvLayer layer = make_conv(3, 1, 2);
    randomize_layer(layer, rng);
    const Tensor go = random_tensor({2, 4, 4}, rng);
    const ConvGrads g = conv2d_backward(x, layer, go);
    for (int oc = 0; oc < 2; ++oc) {
      double expected = 0.0;
      for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) expected += go.at3(oc, r, c);
      }
      REQUIRE(g.grad_bias[static_cast<std::size_t>(oc)] ==
              Catch::Approx(expected).margin(1e-12));
    }
  }

  SECTION("weight and input gradients match finite differences") {
    Tensor x = random_tensor({2, 6, 5}, rng);
    ConvLayer layer = make_conv(3, 2, 3);
    randomize_layer(layer, rng);
    // L = 0.5 * sum(y^2) so dL/dy = y.
    auto loss = [&] {
      const Tensor y = conv2d_forward(x, layer);
      double total = 0.0;
      for (double v : y.values) total += v * v;
      return 0.5 * total;
    };
    const Tensor y = conv2d_forward(x, layer);
    const ConvGrads g = conv2d_backward(x, layer, y);

    const double h = 1e-3;
    for (std::size_t i = 0; i < layer.weights.size(); i += 7) {
      const double numeric = central_difference(&layer.weights[i], h, loss);
      REQUIRE(rel_err(g.grad_weights[i], numeric) < 1e-4);
    }
    for (std::size_t i = 0; i < layer.bias.size(); ++i) {
      const double numeric = central_difference(&layer.bias[i], h, loss);
      REQUIRE(rel_err(g.grad_bias[i], numeric) < 1e-4);
    }
    for (std::size_t i = 0; i < x.size(); i += 5) {
      const double numeric = central_difference(&x.values[i], h, loss);
      REQUIRE(rel_err(g.grad_x.values[i], numeric) < 1e-4);
    }
  }

  SECTION("shape mismatch is an error") {
    const Tensor x = random_tensor({1, 4, 4}, rng);
    ConvLayer layer = make_conv(3, 1, 1);
    Tensor go({1, 3, 3});
    CHECK_THROWS_AS(conv2d_backward(x, layer, go), ValidationError);
  }
}

TEST_CASE("maxpool2") {
  SECTION("2x2 window takes the maximum") {
    Tensor x({1, 2, 2});
    x.values = {1, 2, 3, 4};
    const PoolResult res = maxpool2_forward(x);
    REQUIRE(res.out.shape == std::vector<int>{1, 1, 1});
    CHECK(res.out.values[0] == 4.0);
  }

  SECTION("constant input routes gradient to the first cell of each window") {
    Tensor x({1, 4, 4});
    std::fill(x.values.begin(), x.values.end(), 2.5);
    const PoolResult res = maxpool2_forward(x);
    Tensor go(res.out.shape);
    std::fill(go.values.begin(), go.values.end(), 1.0);
    const Tensor gx = maxpool2_backward(go, res.argmax, x.shape);
    for (int r = 0; r < 4; ++r) {
      for (int c = 0; c < 4; ++c) {
        const double expected = (r % 2 == 0 && c % 2 == 0) ? 1.0 : 0.0;
        REQUIRE(gx.at3(0, r, c) == expected);
      }
    }
  }

  SECTION("odd extents behave as -inf padding") {
    Tensor x({1, 3, 3});
    x.values = {1, 2, 3, 4, 5, 6, 7, 8, 9};
    const PoolResult res = maxpool2_forward(x);
    REQUIRE(res.out.shape == std::vector<int>{1, 2, 2});
    CHECK(res.out.values == std::vector<double>{5, 6, 8, 9});
  }

  SECTION("pooling never increases the maximum absolute value") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
      const Tensor x = random_tensor({3, 9, 7}, rng, 10.0);
      const PoolResult res = maxpool2_forward(x);
      double in_max = 0.0, out_max = 0.0;
      for (double v : x.values) in_max = std::max(in_max, std::abs(v));
      for (double v : res.out.values) out_max = std::max(out_max, std::abs(v));
      REQUIRE(out_max <= in_max);
    }
  }

  SECTION("gradient matches finite differences away from ties") {
    std::mt19937_64 rng(6);
    Tensor x = random_tensor({2, 6, 6}, rng);
    auto loss = [&] {
      const PoolResult res = maxpool2_forward(x);
      double total = 0.0;
      for (double v : res.out.values) total += v * v;
      return 0.5 * total;
    };
    const PoolResult res = maxpool2_forward(x);
    const Tensor gx = maxpool2_backward(res.out, res.argmax, x.shape);
    for (std::size_t i = 0; i < x.size(); i += 3) {
      const double numeric = central_difference(&x.values[i], 1e-3, loss);
      REQUIRE(rel_err(gx.values[i], numeric) < 1e-4);
    }
  }
}

TEST_CASE("relu") {
  SECTION("all-negative input zeroes values and gradient") {
    Tensor x({1, 2, 2});
    x.values = {-1, -2, -3, -4};
    const Tensor y = relu_forward(x);
    for (double v : y.values) REQUIRE(v == 0.0);
    Tensor go({1, 2, 2});
    std::fill(go.values.begin(), go.values.end(), 1.0);
    const Tensor gx = relu_backward(x, go);
    for (double v : gx.values) REQUIRE(v == 0.0);
  }

  SECTION("all-positive input is the identity with pass-through gradient") {
    Tensor x({1, 2, 2});
    x.values = {1, 2, 3, 4};
    CHECK(relu_forward(x).values == x.values);
    Tensor go({1, 2, 2});
    go.values = {5, 6, 7, 8};
    CHECK(relu_backward(x, go).values == go.values);
  }

  SECTION("mixed input gradient matches finite differences away from zero") {
    std::mt19937_64 rng(7);
    Tensor x = random_tensor({1, 5, 5}, rng);
    for (double& v : x.values) {
      if (std::abs(v) < 0.05) v = 0.1;  // keep clear of the kink
    }
    auto loss = [&] {
      const Tensor y = relu_forward(x);
      double total = 0.0;
      for (double v : y.values) total += v * v;
      return 0.5 * total;
    };
    const Tensor y = relu_forward(x);
    const Tensor gx = relu_backward(x, y);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double numeric = central_difference(&x.values[i], 1e-3, loss);
      REQUIRE(rel_err(gx.values[i], numeric) < 1e-4);
    }
  }
}

TEST_CASE("adam_step") {
  SECTION("zero gradient with zero moments is a fixed point") {
    std::vector<double> params{1.0, -2.0, 3.0};
    std::vector<double> grads{0.0, 0.0, 0.0};
    AdamState state(3);
    adam_step(params.data(), grads.data(), 3, state, AdamConfig{});
    CHECK(params == std::vector<double>{1.0, -2.0, 3.0});
    CHECK(state.step == 1);
  }

  SECTION("first step moves by -sign(g) * lr to first order") {
    std::vector<double> params{0.0, 0.0};
    std::vector<double> grads{0.37, -1.4e3};
    AdamState state(2);
    AdamConfig cfg;
    cfg.learning_rate = 1e-2;
    adam_step(params.data(), grads.data(), 2, state, cfg);
    CHECK(params[0] == Catch::Approx(-1e-2).epsilon(1e-6));
    CHECK(params[1] == Catch::Approx(1e-2).epsilon(1e-6));
  }

  SECTION("default learning rate is 1e-5") {
    CHECK(AdamConfig{}.learning_rate == 1e-5);
  }

  SECTION("state size mismatch is an error") {
    std::vector<double> params{1.0};
    std::vector<double> grads{1.0};
    AdamState state(2);
    CHECK_THROWS_AS(adam_step(params.data(), grads.data(), 1, state, AdamConfig{}),
                    ValidationError);
  }
}
