#include <doctest.h>

#include <cmath>
#include <random>

#include "tt/nn.hpp"

using namespace tt;
using namespace tt::nn;

namespace {

std::mt19937 g_rng(101);

Tensor random_tensor(std::vector<int> shape, float lo = -1.0f, float hi = 1.0f) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<float> u(lo, hi);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = u(g_rng);
  return t;
}

double objective(Layer& layer, const Tensor& x, const Tensor& coeff, bool train) {
  Tensor y = layer.forward({&x}, train);
  REQUIRE(y.shape() == coeff.shape());
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += static_cast<double>(y[i]) * coeff[i];
  return acc;
}

// Checks dJ/dx and dJ/dparam against central differences for J = sum(c * y).
void check_layer_grads(Layer& layer, Tensor x, bool train = true, double tol = 2e-2) {
  Tensor y = layer.forward({&x}, train);
  Tensor coeff = random_tensor(y.shape());
  for (Param* p : layer.params()) p->grad.fill(0.0f);
  layer.forward({&x}, train);  // refresh caches
  auto grads = layer.backward({&x}, coeff);
  const Tensor& dx = grads[0];

  const float h = 1e-2f;
  auto check_value = [&](float analytic, float fd) {
    const double denom = std::max({std::abs(double(analytic)), std::abs(double(fd)), 0.05});
    CHECK(std::abs(analytic - fd) / denom < tol);
  };

  std::uniform_int_distribution<std::size_t> pick(0, x.size() - 1);
  for (int k = 0; k < 25; ++k) {
    const std::size_t i = pick(g_rng);
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (objective(layer, xp, coeff, train) - objective(layer, xm, coeff, train)) /
                      (2.0 * h);
    check_value(dx[i], static_cast<float>(fd));
  }
  for (Param* p : layer.params()) {
    std::uniform_int_distribution<std::size_t> pickp(0, p->value.size() - 1);
    for (int k = 0; k < 15; ++k) {
      const std::size_t i = pickp(g_rng);
      const float orig = p->value[i];
      p->value[i] = orig + h;
      const double jp = objective(layer, x, coeff, train);
      p->value[i] = orig - h;
      const double jm = objective(layer, x, coeff, train);
      p->value[i] = orig;
      check_value(p->grad[i], static_cast<float>((jp - jm) / (2.0 * h)));
    }
  }
}

}  // namespace

TEST_CASE("conv2d gradient check (3x3 pad 1)") {
  std::mt19937 rng(1);
  Conv2d conv("c", 3, 4, 3, 1, 1, rng);
  check_layer_grads(conv, random_tensor({2, 3, 6, 6}));
}

TEST_CASE("conv2d gradient check (7x7 stride 2 pad 3, no bias)") {
  std::mt19937 rng(2);
  Conv2d conv("c", 2, 3, 7, 2, 3, rng, false);
  check_layer_grads(conv, random_tensor({1, 2, 12, 12}));
}

TEST_CASE("conv2d gradient check (1x1)") {
  std::mt19937 rng(3);
  Conv2d conv("c", 5, 2, 1, 1, 0, rng);
  check_layer_grads(conv, random_tensor({2, 5, 4, 4}));
}

TEST_CASE("deconv2x2 doubles resolution and passes gradient check") {
  std::mt19937 rng(4);
  Deconv2x2 up("u", 3, 2, rng);
  Tensor x = random_tensor({2, 3, 5, 5});
  Tensor y = up.forward({&x}, true);
  CHECK(y.shape() == std::vector<int>{2, 2, 10, 10});
  check_layer_grads(up, x);
}

TEST_CASE("maxpool forward and gradient") {
  MaxPool pool(2, 2, 0);
  Tensor x({1, 1, 4, 4});
  for (int i = 0; i < 16; ++i) x[i] = static_cast<float>(i);
  Tensor y = pool.forward({&x}, true);
  CHECK(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(y[0] == 5.0f);
  CHECK(y[3] == 15.0f);
  Tensor x2 = random_tensor({2, 3, 6, 6});
  check_layer_grads(pool, x2);
}

TEST_CASE("maxpool 3x3 stride 2 pad 1 output size") {
  MaxPool pool(3, 2, 1);
  Tensor x = random_tensor({1, 2, 16, 16});
  CHECK(pool.forward({&x}, true).shape() == std::vector<int>{1, 2, 8, 8});
  check_layer_grads(pool, x);
}

TEST_CASE("avgpool forward and gradient") {
  AvgPool pool(2, 2);
  Tensor x({1, 1, 2, 2});
  x[0] = 1.0f; x[1] = 2.0f; x[2] = 3.0f; x[3] = 6.0f;
  Tensor y = pool.forward({&x}, true);
  CHECK(y[0] == doctest::Approx(3.0f));
  Tensor x2 = random_tensor({2, 2, 6, 6});
  check_layer_grads(pool, x2);
}

TEST_CASE("relu and sigmoid gradients") {
  ReLU relu;
  check_layer_grads(relu, random_tensor({2, 3, 5, 5}));
  Sigmoid sig;
  check_layer_grads(sig, random_tensor({2, 3, 5, 5}, -3.0f, 3.0f));
}

TEST_CASE("batchnorm statistics and gradient") {
  BatchNorm2d bn("bn", 3);
  Tensor x = random_tensor({4, 3, 5, 5}, -2.0f, 2.0f);
  Tensor y = bn.forward({&x}, true);
  // normalized output: per-channel mean ~0, var ~1 (gamma=1, beta=0)
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0, var = 0.0;
    int cnt = 0;
    for (int n = 0; n < 4; ++n)
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 5; ++w) {
          mean += y.at(n, c, h, w);
          ++cnt;
        }
    mean /= cnt;
    for (int n = 0; n < 4; ++n)
      for (int h = 0; h < 5; ++h)
        for (int w = 0; w < 5; ++w) var += std::pow(y.at(n, c, h, w) - mean, 2);
    var /= cnt;
    CHECK(std::abs(mean) < 1e-4);
    CHECK(var == doctest::Approx(1.0).epsilon(1e-2));
  }
  BatchNorm2d bn2("bn2", 2);
  check_layer_grads(bn2, random_tensor({3, 2, 4, 4}), true, 4e-2);
}

TEST_CASE("batchnorm eval mode uses running statistics") {
  BatchNorm2d bn("bn", 2);
  Tensor x = random_tensor({4, 2, 4, 4}, 1.0f, 3.0f);
  for (int i = 0; i < 30; ++i) bn.forward({&x}, true);
  Tensor y_eval = bn.forward({&x}, false);
  Tensor y_train = bn.forward({&x}, true);
  // running stats converge to batch stats, so the two agree loosely
  for (std::size_t i = 0; i < y_eval.size(); ++i)
    CHECK(y_eval[i] == doctest::Approx(y_train[i]).epsilon(0.2));
  // eval is deterministic
  Tensor y2 = bn.forward({&x}, false);
  Tensor y3 = bn.forward({&x}, false);
  for (std::size_t i = 0; i < y2.size(); ++i) CHECK(y2[i] == y3[i]);
}

TEST_CASE("concat splits gradients correctly") {
  Concat cat;
  Tensor a = random_tensor({2, 3, 4, 4});
  Tensor b = random_tensor({2, 2, 4, 4});
  Tensor y = cat.forward({&a, &b}, true);
  CHECK(y.shape() == std::vector<int>{2, 5, 4, 4});
  CHECK(y.at(1, 0, 2, 2) == a.at(1, 0, 2, 2));
  CHECK(y.at(1, 3, 2, 2) == b.at(1, 0, 2, 2));
  Tensor g = random_tensor(y.shape());
  auto grads = cat.backward({&a, &b}, g);
  CHECK(grads[0].at(0, 1, 1, 1) == g.at(0, 1, 1, 1));
  CHECK(grads[1].at(0, 1, 1, 1) == g.at(0, 4, 1, 1));
}

TEST_CASE("graph with skip connection back-propagates through both paths") {
  std::mt19937 rng(9);
  Graph g;
  int a = g.add(std::make_unique<Conv2d>("c1", 1, 2, 3, 1, 1, rng), {g.input_node()});
  int b = g.add(std::make_unique<ReLU>(), {a});
  int c = g.add(std::make_unique<Concat>(), {b, a});  // a used twice
  g.add(std::make_unique<Conv2d>("c2", 4, 1, 1, 1, 0, rng), {c});

  Tensor x = random_tensor({1, 1, 4, 4});
  const Tensor& y = g.forward(x, true);
  Tensor coeff = random_tensor(y.shape());
  g.zero_grad();
  g.backward(coeff);

  // numeric check on a few weights of the first conv
  Param* w = g.params()[0];
  const float h = 1e-2f;
  auto eval = [&]() {
    const Tensor& out = g.forward(x, true);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.size(); ++i) acc += static_cast<double>(out[i]) * coeff[i];
    return acc;
  };
  for (std::size_t i = 0; i < std::min<std::size_t>(6, w->value.size()); ++i) {
    const float orig = w->value[i];
    w->value[i] = orig + h;
    const double jp = eval();
    w->value[i] = orig - h;
    const double jm = eval();
    w->value[i] = orig;
    const double fd = (jp - jm) / (2.0 * h);
    const double denom = std::max({std::abs(fd), std::abs(double(w->grad[i])), 0.05});
    CHECK(std::abs(w->grad[i] - fd) / denom < 2e-2);
  }
}
