#include <random>

#include "doctest.h"
#include "rehab/autodiff.hpp"
#include "test_util.hpp"

using namespace rehab;
using rehab::testing::gradient_check;
using rehab::testing::probe;
using rehab::testing::random_tensor;

namespace {
constexpr double kOpTolerance = 1e-4;
}

TEST_CASE("backward: sum and sum of squares") {
  Var w = parameter(Tensor({3}, std::vector<double>{1, -2, 5}));
  backward(sum(w));
  CHECK(w.grad().values() == std::vector<double>{1, 1, 1});

  Var v = parameter(Tensor({2}, std::vector<double>{1, 2}));
  backward(sum(v * v));
  CHECK(v.grad().values() == std::vector<double>{2, 4});
}

TEST_CASE("backward: repeated calls accumulate until zero_grad") {
  Var v = parameter(Tensor({2}, std::vector<double>{1, 2}));
  Var loss = sum(v * v);
  backward(loss);
  backward(loss);
  CHECK(v.grad().values() == std::vector<double>{4, 8});
  std::vector<Var> params{v};
  zero_grad(params);
  CHECK(v.grad().values() == std::vector<double>{0, 0});
  backward(loss);
  CHECK(v.grad().values() == std::vector<double>{2, 4});
}

TEST_CASE("backward: non-scalar loss is rejected") {
  Var v = parameter(Tensor({2}, 1.0));
  CHECK_THROWS_AS(backward(v * v), std::invalid_argument);
}

TEST_CASE("no-grad guard records no graph") {
  Var v = parameter(Tensor({2}, 1.0));
  NoGradGuard guard;
  Var y = v * v;
  CHECK_FALSE(y.requires_grad());
  CHECK(y.node()->parents.empty());
}

TEST_CASE("gradient shape equals value shape") {
  std::mt19937_64 rng(4);
  Var a = parameter(random_tensor({2, 3}, rng));
  Var b = parameter(random_tensor({3, 4}, rng));
  backward(sum(matmul(a, b)));
  CHECK(a.grad().shape() == a.shape());
  CHECK(b.grad().shape() == b.shape());
}

TEST_CASE("finite-difference checks for every differentiable op") {
  std::mt19937_64 rng(42);

  SUBCASE("add/sub/mul with broadcasting") {
    Var a = parameter(random_tensor({2, 3, 4}, rng));
    Var b = parameter(random_tensor({3, 1}, rng));
    const Tensor w = random_tensor({2, 3, 4}, rng);
    auto r = gradient_check([&] { return probe(mul(add(a, b), sub(a, b)), w); }, {a, b});
    CHECK(r.worst_relative_error < kOpTolerance);
  }
  SUBCASE("scale") {
    Var a = parameter(random_tensor({5}, rng));
    const Tensor w = random_tensor({5}, rng);
    CHECK(gradient_check([&] { return probe(scale(a, -2.5), w); }, {a}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("batched matmul with broadcast batch") {
    Var a = parameter(random_tensor({2, 3, 4}, rng));
    Var b = parameter(random_tensor({4, 2}, rng));
    const Tensor w = random_tensor({2, 3, 2}, rng);
    CHECK(gradient_check([&] { return probe(matmul(a, b), w); }, {a, b}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("permute, transpose, reshape") {
    Var a = parameter(random_tensor({2, 3, 4}, rng));
    const Tensor w = random_tensor({3, 4, 2}, rng);
    auto f = [&] { return probe(reshape(transpose_last(permute(a, {1, 0, 2})), {3, 4, 2}), w); };
    CHECK(gradient_check(f, {a}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("sum and mean over an axis") {
    Var a = parameter(random_tensor({3, 4, 2}, rng));
    const Tensor w1 = random_tensor({3, 2}, rng);
    const Tensor w2 = random_tensor({3, 4, 1}, rng);
    auto f = [&] { return add(probe(sum(a, 1), w1), probe(mean(a, 2, true), w2)); };
    CHECK(gradient_check(f, {a}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("softmax and log_softmax") {
    Var a = parameter(random_tensor({3, 5}, rng, -3, 3));
    const Tensor w = random_tensor({3, 5}, rng);
    CHECK(gradient_check([&] { return probe(softmax(a, 1), w); }, {a}).worst_relative_error < kOpTolerance);
    CHECK(gradient_check([&] { return probe(softmax(a, 0), w); }, {a}).worst_relative_error < kOpTolerance);
    CHECK(gradient_check([&] { return probe(log_softmax(a, 1), w); }, {a}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("relu away from the kink") {
    Tensor t = random_tensor({12}, rng);
    for (auto& v : t.data()) v += v > 0 ? 0.1 : -0.1;
    Var a = parameter(t);
    const Tensor w = random_tensor({12}, rng);
    CHECK(gradient_check([&] { return probe(relu(a), w); }, {a}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("conv2d with stride, dilation, padding and bias") {
    Var x = parameter(random_tensor({2, 3, 7, 4}, rng));
    Var k = parameter(random_tensor({2, 3, 3, 2}, rng));
    Var b = parameter(random_tensor({2}, rng));
    kernel::Conv2dOptions o;
    o.stride = {2, 1};
    o.dilation = {2, 1};
    o.padding = {2, 1};
    const Tensor w = random_tensor(kernel::conv2d(x.value(), k.value(), o).shape(), rng);
    CHECK(gradient_check([&] { return probe(conv2d(x, k, b, o), w); }, {x, k, b}).worst_relative_error <
          kOpTolerance);
  }
  SUBCASE("pointwise conv2d fast path") {
    Var x = parameter(random_tensor({2, 3, 4, 5}, rng));
    Var k = parameter(random_tensor({4, 3, 1, 1}, rng));
    const Tensor w = random_tensor({2, 4, 4, 5}, rng);
    CHECK(gradient_check([&] { return probe(conv2d(x, k, Var{}), w); }, {x, k}).worst_relative_error <
          kOpTolerance);
  }
  SUBCASE("temporal max-pool") {
    Var x = parameter(random_tensor({2, 2, 6, 3}, rng));
    kernel::Pool2dOptions o;
    o.kernel = {3, 1};
    o.padding = {1, 0};
    const Tensor w = random_tensor({2, 2, 6, 3}, rng);
    CHECK(gradient_check([&] { return probe(max_pool2d(x, o), w); }, {x}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("batch-norm in training and inference modes") {
    Var x = parameter(random_tensor({3, 2, 4, 2}, rng));
    Var g = parameter(random_tensor({2}, rng, 0.5, 1.5));
    Var b = parameter(random_tensor({2}, rng));
    BatchNormState st{Tensor({2}, 0.0), Tensor({2}, 1.0)};
    const Tensor w = random_tensor({3, 2, 4, 2}, rng);
    CHECK(gradient_check([&] { return probe(batch_norm(x, g, b, st, true), w); }, {x, g, b})
              .worst_relative_error < kOpTolerance);
    CHECK(gradient_check([&] { return probe(batch_norm(x, g, b, st, false), w); }, {x, g, b})
              .worst_relative_error < kOpTolerance);
  }
  SUBCASE("concat") {
    Var a = parameter(random_tensor({2, 1, 3}, rng));
    Var b = parameter(random_tensor({2, 2, 3}, rng));
    const Tensor w = random_tensor({2, 3, 3}, rng);
    const Var parts[] = {a, b};
    CHECK(gradient_check([&] { return probe(concat(parts, 1), w); }, {a, b}).worst_relative_error < kOpTolerance);
  }
  SUBCASE("lookup") {
    Var t = parameter(random_tensor({2, 4}, rng));
    const std::vector<std::size_t> idx{0, 1, 3, 1, 0, 2};
    const Tensor w = random_tensor({2, 2, 3}, rng);
    CHECK(gradient_check([&] { return probe(lookup(t, idx, 2, 3), w); }, {t}).worst_relative_error < kOpTolerance);
  }
}

TEST_CASE("batch-norm normalizes each channel in training mode") {
  std::mt19937_64 rng(8);
  Var x = constant(random_tensor({4, 3, 5, 2}, rng, -4, 9));
  Var g = constant(Tensor({3}, 1.0));
  Var b = constant(Tensor({3}, 0.0));
  BatchNormState st{Tensor({3}, 0.0), Tensor({3}, 1.0)};
  const Tensor y = batch_norm(x, g, b, st, true).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double s = 0, ss = 0;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 10; ++i) {
        const double v = y[(n * 3 + c) * 10 + i];
        s += v;
        ss += v * v;
      }
    CHECK(std::abs(s / 40) < 1e-12);
    CHECK(ss / 40 == doctest::Approx(1.0).epsilon(1e-4));
  }
  CHECK(st.running_mean[0] != 0.0);
}

TEST_CASE("lookup rejects indices outside the table") {
  Var t = parameter(Tensor({1, 3}));
  const std::vector<std::size_t> idx{0, 3};
  CHECK_THROWS_AS(lookup(t, idx, 1, 2), std::out_of_range);
}
