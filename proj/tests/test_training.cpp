#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "rehab/synth.hpp"
#include "rehab/training.hpp"
#include "test_util.hpp"

using namespace rehab;
using rehab::testing::gradient_check;
using rehab::testing::random_tensor;

namespace {

long double ce_oracle(const Tensor& z, const std::vector<std::size_t>& y) {
  const std::size_t n = z.dim(0), k = z.dim(1);
  long double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    long double s = 0;
    for (std::size_t c = 0; c < k; ++c) s += std::exp(static_cast<long double>(z[i * k + c]));
    total += std::log(s) - z[i * k + y[i]];
  }
  return total / n;
}

ModelConfig small_config() {
  ModelConfig c;
  c.num_layers = 2;
  c.channels = {8, 8};
  c.temporal_strides = {1, 1};
  c.frames = 12;
  return c;
}

}  // namespace

TEST_CASE("cross entropy: limits, uniform logits, extended-precision oracle") {
  const std::size_t y0[] = {2};
  CHECK(cross_entropy(constant(Tensor({1, 4}, {0, 0, 60, 0})), y0).value().item() < 1e-20);
  const std::size_t y1[] = {0, 3};
  CHECK(cross_entropy(constant(Tensor({2, 4}, 0.7)), y1).value().item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));

  std::mt19937_64 rng(1);
  std::uniform_int_distribution<std::size_t> cls(0, 3), rows(1, 12);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = rows(rng);
    const Tensor z = random_tensor({n, 4}, rng, -30, 30);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = cls(rng);
    const double got = cross_entropy(constant(z), y).value().item();
    REQUIRE(std::abs(got - static_cast<double>(ce_oracle(z, y))) < 1e-10);
  }
  Var z = parameter(random_tensor({5, 4}, rng, -3, 3));
  const std::vector<std::size_t> y = {0, 1, 2, 3, 1};
  CHECK(gradient_check([&] { return cross_entropy(z, y); }, {z}).worst_relative_error < 1e-6);
  const std::size_t bad[] = {4};
  CHECK_THROWS_AS(cross_entropy(constant(Tensor({1, 4})), bad), std::out_of_range);
}

TEST_CASE("adam: zero gradient, first step, scripted oracle on quadratics") {
  TrainConfig cfg;
  Var w = parameter(Tensor({3}, {1.0, -2.0, 0.5}));
  std::vector<Var> ps{w};
  AdamState st;
  zero_grad(ps);
  adam_step(ps, st, cfg);
  CHECK(w.value() == Tensor({3}, {1.0, -2.0, 0.5}));

  AdamState first;
  w.grad() = Tensor({3}, {0.3, -7.0, 1e-3});
  adam_step(ps, first, cfg);
  const double lr = cfg.learning_rate;
  CHECK(w.value()[0] == doctest::Approx(1.0 - lr).epsilon(1e-6));
  CHECK(w.value()[1] == doctest::Approx(-2.0 + lr).epsilon(1e-6));
  CHECK(w.value()[2] == doctest::Approx(0.5 - lr).epsilon(1e-4));

  // f(x, y) = a (x - cx)^2 + b (y - cy)^2, random a, b, center and start
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> coef(0.5, 5.0), pos(-4.0, 4.0);
  TrainConfig qc;
  qc.learning_rate = 0.1;
  for (int trial = 0; trial < 100; ++trial) {
    const double a = coef(rng), b = coef(rng), cx = pos(rng), cy = pos(rng);
    Var p = parameter(Tensor({2}, {pos(rng), pos(rng)}));
    std::vector<Var> params{p};
    AdamState s;
    double ox[2] = {p.value()[0], p.value()[1]}, om[2] = {0, 0}, ov[2] = {0, 0};
    const double k[2] = {a, b}, c[2] = {cx, cy};
    for (int t = 1; t <= 300; ++t) {
      zero_grad(params);
      const Var d = p - constant(Tensor({2}, {cx, cy}));
      backward(sum(mul(mul(d, d), constant(Tensor({2}, {a, b})))));
      adam_step(params, s, qc);
      for (int i = 0; i < 2; ++i) {
        const double g = 2 * k[i] * (ox[i] - c[i]);
        om[i] = 0.9 * om[i] + 0.1 * g;
        ov[i] = 0.999 * ov[i] + 0.001 * g * g;
        ox[i] -= 0.1 * (om[i] / (1 - std::pow(0.9, t))) / (std::sqrt(ov[i] / (1 - std::pow(0.999, t))) + 1e-8);
      }
      if (t == 100) {
        REQUIRE(std::abs(p.value()[0] - ox[0]) < 1e-10);
        REQUIRE(std::abs(p.value()[1] - ox[1]) < 1e-10);
      }
    }
    CHECK(std::abs(p.value()[0] - cx) < 1e-4);
    CHECK(std::abs(p.value()[1] - cy) < 1e-4);
  }
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), std::invalid_argument);
  c = {};
  CHECK(c.learning_rate == 0.0025);
  CHECK(c.batch_size == 10);
  CHECK(c.epochs == 600);
  CHECK_THROWS_AS(train(Corpus{}, small_config(), c), std::invalid_argument);
  Corpus mixed = generate_corpus(1, Exercise::torso_rotation, 0.0, 1);
  mixed.sequences.push_back(generate_corpus(1, Exercise::hiding_face, 0.0, 1).sequences[0]);
  CHECK_THROWS_AS(train(mixed, small_config(), c), std::invalid_argument);
}

TEST_CASE("gradients do not leak between steps") {
  Model m = make_model(small_config(), 3);
  const Corpus c = generate_corpus(2, Exercise::flank_stretch, 0.01, 4);
  const Tensor x = prepare_inputs(c, 12);
  const auto y = labels_of(c);
  auto params = m.weights.parameter_list();
  auto grads_once = [&] {
    zero_grad(params);
    backward(cross_entropy(forward(m, x, {false, false}).logits, y));
    std::vector<Tensor> g;
    for (auto& p : params) g.push_back(p.grad());
    return g;
  };
  const auto g1 = grads_once();
  const auto g2 = grads_once();
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g1[i] == g2[i]);
}

TEST_CASE("training: first-epoch loss near ln 4, determinism, loss decreases") {
  const Corpus c = generate_corpus(3, Exercise::torso_rotation, kEasyNoiseSigma, 5);
  TrainConfig tc;
  tc.epochs = 3;
  tc.seed = 6;
  const auto a = train(c, small_config(), tc);
  const auto b = train(c, small_config(), tc);
  REQUIRE(a.log.epochs.size() == 3);
  {
    Model fresh = make_model(small_config(), 1);
    const Tensor x = prepare_inputs(c, 12);
    CHECK(cross_entropy(forward(fresh, x).logits, labels_of(c)).value().item() == doctest::Approx(std::log(4.0)));
  }
  CHECK(std::abs(a.log.epochs[0].loss - std::log(4.0)) < 0.35);
  for (std::size_t e = 0; e < 3; ++e) CHECK(a.log.epochs[e].loss == b.log.epochs[e].loss);
  std::ostringstream sa, sb;
  save_checkpoint(sa, a.model);
  save_checkpoint(sb, b.model);
  CHECK(sa.str() == sb.str());

  std::ostringstream lines;
  write_json_lines(lines, a.log);
  CHECK(lines.str().rfind("{\"epoch\":1,\"loss\":", 0) == 0);

  // fixed batch, small lr: loss falls over the first 10 steps
  Model m = make_model(small_config(), 7);
  const Tensor x = prepare_inputs(c, 12);
  const auto y = labels_of(c);
  auto params = m.weights.parameter_list();
  AdamState st;
  TrainConfig small;
  small.learning_rate = 1e-3;
  std::vector<double> losses;
  for (int step = 0; step < 10; ++step) {
    zero_grad(params);
    const Var loss = cross_entropy(forward(m, x, {true, false}).logits, y);
    losses.push_back(loss.value().item());
    backward(loss);
    adam_step(params, st, small);
  }
  CHECK(losses.back() < losses.front());
}

TEST_CASE("desk model overfits a 20-sample separable corpus within 200 epochs") {
  const Corpus c = generate_corpus(5, Exercise::hiding_face, kEasyNoiseSigma, 8);
  TrainConfig tc;
  tc.epochs = 40;
  tc.seed = 9;
  ModelConfig mc = ModelConfig::desk();
  std::size_t reached = 0;
  const auto r = train(c, mc, tc, [&](const EpochRecord& e) {
    if (!reached && e.accuracy == 1.0) reached = e.epoch;
  });
  MESSAGE("100% training accuracy first reached at epoch " << reached);
  CHECK(reached > 0);
  CHECK(r.log.epochs.back().accuracy == 1.0);
}
