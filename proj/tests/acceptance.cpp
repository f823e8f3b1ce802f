// Acceptance run: one PASS/FAIL line per criterion, details indented below it.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include "cli.hpp"
#include "rehab/attention.hpp"
#include "rehab/evaluation.hpp"
#include "rehab/kernels.hpp"
#include "rehab/model.hpp"
#include "rehab/synth.hpp"
#include "rehab/training.hpp"
#include "test_util.hpp"

using namespace rehab;
using rehab::testing::gradient_check;
using rehab::testing::probe;
using rehab::testing::random_tensor;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Check {
  bool ok = true;
  std::vector<std::string> notes;

  void require(bool cond, const std::string& what) {
    if (!cond) {
      ok = false;
      notes.push_back("violated: " + what);
    }
  }
  void note(const std::string& s) { notes.push_back(s); }
};

std::string fmt(const char* f, double v) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void randomize(Model& m, std::uint64_t seed, double range) {
  std::mt19937_64 rng(seed);
  for (auto& p : m.weights.params()) p.var.value() = random_tensor(p.var.value().shape(), rng, -range, range);
  for (auto& b : m.weights.buffers()) {
    b.state.running_mean = random_tensor(b.state.running_mean.shape(), rng, -0.3, 0.3);
    b.state.running_var = random_tensor(b.state.running_var.shape(), rng, 0.5, 1.5);
  }
}

std::string stream_checkpoint(const Model& m) {
  std::ostringstream s;
  save_checkpoint(s, m);
  return s.str();
}

// Shared desk-scale run used by criteria 4 and 7.
constexpr std::uint64_t kSeed = 7;
constexpr std::size_t kEpochs = 40;

struct DeskRun {
  Model model;
  Corpus test;
  EvaluationReport report;
  double seconds = 0;
};

DeskRun train_desk(const SynthOptions& opt, double noise) {
  const Corpus corpus = generate_corpus(40, Exercise::torso_rotation, noise, kSeed, opt);
  const SplitPlan plan = make_split(corpus, 2, kSeed);
  TrainConfig tc;
  tc.epochs = kEpochs;
  tc.seed = kSeed;
  const auto t0 = Clock::now();
  TrainResult r = train(subset(corpus, plan.train), ModelConfig::desk(), tc);
  DeskRun run{std::move(r.model), subset(corpus, plan.test), {}, 0};
  run.report = evaluate(run.model, run.test);
  run.seconds = seconds_since(t0);
  return run;
}

std::optional<DeskRun> g_easy;
DeskRun& easy_run() {
  if (!g_easy) g_easy = train_desk(SynthOptions::easy(), kEasyNoiseSigma);
  return *g_easy;
}

std::string confusion_rows(const EvaluationReport& r) {
  std::string s;
  for (std::size_t t = 0; t < kClassCount; ++t) {
    s += std::string(t ? "\n" : "") + "    " + std::string(to_string(label_from_index(t))) + ":";
    for (double v : r.confusion[t]) s += fmt(" %.2f", v);
  }
  return s;
}

// ---------------------------------------------------------------- 1

Check gradient_integrity() {
  Check c;
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  constexpr double kOp = 1e-4;
  double worst = 0.0;
  std::size_t ops = 0;
  auto op = [&](const char* name, const std::function<Var()>& f, std::vector<Var> in) {
    const double e = gradient_check(f, std::move(in)).worst_relative_error;
    worst = std::max(worst, e);
    ++ops;
    c.require(e < kOp, std::string(name) + fmt(" relative error %.3g", e));
  };

  {
    Var a = parameter(random_tensor({2, 3, 4}, rng)), b = parameter(random_tensor({3, 1}, rng));
    const Tensor w = random_tensor({2, 3, 4}, rng);
    op("add/sub/mul", [&] { return probe(mul(add(a, b), sub(a, b)), w); }, {a, b});
    op("scale", [&] { return probe(scale(a, -1.7), w); }, {a});
  }
  {
    Var a = parameter(random_tensor({2, 3, 4}, rng)), b = parameter(random_tensor({4, 2}, rng));
    const Tensor w = random_tensor({2, 3, 2}, rng);
    op("matmul", [&] { return probe(matmul(a, b), w); }, {a, b});
  }
  {
    Var a = parameter(random_tensor({2, 3, 4}, rng));
    const Tensor w = random_tensor({3, 4, 2}, rng);
    op("permute/transpose/reshape", [&] { return probe(reshape(transpose_last(permute(a, {1, 0, 2})), {3, 4, 2}), w); },
       {a});
    const Tensor w1 = random_tensor({2, 4}, rng), w2 = random_tensor({2, 3, 1}, rng);
    op("sum/mean", [&] { return add(probe(sum(a, 1), w1), probe(mean(a, 2, true), w2)); }, {a});
  }
  {
    Var a = parameter(random_tensor({3, 5}, rng, -3, 3));
    const Tensor w = random_tensor({3, 5}, rng);
    op("softmax", [&] { return probe(softmax(a, 1), w); }, {a});
    op("log_softmax", [&] { return probe(log_softmax(a, 1), w); }, {a});
    const std::vector<std::size_t> y{1, 4, 0};
    op("cross_entropy", [&] { return cross_entropy(a, y); }, {a});
  }
  {
    Tensor t = random_tensor({12}, rng);
    for (auto& v : t.data()) v += v > 0 ? 0.1 : -0.1;
    Var a = parameter(t);
    const Tensor w = random_tensor({12}, rng);
    op("relu", [&] { return probe(relu(a), w); }, {a});
  }
  {
    Var x = parameter(random_tensor({2, 3, 7, 4}, rng)), k = parameter(random_tensor({2, 3, 3, 2}, rng)),
        b = parameter(random_tensor({2}, rng));
    kernel::Conv2dOptions o;
    o.stride = {2, 1};
    o.dilation = {2, 1};
    o.padding = {2, 1};
    const Tensor w = random_tensor(kernel::conv2d(x.value(), k.value(), o).shape(), rng);
    op("conv2d", [&] { return probe(conv2d(x, k, b, o), w); }, {x, k, b});
    Var k1 = parameter(random_tensor({4, 3, 1, 1}, rng));
    const Tensor w1 = random_tensor({2, 4, 7, 4}, rng);
    op("conv2d 1x1", [&] { return probe(conv2d(x, k1, Var{}), w1); }, {x, k1});
    kernel::Pool2dOptions p;
    p.kernel = {3, 1};
    p.padding = {1, 0};
    const Tensor wp = random_tensor({2, 3, 7, 4}, rng);
    op("max_pool2d", [&] { return probe(max_pool2d(x, p), wp); }, {x});
  }
  {
    Var x = parameter(random_tensor({3, 2, 4, 2}, rng)), g = parameter(random_tensor({2}, rng, 0.5, 1.5)),
        b = parameter(random_tensor({2}, rng));
    BatchNormState st{Tensor({2}, 0.0), Tensor({2}, 1.0)};
    const Tensor w = random_tensor({3, 2, 4, 2}, rng);
    op("batch_norm train", [&] { return probe(batch_norm(x, g, b, st, true), w); }, {x, g, b});
    op("batch_norm eval", [&] { return probe(batch_norm(x, g, b, st, false), w); }, {x, g, b});
  }
  {
    Var a = parameter(random_tensor({2, 1, 3}, rng)), b = parameter(random_tensor({2, 2, 3}, rng));
    const Tensor w = random_tensor({2, 3, 3}, rng);
    const Var parts[] = {a, b};
    op("concat", [&] { return probe(concat(parts, 1), w); }, {a, b});
    Var t = parameter(random_tensor({2, 4}, rng));
    const std::vector<std::size_t> idx{0, 1, 3, 1, 0, 2};
    const Tensor wl = random_tensor({2, 2, 3}, rng);
    op("lookup", [&] { return probe(lookup(t, idx, 2, 3), wl); }, {t});
  }
  {
    const ModelConfig cfg = ModelConfig::desk();
    const ModelGraph graph = build_graph(cfg);
    const std::size_t V = cfg.joints(), G = cfg.groups();
    Var q = parameter(random_tensor({2, V, 4}, rng)), k = parameter(random_tensor({2, V, 4}, rng));
    const Tensor w = random_tensor({2, V, V}, rng);
    op("j2j logits", [&] { return probe(attention_logits_j2j(q, k), w); }, {q, k});
    op("j2s logits", [&] { return probe(attention_logits_j2s(q, subgraph_keys(k, graph.pooling_t), graph.membership_t), w); },
       {q, k});
    Var pos = parameter(random_tensor({2, cfg.spd_max + 1}, rng));
    op("positional bias", [&] { return probe(positional_bias(graph, pos), w); }, {pos});
    Var att = parameter(random_tensor({2, G}, rng));
    op("attentive bias", [&] { return probe(attentive_bias(graph.membership_t, att), w); }, {att});
  }
  c.note(fmt("%.0f ops checked", static_cast<double>(ops)) + fmt(", worst per-op relative error %.3g", worst));

  // Full desk-scale model, randomized weights, BN in training mode; coordinates sampled per tensor.
  Model m = make_model(ModelConfig::desk(), 102);
  randomize(m, 103, 0.3);
  const Corpus data = generate_corpus(1, Exercise::torso_rotation, kEasyNoiseSigma, 104);
  const Corpus two = subset(data, std::vector<std::size_t>{0, 2});
  const Tensor x = prepare_inputs(two, m.config.frames);
  const auto y = labels_of(two);
  auto loss_fn = [&] { return cross_entropy(forward(m, x, {true, false}).logits, y); };

  auto params = m.weights.parameter_list();
  zero_grad(params);
  Var loss = loss_fn();
  const double f0 = loss.value().item();
  backward(loss);
  std::mt19937_64 pick(105);
  constexpr double eps = 1e-5;
  std::vector<double> analytic, numeric;
  std::size_t sampled = 0, kinks = 0;
  for (auto& p : params) {
    auto data_span = p.value().data();
    const auto& g = p.grad();
    std::vector<std::size_t> idx(data_span.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::shuffle(idx.begin(), idx.end(), pick);
    idx.resize(std::min<std::size_t>(idx.size(), 12));
    for (std::size_t i : idx) {
      const double saved = data_span[i];
      data_span[i] = saved + eps;
      const double up = loss_fn().value().item();
      data_span[i] = saved - eps;
      const double down = loss_fn().value().item();
      data_span[i] = saved;
      ++sampled;
      const double fwd = (up - f0) / eps, bwd = (f0 - down) / eps;
      if (std::abs(fwd - bwd) > 1e-5 + 1e-2 * std::max(std::abs(fwd), std::abs(bwd))) {
        ++kinks;
        continue;
      }
      analytic.push_back(g[i]);
      numeric.push_back((up - down) / (2 * eps));
    }
  }
  const double e2e = rehab::testing::relative_error(analytic, numeric);
  const double elapsed = seconds_since(t0);
  c.require(e2e < 1e-3, fmt("end-to-end relative error %.3g", e2e));
  c.require(kinks * 100 < sampled, "fewer than 1% kink coordinates");
  c.require(elapsed < 120.0, fmt("runtime %.1f s under 120 s", elapsed));
  c.note(fmt("desk model (%.0f params): ", static_cast<double>(m.weights.parameter_count())) +
         fmt("%.0f coordinates sampled over every tensor, ", static_cast<double>(sampled)) +
         fmt("%.0f kinks skipped, ", static_cast<double>(kinks)) + fmt("relative error %.3g", e2e));
  c.note(fmt("runtime %.1f s", elapsed));
  return c;
}

// ---------------------------------------------------------------- 2

Check attention_contracts() {
  Check c;
  Model m = make_model(ModelConfig::desk(), 201);
  randomize(m, 202, 0.3);
  const Corpus data = generate_corpus(1, Exercise::flank_stretch, kEasyNoiseSigma, 203);
  const auto result = forward(m, prepare_inputs(data, m.config.frames), {false, true});
  const std::size_t V = m.config.joints();
  double worst = 0.0;
  std::size_t rows = 0;
  for (const Tensor& a : result.attention)
    for (std::size_t r = 0; r < a.size() / V; ++r, ++rows) {
      double s = 0;
      for (std::size_t j = 0; j < V; ++j) s += a[r * V + j];
      worst = std::max(worst, std::abs(s - 1.0));
    }
  c.require(worst <= 1e-9, fmt("attention row sums within 1e-9 (worst %.3g)", worst));
  c.note(fmt("%.0f attention rows, ", static_cast<double>(rows)) + fmt("max |row sum - 1| = %.3g", worst));

  std::mt19937_64 rng(204);
  const ModelGraph& g = m.graph;
  const std::size_t H = m.config.num_heads;
  bool query_independent = true, symmetric = true;
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor ab = attentive_bias(g.membership_t, constant(random_tensor({H, m.config.groups()}, rng))).value();
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j)
          query_independent &= ab[(h * V + i) * V + j] == ab[(h * V + 0) * V + j];
    const Tensor pb = positional_bias(g, constant(random_tensor({H, m.config.spd_max + 1}, rng))).value();
    for (std::size_t h = 0; h < H; ++h)
      for (std::size_t i = 0; i < V; ++i)
        for (std::size_t j = 0; j < V; ++j) symmetric &= pb[(h * V + i) * V + j] == pb[(h * V + j) * V + i];
  }
  c.require(query_independent, "attentive bias identical across all query joints");
  c.require(symmetric, "positional bias symmetric");
  c.note("attentive bias exact across 25 queries; positional bias exactly symmetric (20 random tables each)");
  return c;
}

// ---------------------------------------------------------------- 3

Check oracle_equivalence() {
  Check c;
  std::mt19937_64 rng(301);
  auto dim = [&](std::size_t lo, std::size_t hi) { return lo + rng() % (hi - lo + 1); };
  constexpr int kCases = 100;
  double worst_mm = 0, worst_conv = 0, worst_sm = 0, worst_ce = 0, worst_adam = 0, worst_conv_min = 0;

  for (int t = 0; t < kCases; ++t) {
    const std::size_t n = dim(1, 6), k = dim(1, 6), p = dim(1, 6);
    const Tensor a = random_tensor({n, k}, rng), b = random_tensor({k, p}, rng);
    const Tensor r = kernel::matmul(a, b);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < p; ++j) {
        double s = 0;
        for (std::size_t q = 0; q < k; ++q) s += a[i * k + q] * b[q * p + j];
        worst_mm = std::max(worst_mm, std::abs(s - r[i * p + j]));
      }
  }
  for (int t = 0; t < kCases; ++t) {
    const std::size_t N = dim(1, 2), Ci = dim(1, 3), Co = dim(1, 3), H = dim(3, 8), W = dim(1, 5);
    kernel::Conv2dOptions o;
    o.stride = {dim(1, 2), dim(1, 2)};
    o.dilation = {dim(1, 2), 1};
    o.padding = {dim(0, 2), dim(0, 1)};
    const std::size_t kh = dim(1, 3), kw = dim(1, std::min<std::size_t>(3, W + 2 * o.padding[1]));
    if ((kh - 1) * o.dilation[0] + 1 > H + 2 * o.padding[0]) continue;
    const Tensor x = random_tensor({N, Ci, H, W}, rng), w = random_tensor({Co, Ci, kh, kw}, rng);
    const Tensor y = kernel::conv2d(x, w, o);
    const std::size_t Ho = y.dim(2), Wo = y.dim(3);
    for (std::size_t nn = 0; nn < N; ++nn)
      for (std::size_t co = 0; co < Co; ++co)
        for (std::size_t i = 0; i < Ho; ++i)
          for (std::size_t j = 0; j < Wo; ++j) {
            double s = 0;
            for (std::size_t ci = 0; ci < Ci; ++ci)
              for (std::size_t u = 0; u < kh; ++u)
                for (std::size_t v = 0; v < kw; ++v) {
                  const long hi = static_cast<long>(i * o.stride[0] + u * o.dilation[0]) - static_cast<long>(o.padding[0]);
                  const long wi = static_cast<long>(j * o.stride[1] + v * o.dilation[1]) - static_cast<long>(o.padding[1]);
                  if (hi < 0 || wi < 0 || hi >= static_cast<long>(H) || wi >= static_cast<long>(W)) continue;
                  s += x[((nn * Ci + ci) * H + hi) * W + wi] * w[((co * Ci + ci) * kh + u) * kw + v];
                }
            worst_conv = std::max(worst_conv, std::abs(s - y[((nn * Co + co) * Ho + i) * Wo + j]));
          }
    ++worst_conv_min;
  }
  for (int t = 0; t < kCases; ++t) {
    const std::size_t rows = dim(1, 5), cols = dim(1, 8);
    const Tensor z = random_tensor({rows, cols}, rng, -20, 20);
    const Tensor s = kernel::softmax(z, 1);
    for (std::size_t i = 0; i < rows; ++i) {
      long double mx = -1e300L, tot = 0;
      for (std::size_t j = 0; j < cols; ++j) mx = std::max<long double>(mx, z[i * cols + j]);
      for (std::size_t j = 0; j < cols; ++j) tot += std::exp(static_cast<long double>(z[i * cols + j]) - mx);
      for (std::size_t j = 0; j < cols; ++j) {
        const long double o = std::exp(static_cast<long double>(z[i * cols + j]) - mx) / tot;
        worst_sm = std::max(worst_sm, static_cast<double>(std::abs(o - static_cast<long double>(s[i * cols + j]))));
      }
    }
  }
  bool spd_exact = true;
  for (int t = 0; t < kCases; ++t) {
    const std::size_t n = dim(2, 25);
    std::vector<Edge> edges;
    std::set<std::pair<std::size_t, std::size_t>> seen;
    for (std::size_t v = 1; v < n; ++v) {
      const std::size_t u = rng() % v;
      edges.push_back({u, v});
      seen.insert({u, v});
    }
    for (std::size_t extra = rng() % 4; extra > 0; --extra) {
      std::size_t a = rng() % n, b = rng() % n;
      if (a > b) std::swap(a, b);
      if (a != b && seen.insert({a, b}).second) edges.push_back({a, b});
    }
    std::vector<int> fw(n * n, 1 << 20);
    for (std::size_t i = 0; i < n; ++i) fw[i * n + i] = 0;
    for (const auto& e : edges) fw[e.first * n + e.second] = fw[e.second * n + e.first] = 1;
    for (std::size_t k = 0; k < n; ++k)
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) fw[i * n + j] = std::min(fw[i * n + j], fw[i * n + k] + fw[k * n + j]);
    spd_exact &= shortest_path_distances(n, edges).flat() == fw;
  }
  for (int t = 0; t < kCases; ++t) {
    const std::size_t n = dim(1, 6);
    const Tensor z = random_tensor({n, 4}, rng, -10, 10);
    std::vector<std::size_t> y(n);
    for (auto& v : y) v = rng() % 4;
    long double total = 0;
    for (std::size_t i = 0; i < n; ++i) {
      long double s = 0;
      for (std::size_t k = 0; k < 4; ++k) s += std::exp(static_cast<long double>(z[i * 4 + k]));
      total += std::log(s) - z[i * 4 + y[i]];
    }
    const double got = cross_entropy(constant(z), y).value().item();
    worst_ce = std::max(worst_ce, static_cast<double>(std::abs(total / n - got)));
  }
  bool adam_converged = true;
  for (int t = 0; t < kCases; ++t) {
    const double a11 = 0.5 + (rng() % 1000) / 400.0, a22 = 0.5 + (rng() % 1000) / 400.0;
    const double a12 = ((rng() % 1000) / 1000.0 - 0.5) * std::sqrt(a11 * a22);
    const Tensor A({2, 2}, {a11, a12, a12, a22});
    const Tensor target = random_tensor({2, 1}, rng);
    Var xv = parameter(random_tensor({2, 1}, rng, -2, 2));
    std::array<double, 2> ox{xv.value()[0], xv.value()[1]}, om{}, ov{};
    TrainConfig cfg;
    cfg.learning_rate = 0.1;
    AdamState st;
    std::vector<Var> ps{xv};
    for (int step = 1; step <= 300; ++step) {
      zero_grad(ps);
      const Var d = xv - constant(target);
      backward(scale(sum(mul(d, matmul(constant(A), d))), 0.5));
      adam_step(ps, st, cfg);
      const double gx0 = a11 * (ox[0] - target[0]) + a12 * (ox[1] - target[1]);
      const double gx1 = a12 * (ox[0] - target[0]) + a22 * (ox[1] - target[1]);
      const double g[2] = {gx0, gx1};
      for (int i = 0; i < 2; ++i) {
        om[i] = 0.9 * om[i] + 0.1 * g[i];
        ov[i] = 0.999 * ov[i] + 0.001 * g[i] * g[i];
        ox[i] -= 0.1 * (om[i] / (1 - std::pow(0.9, step))) / (std::sqrt(ov[i] / (1 - std::pow(0.999, step))) + 1e-8);
      }
      if (step == 100)
        for (int i = 0; i < 2; ++i) worst_adam = std::max(worst_adam, std::abs(ox[i] - xv.value()[i]));
    }
    for (int i = 0; i < 2; ++i) adam_converged &= std::abs(xv.value()[i] - target[i]) < 1e-4;
  }

  c.require(worst_mm <= 1e-12, fmt("matmul within 1e-12 (%.3g)", worst_mm));
  c.require(worst_conv <= 1e-10 && worst_conv_min >= kCases * 0.8, fmt("conv2d within 1e-10 (%.3g)", worst_conv));
  c.require(worst_sm <= 1e-12, fmt("softmax within 1e-12 (%.3g)", worst_sm));
  c.require(spd_exact, "SPD equals Floyd-Warshall");
  c.require(worst_ce <= 1e-10, fmt("cross-entropy within 1e-10 (%.3g)", worst_ce));
  c.require(worst_adam <= 1e-10, fmt("Adam trajectory within 1e-10 (%.3g)", worst_adam));
  c.require(adam_converged, "Adam reaches every minimizer within 1e-4 by step 300");
  c.note(fmt("matmul %.2g", worst_mm) + fmt(", conv2d %.2g", worst_conv) +
         fmt(" (%.0f shapes)", worst_conv_min) + fmt(", softmax %.2g", worst_sm) + ", SPD exact" +
         fmt(", cross-entropy %.2g", worst_ce) + fmt(", Adam@100 %.2g", worst_adam));
  return c;
}

// ---------------------------------------------------------------- 4

Check synthetic_classification() {
  Check c;
  DeskRun& easy = easy_run();
  c.require(easy.report.accuracy >= 0.95, fmt("easy test accuracy %.3f >= 0.95", easy.report.accuracy));
  c.require(easy.seconds < 600.0, fmt("easy run %.0f s under 600 s", easy.seconds));
  c.note(fmt("easy: %.0f epochs, ", kEpochs) + fmt("test accuracy %.4f", easy.report.accuracy) +
         fmt(" on %.0f held-out samples, ", static_cast<double>(easy.report.samples)) + fmt("%.0f s", easy.seconds));

  DeskRun hard = train_desk(SynthOptions::hard(), kHardNoiseSigma);
  c.require(hard.report.accuracy > 0.25, fmt("hard test accuracy %.3f > 0.25", hard.report.accuracy));
  c.note(fmt("hard: test accuracy %.4f", hard.report.accuracy) + fmt(", macro-F1 %.4f, ", hard.report.macro_f1) +
         fmt("%.0f s; confusion (rows true, cols predicted):", hard.seconds));
  c.note(confusion_rows(hard.report).substr(0));
  double into_correct = 0, between_errors = 0;
  for (std::size_t t = 1; t < kClassCount; ++t) {
    into_correct += hard.report.counts[t][0];
    for (std::size_t p = 1; p < kClassCount; ++p)
      if (p != t) between_errors += hard.report.counts[t][p];
  }
  c.note(fmt("error samples predicted as correct: %.0f", into_correct) +
         fmt(", predicted as another error: %.0f", between_errors));
  return c;
}

// ---------------------------------------------------------------- 5

Check scenario_semantics() {
  Check c;
  std::mt19937_64 rng(501);
  Corpus corpus;
  auto add = [&](Group g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      SkeletonSequence s;
      s.frames = 2;
      s.coords.assign(2 * kJointCount * 3, 0.0);
      s.label = label_from_index(rng() % 4);
      s.group = g;
      corpus.sequences.push_back(std::move(s));
    }
  };
  add(Group::patients, 10);
  add(Group::healthy, 20);
  add(Group::simulated, 20);

  bool s1 = true, s2 = true, s3 = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const SplitPlan p1 = make_split(corpus, 1, seed);
    for (std::size_t i : p1.test) s1 &= corpus.sequences[i].group != Group::simulated;
    s1 &= p1.test.size() == 30 && p1.train.size() == 20;

    const SplitPlan p2 = make_split(corpus, 2, seed);
    const ClassCounts all = corpus.class_counts();
    s2 &= p2.test.size() == 10 && p2.train.size() == 40;
    for (std::size_t k = 0; k < kClassCount; ++k)
      s2 &= std::abs(static_cast<double>(p2.test_counts[k]) - 0.2 * static_cast<double>(all[k])) < 1.0;

    const SplitPlan p3 = make_split(corpus, 3, seed);
    std::size_t g1 = 0, drawn = 0;
    ClassCounts pool{}, pool_drawn{};
    for (std::size_t i = 10; i < 50; ++i) ++pool[class_index(corpus.sequences[i].label)];
    for (std::size_t i : p3.test) {
      if (corpus.sequences[i].group == Group::patients) {
        ++g1;
      } else {
        ++drawn;
        ++pool_drawn[class_index(corpus.sequences[i].label)];
      }
    }
    s3 &= g1 == 10 && drawn == 6 && p3.train.size() == 34;
    for (std::size_t k = 0; k < kClassCount; ++k)
      s3 &= std::abs(static_cast<double>(pool_drawn[k]) - 0.15 * static_cast<double>(pool[k])) < 1.0;
  }
  c.require(s1, "scenario 1 test has no group-3 sample (30 test / 20 train)");
  c.require(s2, "scenario 2 is 40/10 with per-class counts within one sample");
  c.require(s3, "scenario 3 test = 10 from group 1 + 6 of 40 from groups 2 and 3");
  c.note("groups 10/20/20, 50 seeds per scenario, counts enumerated");
  return c;
}

// ---------------------------------------------------------------- 6

Check confusion_contract() {
  Check c;
  std::mt19937_64 rng(601);
  bool ok = true;
  std::size_t absent_rows = 0;
  auto check_report = [&](const EvaluationReport& r) {
    for (std::size_t t = 0; t < kClassCount; ++t) {
      double s = 0;
      for (double v : r.confusion[t]) s += v;
      if (r.absent[t]) {
        ++absent_rows;
        for (double v : r.confusion[t]) ok &= v == 0.0;
      } else {
        ok &= std::abs(s - 1.0) <= 1e-9;
      }
    }
  };
  for (int t = 0; t < 500; ++t) {
    const std::size_t n = 1 + rng() % 50;
    const std::size_t missing = rng() % 5;  // 4 means none missing
    std::vector<std::size_t> truth, pred;
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t y = rng() % 4;
      if (y == missing) y = (y + 1) % 4;
      truth.push_back(y);
      pred.push_back(rng() % 4);
    }
    check_report(evaluate_predictions(truth, pred));
  }
  check_report(easy_run().report);
  c.require(ok, "non-absent rows sum to 1 within 1e-9, absent rows all zero");
  c.require(absent_rows > 0, "absent-class rows exercised");
  c.note(fmt("500 random reports plus the trained model's report; %.0f absent rows", static_cast<double>(absent_rows)));
  return c;
}

// ---------------------------------------------------------------- 7

Check joint_importance_check() {
  Check c;
  DeskRun& easy = easy_run();
  const AttentionSummary s = collect_attention(easy.model, easy.test);
  const auto imp = joint_importance(s.all);
  const auto groups = group_mean_importance(imp, easy.model.config.partition);
  const auto& names = easy.model.config.partition.group_names;
  auto group_id = [&](const char* n) { return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin()); };
  const double arm = 0.5 * (groups[group_id("left_forearm_hand")] + groups[group_id("right_forearm_hand")]);
  const double leg = 0.5 * (groups[group_id("left_leg")] + groups[group_id("right_leg")]);
  constexpr double kMargin = 1.2;
  c.require(arm > kMargin * leg, fmt("arm mean > %.1f x leg mean", kMargin));
  const AttentionMap uniform{Tensor({kJointCount, kJointCount}, 1.0 / kJointCount)};
  bool exact = true;
  for (double v : joint_importance(uniform)) exact &= v == 1.0 / kJointCount;
  c.require(exact, "uniform attention gives exactly uniform importance");
  c.note(fmt("arm-group mean %.5f", arm) + fmt(", leg-group mean %.5f", leg) + fmt(" (ratio %.2f)", arm / leg));
  std::string all = "    group means:";
  for (std::size_t g = 0; g < groups.size(); ++g) all += " " + names[g] + fmt("=%.4f", groups[g]);
  c.note(all);
  return c;
}

// ---------------------------------------------------------------- 8

Check reproducibility() {
  Check c;
  const fs::path root = fs::temp_directory_path() / "rehab_acceptance_repro";
  fs::remove_all(root);
  std::ostringstream sink;
  auto pipeline = [&](const std::string& tag) {
    const std::string d = (root / tag).string();
    const std::vector<std::vector<std::string>> steps{
        {"synth", "--exercise", "hiding_face", "--per-class", "10", "--seed", "11", "--out", d + "/corpus"},
        {"train", "--corpus", d + "/corpus", "--epochs", "3", "--seed", "11", "--out", d + "/runs"},
        {"eval", "--checkpoint", d + "/runs/hiding_face-s2-seed11.ckpt", "--corpus", d + "/corpus", "--seed", "11",
         "--report-dir", d + "/reports"},
        {"analyze", "--checkpoint", d + "/runs/hiding_face-s2-seed11.ckpt", "--corpus", d + "/corpus", "--seed", "11",
         "--report-dir", d + "/reports"}};
    for (const auto& s : steps)
      if (rehab::cli::run(s, sink, sink) != 0) throw std::runtime_error("pipeline step failed: " + s.front());
  };
  pipeline("a");
  pipeline("b");
  std::size_t files = 0;
  bool identical = true;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), root / "a");
    identical &= fs::exists(root / "b" / rel) && slurp(e.path()) == slurp(root / "b" / rel);
    ++files;
  }
  c.require(identical, "every artifact bit-identical across runs");
  for (const char* must : {"runs/hiding_face-s2-seed11.ckpt", "reports/hiding_face-s2-seed11.json",
                           "reports/importance.svg", "reports/importance.txt"})
    c.require(fs::exists(root / "a" / must), std::string("artifact ") + must);

  TrainConfig tc;
  tc.epochs = 2;
  tc.seed = 12;
  const Corpus corpus = generate_corpus(5, Exercise::torso_rotation, kEasyNoiseSigma, 12);
  const std::string ck1 = stream_checkpoint(train(corpus, ModelConfig::desk(), tc).model);
  const std::string ck2 = stream_checkpoint(train(corpus, ModelConfig::desk(), tc).model);
  c.require(ck1 == ck2, "desk-scale checkpoints identical");
  c.note(fmt("%.0f files compared (corpus, checkpoint, log, reports, renders)", static_cast<double>(files)) +
         "; desk-scale checkpoint identical");
  fs::remove_all(root);
  return c;
}

// ---------------------------------------------------------------- 9

Check round_trips() {
  Check c;
  const fs::path root = fs::temp_directory_path() / "rehab_acceptance_rt";
  fs::remove_all(root);
  const Corpus corpus = generate_corpus(3, Exercise::flank_stretch, kEasyNoiseSigma, 901);
  save_corpus(root / "a", corpus);
  save_corpus(root / "b", load_corpus(root / "a"));
  bool same = true;
  std::size_t n = 0;
  for (const auto& e : fs::directory_iterator(root / "a")) {
    same &= slurp(e.path()) == slurp(root / "b" / e.path().filename());
    ++n;
  }
  c.require(same && n == corpus.size(), "corpus save -> load -> save byte-identical");

  Model m = make_model(ModelConfig::desk(), 902);
  randomize(m, 903, 0.5);
  const std::string first = stream_checkpoint(m);
  std::istringstream in(first);
  c.require(stream_checkpoint(load_checkpoint(in)) == first, "checkpoint save -> load -> save byte-identical");

  const std::string golden_dir = REHAB_SOURCE_DIR "/tests/golden/";
  const std::string seq = slurp(golden_dir + "sequence_v1.skel");
  c.require(!seq.empty() && format_sequence(load_sequence(golden_dir + "sequence_v1.skel")) == seq,
            "pinned sequence file re-emits identically");
  const std::string ck = slurp(golden_dir + "checkpoint_v1.ckpt");
  c.require(!ck.empty() && stream_checkpoint(load_checkpoint(golden_dir + "checkpoint_v1.ckpt")) == ck,
            "pinned checkpoint re-emits identically");
  c.note(fmt("%.0f corpus files, desk checkpoint and 2 pinned golden files", static_cast<double>(n)));
  fs::remove_all(root);
  return c;
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Check()>>> criteria{
      {"gradient integrity", gradient_integrity},
      {"attention contracts", attention_contracts},
      {"oracle equivalence", oracle_equivalence},
      {"synthetic classification", synthetic_classification},
      {"scenario semantics", scenario_semantics},
      {"confusion-matrix contract", confusion_contract},
      {"joint importance", joint_importance_check},
      {"reproducibility", reproducibility},
      {"format round-trips", round_trips},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].second();
    } catch (const std::exception& e) {
      c.ok = false;
      c.notes.push_back(std::string("exception: ") + e.what());
    }
    failed += !c.ok;
    std::cout << (c.ok ? "PASS" : "FAIL") << "  criterion " << i + 1 << ": " << criteria[i].first << '\n';
    for (const auto& n : c.notes) std::cout << (n.rfind("    ", 0) == 0 ? "" : "    ") << n << '\n';
    std::cout << std::flush;
  }
  std::cout << (failed ? "acceptance: " + std::to_string(failed) + " criterion(s) failed" : "acceptance: all passed")
            << '\n';
  return failed ? 1 : 0;
}
