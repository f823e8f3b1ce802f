#include "rehab/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>

#include <json.hpp>

#include "rehab/synth.hpp"

namespace rehab {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("train config: " + m); };
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
  if (epochs < 1) fail("epochs must be >= 1");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) fail("epsilon must be > 0");
}

Var cross_entropy(const Var& logits, std::span<const std::size_t> labels) {
  const Tensor& z = logits.value();
  if (z.rank() != 2) throw ShapeError("cross_entropy expects [N, K] logits, got " + to_string(z.shape()));
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " + std::to_string(n));
  for (auto l : labels)
    if (l >= k) throw std::out_of_range("cross_entropy: label " + std::to_string(l) + " outside [0, " + std::to_string(k) + ")");
  const Tensor lsm = kernel::log_softmax(z, 1);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) total -= lsm[i * k + labels[i]];
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  return make_op(Tensor::scalar(total / static_cast<double>(n)), {logits}, [lsm, lab, n, k](Node& self) {
    Tensor& g = self.parent_grad(0);
    const double up = self.grad.item() / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c)
        g[i * k + c] += up * (std::exp(lsm[i * k + c]) - (c == lab[i] ? 1.0 : 0.0));
  });
}

void adam_step(std::span<Var> params, AdamState& state, const TrainConfig& config) {
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.shape());
      state.v.emplace_back(p.shape());
    }
  }
  if (state.m.size() != params.size()) throw std::invalid_argument("adam_step: state does not match parameters");
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Node* node = params[i].node();
    if (node->grad.empty()) node->ensure_grad();
    auto w = node->value.data();
    auto g = node->grad.data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      const double mh = m[j] / c1;
      const double vh = v[j] / c2;
      w[j] -= config.learning_rate * mh / (std::sqrt(vh) + config.epsilon);
    }
  }
}

Tensor prepare_inputs(std::span<const SkeletonSequence* const> seqs, std::size_t frames) {
  std::vector<SkeletonSequence> ready;
  ready.reserve(seqs.size());
  for (const auto* s : seqs) ready.push_back(center_on_spine_base(interpolate(*s, frames)));
  std::vector<const SkeletonSequence*> ptrs;
  for (const auto& s : ready) ptrs.push_back(&s);
  return batch_tensor(ptrs);
}

Tensor prepare_inputs(const Corpus& corpus, std::size_t frames) {
  std::vector<const SkeletonSequence*> ptrs;
  for (const auto& s : corpus.sequences) ptrs.push_back(&s);
  return prepare_inputs(ptrs, frames);
}

std::vector<std::size_t> labels_of(const Corpus& corpus) {
  std::vector<std::size_t> out;
  for (const auto& s : corpus.sequences) out.push_back(class_index(s.label));
  return out;
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["epoch"] = r.epoch;
  j["loss"] = r.loss;
  j["accuracy"] = r.accuracy;
  return j.dump();
}

void write_json_lines(std::ostream& out, const TrainLog& log) {
  for (const auto& r : log.epochs) out << to_json_line(r) << '\n';
}

namespace {

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> rows) {
  Shape s = x.shape();
  const std::size_t per = x.size() / s[0];
  s[0] = rows.size();
  Tensor out(s);
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(rows[i] * per), per, dst.begin() + static_cast<std::ptrdiff_t>(i * per));
  return out;
}

}  // namespace

TrainResult train(const Corpus& corpus, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  config.validate();
  if (corpus.empty()) throw std::invalid_argument("train: empty corpus");
  corpus.single_exercise();

  TrainResult result{make_model(model_config, derive_seed(config.seed, 0)), {}};
  Model& model = result.model;
  const Tensor inputs = prepare_inputs(corpus, model_config.frames);
  const std::vector<std::size_t> labels = labels_of(corpus);
  std::vector<Var> params = model.weights.parameter_list();
  AdamState adam;
  std::mt19937_64 rng(derive_seed(config.seed, 1));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle) std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t stop = std::min(order.size(), start + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + start, stop - start);
      std::vector<std::size_t> y;
      for (auto i : idx) y.push_back(labels[i]);
      zero_grad(params);
      const Var logits = forward(model, gather_rows(inputs, idx), {true, false}).logits;
      const Var loss = cross_entropy(logits, y);
      backward(loss);
      adam_step(params, adam, config);
      loss_sum += loss.value().item() * static_cast<double>(idx.size());
      const Tensor& z = logits.value();
      const std::size_t k = z.dim(1);
      for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto row = z.data().subspan(i * k, k);
        correct += static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()) == y[i];
      }
    }
    EpochRecord rec{epoch, loss_sum / static_cast<double>(order.size()),
                    static_cast<double>(correct) / static_cast<double>(order.size())};
    result.log.epochs.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  return result;
}

}  // namespace rehab
