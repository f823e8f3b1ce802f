#pragma once

// Cross-entropy training of one classifier per exercise with Adam.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rehab/autodiff.hpp"
#include "rehab/model.hpp"
#include "rehab/sequence.hpp"

namespace rehab {

struct TrainConfig {
  double learning_rate = 2.5e-3;
  std::size_t epochs = 600;
  std::size_t batch_size = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool shuffle = true;

  void validate() const;
};

/// Mean over the batch of -log softmax(logits)[label]. Throws std::out_of_range for a bad label.
Var cross_entropy(const Var& logits, std::span<const std::size_t> labels);

struct AdamState {
  std::size_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

/// One bias-corrected Adam update from the current gradients. Parameters without a gradient count as zero.
void adam_step(std::span<Var> params, AdamState& state, const TrainConfig& config);

/// Resamples to `frames`, centers every frame on SpineBase and stacks to [N, C, T, V].
Tensor prepare_inputs(std::span<const SkeletonSequence* const> seqs, std::size_t frames);
Tensor prepare_inputs(const Corpus& corpus, std::size_t frames);
std::vector<std::size_t> labels_of(const Corpus& corpus);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double accuracy = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
};

/// {"epoch":1,"loss":...,"accuracy":...}
std::string to_json_line(const EpochRecord& r);
void write_json_lines(std::ostream& out, const TrainLog& log);

struct TrainResult {
  Model model;
  TrainLog log;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

/// Trains from seed-derived init with per-epoch seeded shuffling. The corpus must be nonempty
/// and hold a single exercise.
TrainResult train(const Corpus& corpus, const ModelConfig& model_config, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

}  // namespace rehab
