#pragma once

// Joint importance from attention weights: average the per-frame V x V
// softmax maps over layers, heads, frames and sequences, then sum columns
// (how much each key joint is attended to overall).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rehab/model.hpp"
#include "rehab/sequence.hpp"
#include "rehab/skeleton.hpp"
#include "rehab/tensor.hpp"

namespace rehab {

/// Mean attention from query joint (row) to key joint (column), [V, V].
struct AttentionMap {
  Tensor m;
  std::size_t joints() const { return m.dim(0); }
};

/// Streaming mean over V x V slices of any number of [..., V, V] tensors.
class AttentionAccumulator {
 public:
  void add(const Tensor& attention);
  std::size_t slices() const noexcept { return slices_; }
  /// Throws std::invalid_argument when nothing was added.
  AttentionMap mean() const;

 private:
  std::size_t v_ = 0;
  std::size_t slices_ = 0;
  std::vector<long double> sum_;
};

/// Arithmetic mean over every non-joint axis of the stack. Throws on empty input or mixed V.
AttentionMap average_attention(std::span<const Tensor> stack);

/// Column sums normalized to a distribution over joints.
std::vector<double> joint_importance(const AttentionMap& map);

/// Column-sum difference correct - incorrect, unnormalized. Throws std::invalid_argument on shape mismatch.
std::vector<double> importance_contrast(const AttentionMap& correct, const AttentionMap& incorrect);

/// Mean score of the joints in each partition group.
std::vector<double> group_mean_importance(std::span<const double> importance, const HypergraphPartition& partition);

struct AttentionSummary {
  AttentionMap all;
  AttentionMap correct;     // sequences whose true label is correct
  AttentionMap incorrect;   // true label error1..3
  std::size_t correct_count = 0;
  std::size_t incorrect_count = 0;
};

/// Runs inference over `corpus` and averages the attention of every layer, grouped by true label.
/// Throws std::invalid_argument on an empty corpus; a missing side falls back to a zero map.
AttentionSummary collect_attention(Model& model, const Corpus& corpus);

struct ImportanceRow {
  std::string label;
  std::vector<double> importance;
  /// Optional correct - incorrect contrast; empty when not computed.
  std::vector<double> contrast;
};

/// One row per exercise, one column per joint labelled by index and name, shaded by score,
/// with a group legend. Deterministic plain text.
std::string render_importance_text(std::span<const ImportanceRow> rows, const SkeletonTopology& topology,
                                   const HypergraphPartition& partition);
/// Same layout as an SVG heatmap; columns are tinted by partition group.
std::string render_importance_svg(std::span<const ImportanceRow> rows, const SkeletonTopology& topology,
                                  const HypergraphPartition& partition);

inline constexpr std::string_view kImportanceSchema = "rehab-importance/1";

std::string importance_to_json(std::span<const ImportanceRow> rows, const SkeletonTopology& topology,
                               const HypergraphPartition& partition, std::span<const AttentionMap> maps = {});

}  // namespace rehab
