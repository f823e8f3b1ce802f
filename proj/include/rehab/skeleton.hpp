#pragma once

// The 25-joint Kinect V2 skeleton: joint list, bone graph, hop distances and
// the body-part partition used by the group-level attention terms.

#include <array>
#include <cstddef>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "rehab/tensor.hpp"

namespace rehab {

inline constexpr std::size_t kJointCount = 25;
inline constexpr std::size_t kGroupCount = 6;

/// Canonical Kinect V2 joint order. File formats and tensors use these indices.
enum Joint : std::size_t {
  SpineBase = 0,
  SpineMid,
  Neck,
  Head,
  ShoulderLeft,
  ElbowLeft,
  WristLeft,
  HandLeft,
  ShoulderRight,
  ElbowRight,
  WristRight,
  HandRight,
  HipLeft,
  KneeLeft,
  AnkleLeft,
  FootLeft,
  HipRight,
  KneeRight,
  AnkleRight,
  FootRight,
  SpineShoulder,
  HandTipLeft,
  ThumbLeft,
  HandTipRight,
  ThumbRight,
};

const std::array<std::string_view, kJointCount>& joint_names();
/// Index of a canonical joint name; throws std::invalid_argument if unknown.
std::size_t joint_index(std::string_view name);

using Edge = std::pair<std::size_t, std::size_t>;

struct SkeletonTopology {
  std::vector<std::string> joint_names;
  std::vector<Edge> edges;

  std::size_t joint_count() const noexcept { return joint_names.size(); }
  /// Throws if an index is out of range, an edge repeats or is a self-loop.
  void validate() const;
};

SkeletonTopology default_topology();

/// Parses `joints: a, b, ...` followed by one `a - b` edge per line. `#` starts a comment.
SkeletonTopology parse_topology(std::istream& in);

/// All-pairs hop distances on an unweighted undirected graph.
class SpdMatrix {
 public:
  SpdMatrix() = default;
  SpdMatrix(std::size_t n, std::vector<int> d);

  std::size_t size() const noexcept { return n_; }
  int operator()(std::size_t i, std::size_t j) const { return d_[i * n_ + j]; }
  int max_distance() const;
  const std::vector<int>& flat() const noexcept { return d_; }

 private:
  std::size_t n_ = 0;
  std::vector<int> d_;
};

/// Throws std::invalid_argument naming an unreachable joint when the graph is disconnected.
SpdMatrix shortest_path_distances(std::size_t joint_count, const std::vector<Edge>& edges);
SpdMatrix shortest_path_distances(const SkeletonTopology& topology);

bool is_connected(std::size_t joint_count, const std::vector<Edge>& edges);

struct HypergraphPartition {
  std::vector<std::string> group_names;
  std::vector<std::vector<std::size_t>> groups;

  std::size_t group_count() const noexcept { return groups.size(); }
  /// Throws unless the groups are disjoint and cover 0..joint_count-1.
  void validate(std::size_t joint_count = kJointCount) const;
  /// Group index per joint.
  std::vector<std::size_t> group_of(std::size_t joint_count = kJointCount) const;
};

HypergraphPartition default_partition();

/// Parses `group_name: joint_name, joint_name, ...` lines against `topology` and validates the result.
HypergraphPartition parse_partition(std::istream& in, const SkeletonTopology& topology);
HypergraphPartition load_partition(const std::string& path, const SkeletonTopology& topology);
std::string format_partition(const HypergraphPartition& p, const SkeletonTopology& topology);

/// One-hot [joints x groups] membership.
Tensor membership_matrix(const HypergraphPartition& p, std::size_t joint_count = kJointCount);

/// Membership with every column divided by its group size; M_norm^T x pools joints to group means.
Tensor mean_pooling_matrix(const HypergraphPartition& p, std::size_t joint_count = kJointCount);

}  // namespace rehab
