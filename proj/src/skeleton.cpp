#include "rehab/skeleton.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <istream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace rehab {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto comma = s.find(',', start);
    const auto item = trim(s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (!item.empty()) out.push_back(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string strip_comment(const std::string& line) {
  const auto hash = line.find('#');
  return trim(hash == std::string::npos ? line : line.substr(0, hash));
}

}  // namespace

const std::array<std::string_view, kJointCount>& joint_names() {
  static constexpr std::array<std::string_view, kJointCount> names{
      "SpineBase",  "SpineMid",   "Neck",      "Head",         "ShoulderLeft", "ElbowLeft",  "WristLeft",
      "HandLeft",   "ShoulderRight", "ElbowRight", "WristRight", "HandRight",  "HipLeft",    "KneeLeft",
      "AnkleLeft",  "FootLeft",   "HipRight",  "KneeRight",    "AnkleRight",   "FootRight",  "SpineShoulder",
      "HandTipLeft", "ThumbLeft", "HandTipRight", "ThumbRight"};
  return names;
}

std::size_t joint_index(std::string_view name) {
  const auto& names = joint_names();
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown joint name '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

void SkeletonTopology::validate() const {
  std::set<Edge> seen;
  for (auto [a, b] : edges) {
    if (a >= joint_count() || b >= joint_count()) {
      throw std::invalid_argument("edge (" + std::to_string(a) + "," + std::to_string(b) + ") out of range");
    }
    if (a == b) throw std::invalid_argument("self-loop on joint " + joint_names[a]);
    if (!seen.insert(std::minmax(a, b)).second) {
      throw std::invalid_argument("duplicate edge " + joint_names[a] + " - " + joint_names[b]);
    }
  }
}

SkeletonTopology default_topology() {
  SkeletonTopology t;
  for (auto n : joint_names()) t.joint_names.emplace_back(n);
  t.edges = {
      {SpineBase, SpineMid},      {SpineMid, SpineShoulder},   {SpineShoulder, Neck},   {Neck, Head},
      {SpineShoulder, ShoulderLeft}, {ShoulderLeft, ElbowLeft}, {ElbowLeft, WristLeft},  {WristLeft, HandLeft},
      {HandLeft, HandTipLeft},    {HandLeft, ThumbLeft},       {SpineShoulder, ShoulderRight},
      {ShoulderRight, ElbowRight}, {ElbowRight, WristRight},   {WristRight, HandRight}, {HandRight, HandTipRight},
      {HandRight, ThumbRight},    {SpineBase, HipLeft},        {HipLeft, KneeLeft},     {KneeLeft, AnkleLeft},
      {AnkleLeft, FootLeft},      {SpineBase, HipRight},       {HipRight, KneeRight},   {KneeRight, AnkleRight},
      {AnkleRight, FootRight},
  };
  return t;
}

SkeletonTopology parse_topology(std::istream& in) {
  SkeletonTopology t;
  std::string line;
  std::size_t lineno = 0;
  auto index_of = [&](const std::string& name) {
    const auto it = std::find(t.joint_names.begin(), t.joint_names.end(), name);
    if (it == t.joint_names.end()) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": unknown joint '" + name + "'");
    }
    return static_cast<std::size_t>(it - t.joint_names.begin());
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip_comment(line);
    if (s.empty()) continue;
    if (s.rfind("joints:", 0) == 0) {
      t.joint_names = split_list(std::string_view(s).substr(7));
      continue;
    }
    const auto dash = s.find(" - ");
    if (dash == std::string::npos) {
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected 'a - b' edge");
    }
    t.edges.emplace_back(index_of(trim(s.substr(0, dash))), index_of(trim(s.substr(dash + 3))));
  }
  if (t.joint_names.empty()) throw std::invalid_argument("topology has no 'joints:' line");
  t.validate();
  return t;
}

SpdMatrix::SpdMatrix(std::size_t n, std::vector<int> d) : n_(n), d_(std::move(d)) {
  if (d_.size() != n_ * n_) throw std::invalid_argument("SpdMatrix needs n*n entries");
}

int SpdMatrix::max_distance() const { return d_.empty() ? 0 : *std::max_element(d_.begin(), d_.end()); }

SpdMatrix shortest_path_distances(std::size_t joint_count, const std::vector<Edge>& edges) {
  std::vector<std::vector<std::size_t>> adj(joint_count);
  for (auto [a, b] : edges) {
    if (a >= joint_count || b >= joint_count) throw std::invalid_argument("edge index out of range");
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> d(joint_count * joint_count, -1);
  for (std::size_t src = 0; src < joint_count; ++src) {
    int* row = d.data() + src * joint_count;
    row[src] = 0;
    std::deque<std::size_t> queue{src};
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop_front();
      for (std::size_t v : adj[u]) {
        if (row[v] < 0) {
          row[v] = row[u] + 1;
          queue.push_back(v);
        }
      }
    }
    for (std::size_t j = 0; j < joint_count; ++j) {
      if (row[j] < 0) {
        throw std::invalid_argument("graph is disconnected: joint " + std::to_string(j) + " unreachable from " +
                                    std::to_string(src));
      }
    }
  }
  return SpdMatrix(joint_count, std::move(d));
}

SpdMatrix shortest_path_distances(const SkeletonTopology& topology) {
  topology.validate();
  return shortest_path_distances(topology.joint_count(), topology.edges);
}

bool is_connected(std::size_t joint_count, const std::vector<Edge>& edges) {
  try {
    shortest_path_distances(joint_count, edges);
    return true;
  } catch (const std::invalid_argument&) {
    return false;
  }
}

void HypergraphPartition::validate(std::size_t joint_count) const {
  if (groups.empty()) throw std::invalid_argument("partition has no groups");
  if (group_names.size() != groups.size()) throw std::invalid_argument("partition group names/groups mismatch");
  std::vector<int> owner(joint_count, -1);
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (groups[g].empty()) throw std::invalid_argument("partition group '" + group_names[g] + "' is empty");
    for (std::size_t j : groups[g]) {
      if (j >= joint_count) throw std::invalid_argument("partition joint index " + std::to_string(j) + " out of range");
      if (owner[j] >= 0) {
        throw std::invalid_argument("joint " + std::to_string(j) + " appears in both '" + group_names[owner[j]] +
                                    "' and '" + group_names[g] + "'");
      }
      owner[j] = static_cast<int>(g);
    }
  }
  for (std::size_t j = 0; j < joint_count; ++j) {
    if (owner[j] < 0) throw std::invalid_argument("joint " + std::to_string(j) + " is not in any group");
  }
}

std::vector<std::size_t> HypergraphPartition::group_of(std::size_t joint_count) const {
  validate(joint_count);
  std::vector<std::size_t> out(joint_count);
  for (std::size_t g = 0; g < groups.size(); ++g)
    for (std::size_t j : groups[g]) out[j] = g;
  return out;
}

HypergraphPartition default_partition() {
  HypergraphPartition p;
  p.group_names = {"left_forearm_hand", "right_forearm_hand", "left_leg", "right_leg", "spine_head", "shoulders"};
  p.groups = {
      {ElbowLeft, WristLeft, HandLeft, HandTipLeft, ThumbLeft},
      {ElbowRight, WristRight, HandRight, HandTipRight, ThumbRight},
      {HipLeft, KneeLeft, AnkleLeft, FootLeft},
      {HipRight, KneeRight, AnkleRight, FootRight},
      {SpineBase, SpineMid, SpineShoulder, Neck, Head},
      {ShoulderLeft, ShoulderRight},
  };
  return p;
}

HypergraphPartition parse_partition(std::istream& in, const SkeletonTopology& topology) {
  HypergraphPartition p;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string s = strip_comment(line);
    if (s.empty()) continue;
    const auto colon = s.find(':');
    if (colon == std::string::npos || colon == 0) {
      throw std::invalid_argument("partition line " + std::to_string(lineno) + ": expected 'group: joint, ...'");
    }
    p.group_names.push_back(trim(s.substr(0, colon)));
    std::vector<std::size_t> members;
    for (const auto& name : split_list(std::string_view(s).substr(colon + 1))) {
      const auto it = std::find(topology.joint_names.begin(), topology.joint_names.end(), name);
      if (it == topology.joint_names.end()) {
        throw std::invalid_argument("partition line " + std::to_string(lineno) + ": unknown joint '" + name + "'");
      }
      members.push_back(static_cast<std::size_t>(it - topology.joint_names.begin()));
    }
    p.groups.push_back(std::move(members));
  }
  p.validate(topology.joint_count());
  return p;
}

HypergraphPartition load_partition(const std::string& path, const SkeletonTopology& topology) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open partition file " + path);
  return parse_partition(in, topology);
}

std::string format_partition(const HypergraphPartition& p, const SkeletonTopology& topology) {
  std::ostringstream os;
  for (std::size_t g = 0; g < p.groups.size(); ++g) {
    os << p.group_names[g] << ':';
    for (std::size_t k = 0; k < p.groups[g].size(); ++k) {
      os << (k ? ", " : " ") << topology.joint_names[p.groups[g][k]];
    }
    os << '\n';
  }
  return os.str();
}

Tensor membership_matrix(const HypergraphPartition& p, std::size_t joint_count) {
  const auto owner = p.group_of(joint_count);
  Tensor m({joint_count, p.group_count()});
  for (std::size_t j = 0; j < joint_count; ++j) m.at({j, owner[j]}) = 1.0;
  return m;
}

Tensor mean_pooling_matrix(const HypergraphPartition& p, std::size_t joint_count) {
  Tensor m = membership_matrix(p, joint_count);
  for (std::size_t g = 0; g < p.group_count(); ++g) {
    const double inv = 1.0 / static_cast<double>(p.groups[g].size());
    for (std::size_t j = 0; j < joint_count; ++j) m.at({j, g}) *= inv;
  }
  return m;
}

}  // namespace rehab
