#pragma once

// Per-exercise skeleton classifier: a stack of hyper self-attention layers
// (joint-to-joint + joint-to-subgraph logits, SPD positional bias and
// query-independent attentive bias, one softmax over key joints), each
// followed by a multi-scale temporal convolution, then global average
// pooling over frames and joints and a linear head.
//
// Activations use the layout [N, C, T, V]; attention tensors [N, H, T, V, V].

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "rehab/autodiff.hpp"
#include "rehab/skeleton.hpp"
#include "rehab/tensor.hpp"

namespace rehab {

struct ModelConfig {
  std::size_t num_layers = 3;
  /// Output channels of each layer; must have num_layers entries.
  std::vector<std::size_t> channels{16, 16, 16};
  /// Temporal stride of each layer's temporal convolution.
  std::vector<std::size_t> temporal_strides{1, 1, 1};
  std::size_t num_heads = 2;
  std::size_t frames = 40;
  std::size_t in_channels = 3;
  std::size_t num_classes = 4;
  std::size_t spd_max = 24;
  std::size_t temporal_kernel = 5;

  bool use_joint2subgraph = true;
  bool use_pos_embedding = true;
  bool use_attentive_bias = true;
  bool use_batchnorm = true;

  SkeletonTopology topology = default_topology();
  HypergraphPartition partition = default_partition();

  std::size_t joints() const noexcept { return topology.joint_count(); }
  std::size_t groups() const noexcept { return partition.group_count(); }
  /// Channels entering layer l (layer 0 reads the input projection, which emits channels[0]).
  std::size_t layer_in_channels(std::size_t l) const { return l == 0 ? channels.at(0) : channels.at(l - 1); }

  /// Throws std::invalid_argument on an inconsistent configuration.
  void validate() const;

  /// 3 layers, 16 channels, 2 heads, T = 40.
  static ModelConfig desk();
  /// 10 layers with widening channels and two stride-2 stages, T = 100.
  static ModelConfig paper_scale();
};

/// Structure derived once from the configuration.
struct ModelGraph {
  SpdMatrix spd;
  std::vector<std::size_t> spd_index;  // flat V*V copy of spd as table indices
  Tensor membership;                   // [V, G] one-hot
  Tensor membership_t;                 // [G, V]
  Tensor pooling_t;                    // [G, V], rows are per-group means
};

ModelGraph build_graph(const ModelConfig& config);

/// Named learnable tensors plus batch-norm running statistics, in creation order.
class ModelWeights {
 public:
  struct Param {
    std::string name;
    Var var;
  };
  struct Buffer {
    std::string name;
    BatchNormState state;
  };

  Var& add_param(std::string name, Tensor value);
  BatchNormState& add_buffer(std::string name, std::size_t channels);

  bool has(const std::string& name) const;
  Var& param(const std::string& name);
  const Var& param(const std::string& name) const;
  BatchNormState& buffer(const std::string& name);

  const std::vector<Param>& params() const noexcept { return params_; }
  std::vector<Param>& params() noexcept { return params_; }
  const std::vector<Buffer>& buffers() const noexcept { return buffers_; }
  std::vector<Buffer>& buffers() noexcept { return buffers_; }

  std::vector<Var> parameter_list() const;
  std::size_t parameter_count() const;

 private:
  std::vector<Param> params_;
  std::vector<Buffer> buffers_;
};

struct Model {
  ModelConfig config;
  ModelGraph graph;
  ModelWeights weights;
};

/// Fan-in scaled uniform init for projections; zero positional/attentive tables and head; identity batch-norm.
Model make_model(const ModelConfig& config, std::uint64_t seed);

/// Parameter count implied by a configuration (equals make_model(config).weights.parameter_count()).
std::size_t expected_parameter_count(const ModelConfig& config);

// Attention parts. q, k, subgraph keys: [..., V, d] / [..., G, d]; results broadcast over leading axes.

/// q k^T / sqrt(d) -> [..., V, V].
Var attention_logits_j2j(const Var& q, const Var& k);
/// Mean-pools per-joint keys into per-group keys: pooling_t [G,V] x keys [..., V, d] -> [..., G, d].
Var subgraph_keys(const Var& keys, const Tensor& pooling_t);
/// (q sk^T / sqrt(d)) membership^T -> [..., V, V]; key joint j receives its group's logit.
Var attention_logits_j2s(const Var& q, const Var& subgraph_keys, const Tensor& membership_t);
/// bias[h,i,j] = table[h, spd(i,j)] -> [H, V, V]. Throws std::out_of_range past the table.
Var positional_bias(const ModelGraph& graph, const Var& table);
/// bias[h,i,j] = table[h, group(j)] -> [H, V, V], identical for every query i.
Var attentive_bias(const Tensor& membership_t, const Var& table);

struct LayerOutput {
  Var output;
  Tensor attention;  // [N, H, T, V, V]
};

LayerOutput hyper_attention_layer(const Var& x, std::size_t layer, Model& model, bool training);

struct ForwardResult {
  Var logits;                       // [N, num_classes]
  std::vector<Tensor> attention;    // per layer [N, H, T_l, V, V]; empty unless requested
};

struct ForwardOptions {
  bool training = false;
  bool keep_attention = false;
};

ForwardResult forward(Model& model, const Tensor& x, const ForwardOptions& options = {});

/// Row-wise softmax of logits.
Tensor class_probabilities(const Tensor& logits);
std::vector<std::size_t> predict(Model& model, const Tensor& x);

// Checkpoints: versioned text container with the configuration echoed as
// JSON and every tensor written as hex floats (exact round trip).
void save_checkpoint(std::ostream& out, const Model& model);
Model load_checkpoint(std::istream& in);
void save_checkpoint(const std::string& path, const Model& model);
Model load_checkpoint(const std::string& path);

std::string config_to_json(const ModelConfig& config);
ModelConfig config_from_json(const std::string& json);

}  // namespace rehab
