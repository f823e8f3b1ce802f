#include "rehab/model.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rehab {

namespace {

using nlohmann::json;

constexpr const char* kCheckpointMagic = "rehab-checkpoint";
constexpr int kCheckpointVersion = 1;

std::string layer_prefix(std::size_t l) { return "layer" + std::to_string(l); }

struct Builder {
  ModelWeights& w;
  std::mt19937_64 rng;

  void uniform(const std::string& name, Shape shape, std::size_t fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (auto& v : t.data()) v = dist(rng);
    w.add_param(name, std::move(t));
  }

  void conv(const std::string& name, std::size_t cin, std::size_t cout, std::size_t kt = 1, bool bias = true) {
    uniform(name + ".w", {cout, cin, kt, 1}, cin * kt);
    if (bias) uniform(name + ".b", {cout}, cin * kt);
  }

  void bn(const std::string& name, std::size_t channels, bool enabled) {
    if (!enabled) return;
    w.add_param(name + ".gamma", Tensor({channels}, 1.0));
    w.add_param(name + ".beta", Tensor({channels}, 0.0));
    w.add_buffer(name, channels);
  }
};

struct Runner {
  Model& m;
  bool training;

  Var pointwise(const Var& x, const std::string& name, std::size_t stride = 1) {
    kernel::Conv2dOptions o;
    o.stride = {stride, 1};
    return conv2d(x, m.weights.param(name + ".w"), m.weights.param(name + ".b"), o);
  }

  Var temporal(const Var& x, const std::string& name, std::size_t dilation, std::size_t stride) {
    const std::size_t k = m.config.temporal_kernel;
    kernel::Conv2dOptions o;
    o.stride = {stride, 1};
    o.dilation = {dilation, 1};
    o.padding = {(k - 1) / 2 * dilation, 0};
    return conv2d(x, m.weights.param(name + ".w"), m.weights.param(name + ".b"), o);
  }

  Var norm(const Var& x, const std::string& name) {
    if (!m.config.use_batchnorm) return x;
    return batch_norm(x, m.weights.param(name + ".gamma"), m.weights.param(name + ".beta"), m.weights.buffer(name),
                      training);
  }

  // [N, C, T, V] -> [N, H, T, V, d]
  Var split_heads(const Var& x) {
    const auto& s = x.shape();
    const std::size_t h = m.config.num_heads;
    return permute(reshape(x, {s[0], h, s[1] / h, s[2], s[3]}), {0, 1, 3, 4, 2});
  }

  Var merge_heads(const Var& x) {
    const auto& s = x.shape();
    return reshape(permute(x, {0, 1, 4, 2, 3}), {s[0], s[1] * s[4], s[2], s[3]});
  }

  Var temporal_block(const Var& y, std::size_t l) {
    const std::string p = layer_prefix(l) + ".tcn";
    const std::size_t cin = m.config.layer_in_channels(l);
    const std::size_t cout = m.config.channels[l];
    const std::size_t stride = m.config.temporal_strides[l];
    std::vector<Var> branches;
    for (std::size_t b = 0; b < 2; ++b) {
      const std::string bp = p + ".branch" + std::to_string(b);
      Var z = relu(norm(pointwise(y, bp + ".reduce"), bp + ".reduce_bn"));
      branches.push_back(norm(temporal(z, bp + ".conv", b + 1, stride), bp + ".bn"));
    }
    {
      const std::string bp = p + ".branch2";
      Var z = relu(norm(pointwise(y, bp + ".reduce"), bp + ".reduce_bn"));
      kernel::Pool2dOptions po;
      po.kernel = {3, 1};
      po.stride = {stride, 1};
      po.padding = {1, 0};
      branches.push_back(norm(max_pool2d(z, po), bp + ".bn"));
    }
    branches.push_back(norm(pointwise(y, p + ".branch3.conv", stride), p + ".branch3.bn"));
    Var out = concat(branches, 1);
    Var res = y;
    if (cin != cout || stride != 1) res = norm(pointwise(y, p + ".residual", stride), p + ".residual_bn");
    return relu(out + res);
  }
};

void check_rank(const Var& v, std::size_t min_rank, const char* what) {
  if (v.shape().size() < min_rank) throw ShapeError(std::string(what) + ": rank too small, got " + to_string(v.shape()));
}

std::string hex_double(double v) {
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::hex);
  return std::string(buf, r.ptr);
}

double parse_hex_double(std::string_view s) {
  double v = 0;
  bool neg = false;
  if (!s.empty() && s.front() == '-') {
    neg = true;
    s.remove_prefix(1);
  }
  auto r = std::from_chars(s.data(), s.data() + s.size(), v, std::chars_format::hex);
  if (r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw std::runtime_error("checkpoint: bad number '" + std::string(s) + "'");
  return neg ? -v : v;
}

void write_tensor(std::ostream& out, const std::string& kind, const std::string& name, const Tensor& t) {
  out << kind << ' ' << name << ' ' << t.rank();
  for (auto d : t.shape()) out << ' ' << d;
  out << '\n';
  bool first = true;
  for (double v : t.data()) {
    if (!first) out << ' ';
    out << hex_double(v);
    first = false;
  }
  out << '\n';
}

Tensor read_tensor(std::istream& in, const std::string& kind, const std::string& name, const Shape& expect) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing " + kind + " " + name);
  std::istringstream head(line);
  std::string k, n;
  std::size_t rank = 0;
  head >> k >> n >> rank;
  if (k != kind || n != name) throw std::runtime_error("checkpoint: expected " + kind + " " + name + ", got '" + line + "'");
  Shape shape(rank);
  for (auto& d : shape) head >> d;
  if (!head || shape != expect)
    throw std::runtime_error("checkpoint: " + name + " has shape " + to_string(shape) + ", expected " + to_string(expect));
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: missing values for " + name);
  std::vector<double> values;
  values.reserve(element_count(shape));
  std::istringstream body(line);
  for (std::string tok; body >> tok;) values.push_back(parse_hex_double(tok));
  if (values.size() != element_count(shape))
    throw std::runtime_error("checkpoint: " + name + " has " + std::to_string(values.size()) + " values");
  return Tensor(shape, std::move(values));
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

void ModelConfig::validate() const {
  auto fail = [](const std::string& m) { throw std::invalid_argument("model config: " + m); };
  if (num_layers < 1) fail("num_layers must be >= 1");
  if (channels.size() != num_layers) fail("channels needs one entry per layer");
  if (temporal_strides.size() != num_layers) fail("temporal_strides needs one entry per layer");
  if (num_heads < 1) fail("num_heads must be >= 1");
  for (auto c : channels) {
    if (c == 0 || c % num_heads != 0) fail("channels must be positive multiples of num_heads");
    if (c % 4 != 0) fail("channels must be multiples of 4 (temporal branches)");
  }
  for (auto s : temporal_strides)
    if (s < 1) fail("temporal strides must be >= 1");
  if (frames < 1 || in_channels < 1) fail("frames and in_channels must be >= 1");
  if (num_classes < 2) fail("num_classes must be >= 2");
  if (temporal_kernel < 1 || temporal_kernel % 2 == 0) fail("temporal_kernel must be odd");
  topology.validate();
  if (joints() < 1) fail("topology has no joints");
  partition.validate(joints());
  if (use_pos_embedding) {
    const auto spd = shortest_path_distances(topology);
    if (static_cast<std::size_t>(spd.max_distance()) > spd_max)
      fail("spd_max " + std::to_string(spd_max) + " below skeleton diameter " + std::to_string(spd.max_distance()));
  }
}

ModelConfig ModelConfig::desk() { return ModelConfig{}; }

ModelConfig ModelConfig::paper_scale() {
  ModelConfig c;
  c.num_layers = 10;
  c.channels = {64, 64, 64, 64, 128, 128, 128, 256, 256, 256};
  c.temporal_strides = {1, 1, 1, 1, 2, 1, 1, 2, 1, 1};
  c.num_heads = 8;
  c.frames = 100;
  return c;
}

ModelGraph build_graph(const ModelConfig& config) {
  ModelGraph g;
  const std::size_t v = config.joints();
  g.spd = shortest_path_distances(config.topology);
  g.spd_index.reserve(v * v);
  for (int d : g.spd.flat()) g.spd_index.push_back(static_cast<std::size_t>(d));
  g.membership = membership_matrix(config.partition, v);
  g.membership_t = kernel::transpose_last(g.membership);
  g.pooling_t = kernel::transpose_last(mean_pooling_matrix(config.partition, v));
  return g;
}

// ---------------------------------------------------------------------------
// Weights

Var& ModelWeights::add_param(std::string name, Tensor value) {
  if (has(name)) throw std::invalid_argument("duplicate parameter " + name);
  params_.push_back({std::move(name), parameter(std::move(value))});
  return params_.back().var;
}

BatchNormState& ModelWeights::add_buffer(std::string name, std::size_t channels) {
  buffers_.push_back({std::move(name), BatchNormState{Tensor({channels}, 0.0), Tensor({channels}, 1.0)}});
  return buffers_.back().state;
}

bool ModelWeights::has(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return true;
  return false;
}

Var& ModelWeights::param(const std::string& name) {
  for (auto& p : params_)
    if (p.name == name) return p.var;
  throw std::out_of_range("no parameter " + name);
}

const Var& ModelWeights::param(const std::string& name) const {
  for (const auto& p : params_)
    if (p.name == name) return p.var;
  throw std::out_of_range("no parameter " + name);
}

BatchNormState& ModelWeights::buffer(const std::string& name) {
  for (auto& b : buffers_)
    if (b.name == name) return b.state;
  throw std::out_of_range("no buffer " + name);
}

std::vector<Var> ModelWeights::parameter_list() const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.var);
  return out;
}

std::size_t ModelWeights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.var.value().size();
  return n;
}

Model make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  Model m{config, build_graph(config), {}};
  Builder b{m.weights, std::mt19937_64(seed)};
  const bool bn = config.use_batchnorm;
  const std::size_t h = config.num_heads;

  b.bn("input.bn", config.in_channels, bn);
  b.conv("input.proj", config.in_channels, config.channels[0]);
  b.bn("input.proj_bn", config.channels[0], bn);

  for (std::size_t l = 0; l < config.num_layers; ++l) {
    const std::string p = layer_prefix(l);
    const std::size_t cin = config.layer_in_channels(l);
    const std::size_t cout = config.channels[l];
    const std::size_t cb = cout / 4;
    b.conv(p + ".attn.q", cin, cin);
    b.conv(p + ".attn.k", cin, cin);
    b.conv(p + ".attn.v", cin, cin);
    if (config.use_joint2subgraph) b.conv(p + ".attn.ks", cin, cin);
    if (config.use_pos_embedding) m.weights.add_param(p + ".attn.pos_table", Tensor({h, config.spd_max + 1}));
    if (config.use_attentive_bias) m.weights.add_param(p + ".attn.bias_table", Tensor({h, config.groups()}));
    b.conv(p + ".attn.out", cin, cin);
    b.bn(p + ".attn.out_bn", cin, bn);

    const std::string t = p + ".tcn";
    for (std::size_t br = 0; br < 2; ++br) {
      const std::string bp = t + ".branch" + std::to_string(br);
      b.conv(bp + ".reduce", cin, cb);
      b.bn(bp + ".reduce_bn", cb, bn);
      b.conv(bp + ".conv", cb, cb, config.temporal_kernel);
      b.bn(bp + ".bn", cb, bn);
    }
    b.conv(t + ".branch2.reduce", cin, cb);
    b.bn(t + ".branch2.reduce_bn", cb, bn);
    b.bn(t + ".branch2.bn", cb, bn);
    b.conv(t + ".branch3.conv", cin, cout - 3 * cb);
    b.bn(t + ".branch3.bn", cout - 3 * cb, bn);
    if (cin != cout || config.temporal_strides[l] != 1) {
      b.conv(t + ".residual", cin, cout);
      b.bn(t + ".residual_bn", cout, bn);
    }
  }
  const std::size_t last = config.channels.back();
  m.weights.add_param("head.w", Tensor({last, config.num_classes}));
  m.weights.add_param("head.b", Tensor({config.num_classes}));
  return m;
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t bn = c.use_batchnorm ? 2 : 0;
  auto conv = [](std::size_t cin, std::size_t cout, std::size_t k) { return cout * cin * k + cout; };
  std::size_t n = bn * c.in_channels + conv(c.in_channels, c.channels[0], 1) + bn * c.channels[0];
  for (std::size_t l = 0; l < c.num_layers; ++l) {
    const std::size_t ci = c.layer_in_channels(l);
    const std::size_t co = c.channels[l];
    const std::size_t cb = co / 4;
    n += 4 * conv(ci, ci, 1) + bn * ci;
    if (c.use_joint2subgraph) n += conv(ci, ci, 1);
    if (c.use_pos_embedding) n += c.num_heads * (c.spd_max + 1);
    if (c.use_attentive_bias) n += c.num_heads * c.groups();
    n += 3 * conv(ci, cb, 1) + 2 * conv(cb, cb, c.temporal_kernel) + conv(ci, co - 3 * cb, 1);
    n += bn * (3 * cb + 3 * cb + (co - 3 * cb));
    if (ci != co || c.temporal_strides[l] != 1) n += conv(ci, co, 1) + bn * co;
  }
  n += c.channels.back() * c.num_classes + c.num_classes;
  return n;
}

// ---------------------------------------------------------------------------
// Attention parts

Var attention_logits_j2j(const Var& q, const Var& k) {
  check_rank(q, 2, "attention_logits_j2j");
  if (q.shape() != k.shape())
    throw ShapeError("attention_logits_j2j: q " + to_string(q.shape()) + " vs k " + to_string(k.shape()));
  const double d = static_cast<double>(q.shape().back());
  return scale(matmul(q, transpose_last(k)), 1.0 / std::sqrt(d));
}

Var subgraph_keys(const Var& keys, const Tensor& pooling_t) {
  check_rank(keys, 2, "subgraph_keys");
  return matmul(constant(pooling_t), keys);
}

Var attention_logits_j2s(const Var& q, const Var& sk, const Tensor& membership_t) {
  check_rank(q, 2, "attention_logits_j2s");
  check_rank(sk, 2, "attention_logits_j2s");
  const std::size_t d = q.shape().back();
  if (sk.shape().back() != d) throw ShapeError("attention_logits_j2s: feature size mismatch");
  if (membership_t.rank() != 2 || membership_t.dim(0) != sk.shape()[sk.shape().size() - 2] ||
      membership_t.dim(1) != q.shape()[q.shape().size() - 2])
    throw ShapeError("attention_logits_j2s: membership " + to_string(membership_t.shape()) + " does not match");
  const Var per_group = scale(matmul(q, transpose_last(sk)), 1.0 / std::sqrt(static_cast<double>(d)));
  return matmul(per_group, constant(membership_t));
}

Var positional_bias(const ModelGraph& graph, const Var& table) {
  const std::size_t v = graph.spd.size();
  return lookup(table, graph.spd_index, v, v);
}

Var attentive_bias(const Tensor& membership_t, const Var& table) {
  if (table.shape().size() != 2 || table.shape()[1] != membership_t.dim(0))
    throw ShapeError("attentive_bias: table " + to_string(table.shape()) + " vs membership " +
                     to_string(membership_t.shape()));
  const std::size_t h = table.shape()[0];
  const std::size_t v = membership_t.dim(1);
  const Var per_key = reshape(matmul(table, constant(membership_t)), {h, 1, v});
  return per_key * constant(Tensor({v, 1}, 1.0));
}

// ---------------------------------------------------------------------------
// Layers

LayerOutput hyper_attention_layer(const Var& x, std::size_t layer, Model& model, bool training) {
  const auto& cfg = model.config;
  Runner r{model, training};
  const std::string p = layer_prefix(layer) + ".attn";
  if (x.shape().size() != 4 || x.shape()[1] != cfg.layer_in_channels(layer) || x.shape()[3] != cfg.joints())
    throw ShapeError("hyper_attention_layer: input " + to_string(x.shape()) + " does not match layer " +
                     std::to_string(layer));
  const std::size_t h = cfg.num_heads;
  const std::size_t v = cfg.joints();

  const Var q = r.split_heads(r.pointwise(x, p + ".q"));
  const Var k = r.split_heads(r.pointwise(x, p + ".k"));
  const Var val = r.split_heads(r.pointwise(x, p + ".v"));

  // q.k_j + q.sk_g(j) == q.(k_j + sk_g(j)): the subgraph term is folded into the keys before scoring.
  Var keys = k;
  if (cfg.use_joint2subgraph) {
    const Var ks = r.split_heads(r.pointwise(x, p + ".ks"));
    keys = k + matmul(constant(model.graph.membership), subgraph_keys(ks, model.graph.pooling_t));
  }
  Var logits = attention_logits_j2j(q, keys);
  if (cfg.use_pos_embedding)
    logits = logits + reshape(positional_bias(model.graph, model.weights.param(p + ".pos_table")), {h, 1, v, v});
  if (cfg.use_attentive_bias)
    logits = logits +
             reshape(attentive_bias(model.graph.membership_t, model.weights.param(p + ".bias_table")), {h, 1, v, v});

  const Var attn = softmax(logits, 4);
  Var out = r.merge_heads(matmul(attn, val));
  out = r.norm(r.pointwise(out, p + ".out"), p + ".out_bn");
  const Var y = relu(out + x);
  return {r.temporal_block(y, layer), attn.value()};
}

ForwardResult forward(Model& model, const Tensor& x, const ForwardOptions& options) {
  const auto& cfg = model.config;
  if (x.rank() != 4 || x.dim(1) != cfg.in_channels || x.dim(3) != cfg.joints())
    throw ShapeError("forward: expected [N, " + std::to_string(cfg.in_channels) + ", T, " +
                     std::to_string(cfg.joints()) + "], got " + to_string(x.shape()));
  if (!x.all_finite()) throw std::invalid_argument("forward: input contains non-finite values");
  Runner r{model, options.training};
  ForwardResult result;
  Var h = r.norm(constant(x), "input.bn");
  h = r.norm(r.pointwise(h, "input.proj"), "input.proj_bn");
  for (std::size_t l = 0; l < cfg.num_layers; ++l) {
    auto out = hyper_attention_layer(h, l, model, options.training);
    h = out.output;
    if (options.keep_attention) result.attention.push_back(std::move(out.attention));
  }
  const Var pooled = mean(mean(h, 3), 2);
  result.logits = matmul(pooled, model.weights.param("head.w")) + model.weights.param("head.b");
  return result;
}

Tensor class_probabilities(const Tensor& logits) { return kernel::softmax(logits, logits.rank() - 1); }

std::vector<std::size_t> predict(Model& model, const Tensor& x) {
  NoGradGuard guard;
  const Tensor logits = forward(model, x).logits.value();
  const std::size_t n = logits.dim(0), k = logits.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (logits[i * k + c] > logits[i * k + best]) best = c;
    out[i] = best;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string config_to_json(const ModelConfig& c) {
  json j;
  j["num_layers"] = c.num_layers;
  j["channels"] = c.channels;
  j["temporal_strides"] = c.temporal_strides;
  j["num_heads"] = c.num_heads;
  j["frames"] = c.frames;
  j["in_channels"] = c.in_channels;
  j["num_classes"] = c.num_classes;
  j["spd_max"] = c.spd_max;
  j["temporal_kernel"] = c.temporal_kernel;
  j["use_joint2subgraph"] = c.use_joint2subgraph;
  j["use_pos_embedding"] = c.use_pos_embedding;
  j["use_attentive_bias"] = c.use_attentive_bias;
  j["use_batchnorm"] = c.use_batchnorm;
  j["joints"] = c.topology.joint_names;
  json edges = json::array();
  for (auto [a, b] : c.topology.edges) edges.push_back({a, b});
  j["edges"] = edges;
  j["group_names"] = c.partition.group_names;
  j["groups"] = c.partition.groups;
  return j.dump();
}

ModelConfig config_from_json(const std::string& text) {
  ModelConfig c;
  try {
    const json j = json::parse(text);
    c.num_layers = j.at("num_layers");
    c.channels = j.at("channels").get<std::vector<std::size_t>>();
    c.temporal_strides = j.at("temporal_strides").get<std::vector<std::size_t>>();
    c.num_heads = j.at("num_heads");
    c.frames = j.at("frames");
    c.in_channels = j.at("in_channels");
    c.num_classes = j.at("num_classes");
    c.spd_max = j.at("spd_max");
    c.temporal_kernel = j.at("temporal_kernel");
    c.use_joint2subgraph = j.at("use_joint2subgraph");
    c.use_pos_embedding = j.at("use_pos_embedding");
    c.use_attentive_bias = j.at("use_attentive_bias");
    c.use_batchnorm = j.at("use_batchnorm");
    c.topology.joint_names = j.at("joints").get<std::vector<std::string>>();
    c.topology.edges.clear();
    for (const auto& e : j.at("edges")) c.topology.edges.emplace_back(e.at(0).get<std::size_t>(), e.at(1).get<std::size_t>());
    c.partition.group_names = j.at("group_names").get<std::vector<std::string>>();
    c.partition.groups = j.at("groups").get<std::vector<std::vector<std::size_t>>>();
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("model config: ") + e.what());
  }
  c.validate();
  return c;
}

void save_checkpoint(std::ostream& out, const Model& model) {
  out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
  out << "config " << config_to_json(model.config) << '\n';
  out << "params " << model.weights.params().size() << '\n';
  for (const auto& p : model.weights.params()) write_tensor(out, "param", p.name, p.var.value());
  out << "buffers " << model.weights.buffers().size() << '\n';
  for (const auto& b : model.weights.buffers()) {
    write_tensor(out, "running_mean", b.name, b.state.running_mean);
    write_tensor(out, "running_var", b.name, b.state.running_var);
  }
  out << "end\n";
}

Model load_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion))
    throw std::runtime_error("checkpoint: unsupported header '" + line + "'");
  if (!std::getline(in, line) || line.rfind("config ", 0) != 0) throw std::runtime_error("checkpoint: missing config");
  Model m = make_model(config_from_json(line.substr(7)), 0);
  auto expect_count = [&](const std::string& key, std::size_t n) {
    if (!std::getline(in, line) || line != key + " " + std::to_string(n))
      throw std::runtime_error("checkpoint: expected '" + key + " " + std::to_string(n) + "', got '" + line + "'");
  };
  expect_count("params", m.weights.params().size());
  for (auto& p : m.weights.params()) p.var.value() = read_tensor(in, "param", p.name, p.var.value().shape());
  expect_count("buffers", m.weights.buffers().size());
  for (auto& b : m.weights.buffers()) {
    b.state.running_mean = read_tensor(in, "running_mean", b.name, b.state.running_mean.shape());
    b.state.running_var = read_tensor(in, "running_var", b.name, b.state.running_var.shape());
  }
  if (!std::getline(in, line) || line != "end") throw std::runtime_error("checkpoint: missing end marker");
  return m;
}

void save_checkpoint(const std::string& path, const Model& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  save_checkpoint(out, model);
  if (!out) throw std::runtime_error("failed writing " + path);
}

Model load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  return load_checkpoint(in);
}

}  // namespace rehab
