#include "rehab/attention.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "rehab/autodiff.hpp"
#include "rehab/training.hpp"

namespace rehab {

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

std::vector<long double> column_sums(const AttentionMap& map) {
  const std::size_t v = map.joints();
  std::vector<long double> col(v, 0.0L);
  for (std::size_t i = 0; i < v; ++i)
    for (std::size_t j = 0; j < v; ++j) col[j] += map.m[i * v + j];
  return col;
}

double row_max(const ImportanceRow& row) {
  double m = 0.0;
  for (double x : row.importance) m = std::max(m, x);
  return m;
}

std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kGroupColors[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b",
                                        "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

void check_rows(std::span<const ImportanceRow> rows, std::size_t v) {
  for (const auto& r : rows) {
    if (r.importance.size() != v) throw std::invalid_argument("importance row '" + r.label + "' has wrong length");
    if (!r.contrast.empty() && r.contrast.size() != v)
      throw std::invalid_argument("contrast row '" + r.label + "' has wrong length");
  }
}

}  // namespace

void AttentionAccumulator::add(const Tensor& attention) {
  const Shape& s = attention.shape();
  if (s.size() < 2 || s[s.size() - 1] != s[s.size() - 2] || s.back() == 0)
    throw std::invalid_argument("attention must end in a square [V, V] block");
  const std::size_t v = s.back();
  if (slices_ == 0 && sum_.empty()) {
    v_ = v;
    sum_.assign(v * v, 0.0L);
  } else if (v != v_) {
    throw std::invalid_argument("attention joint count changed");
  }
  const std::size_t block = v * v;
  const std::size_t n = attention.size() / block;
  const auto& d = attention.data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t k = 0; k < block; ++k) sum_[k] += d[b * block + k];
  slices_ += n;
}

AttentionMap AttentionAccumulator::mean() const {
  if (slices_ == 0) throw std::invalid_argument("no attention to average");
  AttentionMap out{Tensor({v_, v_})};
  for (std::size_t k = 0; k < sum_.size(); ++k)
    out.m[k] = static_cast<double>(sum_[k] / static_cast<long double>(slices_));
  return out;
}

AttentionMap average_attention(std::span<const Tensor> stack) {
  AttentionAccumulator acc;
  for (const auto& t : stack) acc.add(t);
  return acc.mean();
}

std::vector<double> joint_importance(const AttentionMap& map) {
  const auto col = column_sums(map);
  const long double total = std::accumulate(col.begin(), col.end(), 0.0L);
  std::vector<double> out(col.size());
  for (std::size_t j = 0; j < col.size(); ++j)
    out[j] = total > 0 ? static_cast<double>(col[j] / total) : 1.0 / static_cast<double>(col.size());
  return out;
}

std::vector<double> importance_contrast(const AttentionMap& correct, const AttentionMap& incorrect) {
  if (correct.m.shape() != incorrect.m.shape()) throw std::invalid_argument("attention map shapes differ");
  const auto a = column_sums(correct);
  const auto b = column_sums(incorrect);
  std::vector<double> out(a.size());
  for (std::size_t j = 0; j < a.size(); ++j) out[j] = static_cast<double>(a[j] - b[j]);
  return out;
}

std::vector<double> group_mean_importance(std::span<const double> importance, const HypergraphPartition& partition) {
  std::vector<double> out;
  for (const auto& g : partition.groups) {
    double s = 0.0;
    for (std::size_t j : g) s += importance[j];
    out.push_back(g.empty() ? 0.0 : s / static_cast<double>(g.size()));
  }
  return out;
}

AttentionSummary collect_attention(Model& model, const Corpus& corpus) {
  if (corpus.empty()) throw std::invalid_argument("empty corpus");
  NoGradGuard guard;
  constexpr std::size_t kChunk = 16;
  AttentionAccumulator all, good, bad;
  AttentionSummary s;
  for (std::size_t begin = 0; begin < corpus.size(); begin += kChunk) {
    const std::size_t end = std::min(corpus.size(), begin + kChunk);
    std::vector<const SkeletonSequence*> chunk;
    for (std::size_t i = begin; i < end; ++i) chunk.push_back(&corpus.sequences[i]);
    const auto result = forward(model, prepare_inputs(chunk, model.config.frames), {false, true});
    for (const Tensor& layer : result.attention) {
      all.add(layer);
      // per-sample slabs [H, T, V, V]
      const std::size_t n = layer.dim(0);
      const std::size_t slab = layer.size() / n;
      Shape s_shape(layer.shape().begin() + 1, layer.shape().end());
      for (std::size_t i = 0; i < n; ++i) {
        Tensor one(s_shape, std::vector<double>(layer.data().begin() + static_cast<std::ptrdiff_t>(i * slab),
                                               layer.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * slab)));
        (chunk[i]->label == Label::correct ? good : bad).add(one);
      }
    }
    for (const auto* seq : chunk) ++(seq->label == Label::correct ? s.correct_count : s.incorrect_count);
  }
  const std::size_t v = model.config.joints();
  s.all = all.mean();
  s.correct = good.slices() ? good.mean() : AttentionMap{Tensor({v, v})};
  s.incorrect = bad.slices() ? bad.mean() : AttentionMap{Tensor({v, v})};
  return s;
}

std::string render_importance_text(std::span<const ImportanceRow> rows, const SkeletonTopology& topology,
                                   const HypergraphPartition& partition) {
  const std::size_t v = topology.joint_count();
  check_rows(rows, v);
  const auto group = partition.group_of(v);
  static constexpr std::string_view kShades = " .:-=+*#%@";
  constexpr std::size_t kLabel = 16, kCell = 7;

  std::ostringstream out;
  out << pad("joint", kLabel);
  for (std::size_t j = 0; j < v; ++j) out << pad(std::to_string(j), kCell);
  out << '\n' << pad("group", kLabel);
  for (std::size_t j = 0; j < v; ++j) out << pad(std::string(1, static_cast<char>('A' + group[j])), kCell);
  out << '\n';
  for (const auto& r : rows) {
    const double mx = row_max(r);
    out << pad(r.label, kLabel);
    for (double x : r.importance) out << pad(fmt("%.4f", x), kCell);
    out << '\n' << pad("", kLabel);
    for (double x : r.importance) {
      const std::size_t level = mx > 0 ? std::min<std::size_t>(kShades.size() - 1,
                                                               static_cast<std::size_t>(x / mx * (kShades.size() - 1) + 0.5))
                                       : 0;
      out << pad(std::string(4, kShades[level]), kCell);
    }
    out << '\n';
    if (!r.contrast.empty()) {
      out << pad("  contrast", kLabel);
      for (double x : r.contrast) out << pad(fmt("%+.3f", x), kCell);
      out << '\n';
    }
  }
  out << "groups:";
  for (std::size_t g = 0; g < partition.group_count(); ++g)
    out << ' ' << static_cast<char>('A' + g) << '=' << partition.group_names[g];
  out << "\njoints:";
  for (std::size_t j = 0; j < v; ++j) out << ' ' << j << '=' << topology.joint_names[j];
  out << '\n';
  return out.str();
}

std::string render_importance_svg(std::span<const ImportanceRow> rows, const SkeletonTopology& topology,
                                  const HypergraphPartition& partition) {
  const std::size_t v = topology.joint_count();
  check_rows(rows, v);
  const auto group = partition.group_of(v);
  constexpr int kLeft = 140, kTop = 40, kCell = 28, kNames = 110;
  const int width = kLeft + static_cast<int>(v) * kCell + 20;
  const int height = kTop + static_cast<int>(rows.size()) * kCell + kNames + 30;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  out << "<rect width=\"" << width << "\" height=\"" << height << "\" fill=\"white\"/>\n";
  for (std::size_t j = 0; j < v; ++j) {
    const int x = kLeft + static_cast<int>(j) * kCell;
    out << "<rect x=\"" << x << "\" y=\"" << kTop - 14 << "\" width=\"" << kCell << "\" height=\"8\" fill=\""
        << kGroupColors[group[j] % std::size(kGroupColors)] << "\"/>\n";
    out << "<text x=\"" << x + kCell / 2 << "\" y=\"" << kTop - 18 << "\" text-anchor=\"middle\">" << j
        << "</text>\n";
  }
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const int y = kTop + static_cast<int>(r) * kCell;
    const double mx = row_max(rows[r]);
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"end\">"
        << xml_escape(rows[r].label) << "</text>\n";
    for (std::size_t j = 0; j < v; ++j) {
      const double s = mx > 0 ? rows[r].importance[j] / mx : 0.0;
      const int shade = 255 - static_cast<int>(s * 200.0 + 0.5);
      char color[16];
      std::snprintf(color, sizeof color, "#%02x%02xff", shade, shade);
      out << "<rect x=\"" << kLeft + static_cast<int>(j) * kCell << "\" y=\"" << y << "\" width=\"" << kCell
          << "\" height=\"" << kCell << "\" fill=\"" << color << "\" stroke=\"white\"><title>"
          << xml_escape(topology.joint_names[j]) << ' ' << fmt("%.4f", rows[r].importance[j])
          << "</title></rect>\n";
    }
  }
  const int names_y = kTop + static_cast<int>(rows.size()) * kCell + 8;
  for (std::size_t j = 0; j < v; ++j) {
    const int x = kLeft + static_cast<int>(j) * kCell + kCell / 2;
    out << "<text x=\"" << x << "\" y=\"" << names_y << "\" transform=\"rotate(60 " << x << ' ' << names_y
        << ")\" fill=\"" << kGroupColors[group[j] % std::size(kGroupColors)] << "\">"
        << xml_escape(topology.joint_names[j]) << "</text>\n";
  }
  int lx = 10;
  const int ly = height - 10;
  for (std::size_t g = 0; g < partition.group_count(); ++g) {
    out << "<rect x=\"" << lx << "\" y=\"" << ly - 8 << "\" width=\"8\" height=\"8\" fill=\""
        << kGroupColors[g % std::size(kGroupColors)] << "\"/>";
    out << "<text x=\"" << lx + 11 << "\" y=\"" << ly << "\">" << xml_escape(partition.group_names[g])
        << "</text>\n";
    lx += 20 + 6 * static_cast<int>(partition.group_names[g].size());
  }
  out << "</svg>\n";
  return out.str();
}

std::string importance_to_json(std::span<const ImportanceRow> rows, const SkeletonTopology& topology,
                               const HypergraphPartition& partition, std::span<const AttentionMap> maps) {
  const std::size_t v = topology.joint_count();
  check_rows(rows, v);
  if (!maps.empty() && maps.size() != rows.size()) throw std::invalid_argument("one map per row expected");
  nlohmann::ordered_json j;
  j["schema"] = kImportanceSchema;
  j["joints"] = topology.joint_names;
  j["group_names"] = partition.group_names;
  j["group_of_joint"] = partition.group_of(v);
  j["rows"] = nlohmann::ordered_json::array();
  for (std::size_t r = 0; r < rows.size(); ++r) {
    nlohmann::ordered_json row;
    row["label"] = rows[r].label;
    row["importance"] = rows[r].importance;
    if (!rows[r].contrast.empty()) row["contrast"] = rows[r].contrast;
    if (!maps.empty()) {
      auto m = nlohmann::ordered_json::array();
      for (std::size_t i = 0; i < v; ++i)
        m.push_back(std::vector<double>(maps[r].m.data().begin() + static_cast<std::ptrdiff_t>(i * v),
                                        maps[r].m.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * v)));
      row["attention"] = std::move(m);
    }
    j["rows"].push_back(std::move(row));
  }
  return j.dump(2) + "\n";
}

}  // namespace rehab
