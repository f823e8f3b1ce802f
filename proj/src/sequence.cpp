#include "rehab/sequence.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace rehab {
namespace {

constexpr std::array<std::string_view, 3> kExerciseNames{"torso_rotation", "flank_stretch", "hiding_face"};
constexpr std::array<std::string_view, 4> kLabelNames{"correct", "error1", "error2", "error3"};

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void append_number(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

bool parse_number(std::string_view s, double& v) {
  s = trim(s);
  if (s.empty()) return false;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  return res.ec == std::errc() && res.ptr == s.data() + s.size();
}

}  // namespace

std::string_view to_string(Exercise e) { return kExerciseNames.at(static_cast<std::size_t>(e)); }
std::string_view to_string(Label l) { return kLabelNames.at(static_cast<std::size_t>(l)); }

Exercise parse_exercise(std::string_view s) {
  for (std::size_t i = 0; i < kExerciseNames.size(); ++i)
    if (kExerciseNames[i] == s) return static_cast<Exercise>(i);
  throw std::invalid_argument("unknown exercise '" + std::string(s) +
                              "' (expected torso_rotation, flank_stretch or hiding_face)");
}

Label parse_label(std::string_view s) {
  for (std::size_t i = 0; i < kLabelNames.size(); ++i)
    if (kLabelNames[i] == s) return static_cast<Label>(i);
  throw std::invalid_argument("unknown label '" + std::string(s) + "' (expected correct, error1, error2 or error3)");
}

Group parse_group(std::string_view s) {
  if (s == "1" || s == "patients") return Group::patients;
  if (s == "2" || s == "healthy") return Group::healthy;
  if (s == "3" || s == "simulated") return Group::simulated;
  throw std::invalid_argument("unknown group '" + std::string(s) + "' (expected 1, 2 or 3)");
}

ParseError::ParseError(std::string file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), file_(std::move(file)), line_(line) {}

void SkeletonSequence::validate() const {
  if (frames < 2) throw std::invalid_argument("sequence needs at least 2 frames, got " + std::to_string(frames));
  if (channels != 2 && channels != 3) {
    throw std::invalid_argument("sequence channels must be 2 or 3, got " + std::to_string(channels));
  }
  if (coords.size() != frames * kJointCount * channels) {
    throw std::invalid_argument("sequence coordinate count does not match frames x 25 x channels");
  }
  for (double v : coords) {
    if (!std::isfinite(v)) throw std::invalid_argument("sequence contains a non-finite coordinate");
  }
}

std::array<std::size_t, kClassCount> Corpus::class_counts(std::optional<Exercise> exercise) const {
  std::array<std::size_t, kClassCount> counts{};
  for (const auto& s : sequences) {
    if (!exercise || s.exercise == *exercise) ++counts[class_index(s.label)];
  }
  return counts;
}

Exercise Corpus::single_exercise() const {
  if (sequences.empty()) throw std::invalid_argument("corpus is empty");
  const Exercise e = sequences.front().exercise;
  for (const auto& s : sequences) {
    if (s.exercise != e) {
      throw std::invalid_argument("corpus mixes exercises (" + std::string(to_string(e)) + " and " +
                                  std::string(to_string(s.exercise)) + ")");
    }
  }
  return e;
}

std::string format_sequence(const SkeletonSequence& seq) {
  seq.validate();
  std::string out;
  out.reserve(seq.coords.size() * 20 + 64);
  out += "exercise: ";
  out += to_string(seq.exercise);
  out += "\nlabel: ";
  out += to_string(seq.label);
  out += "\ngroup: ";
  out += std::to_string(static_cast<int>(seq.group));
  out += "\nfps: ";
  append_number(out, seq.fps);
  out += '\n';
  const std::size_t per_frame = kJointCount * seq.channels;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t k = 0; k < per_frame; ++k) {
      if (k) out += ',';
      append_number(out, seq.coords[t * per_frame + k]);
    }
    out += '\n';
  }
  return out;
}

void write_sequence(std::ostream& out, const SkeletonSequence& seq) { out << format_sequence(seq); }

SkeletonSequence read_sequence(std::istream& in, const std::string& name) {
  SkeletonSequence seq;
  seq.source_id = std::filesystem::path(name).stem().string();
  bool have_exercise = false, have_label = false, have_group = false, have_fps = false;
  std::string line;
  std::size_t lineno = 0;
  std::size_t channels = 0;

  auto header = [&](std::string_view key, std::string_view value) {
    try {
      if (key == "exercise") {
        seq.exercise = parse_exercise(value);
        have_exercise = true;
      } else if (key == "label") {
        seq.label = parse_label(value);
        have_label = true;
      } else if (key == "group") {
        seq.group = parse_group(value);
        have_group = true;
      } else if (key == "fps") {
        if (!parse_number(value, seq.fps) || !std::isfinite(seq.fps) || seq.fps <= 0) {
          throw std::invalid_argument("fps must be a positive number");
        }
        have_fps = true;
      } else {
        throw std::invalid_argument("unknown header key '" + std::string(key) + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw ParseError(name, lineno, e.what());
    }
  };

  while (std::getline(in, line)) {
    ++lineno;
    const std::string_view s = trim(line);
    if (s.empty()) continue;
    const auto colon = s.find(':');
    if (colon != std::string_view::npos) {
      if (seq.frames > 0) throw ParseError(name, lineno, "header line after frame data");
      header(trim(s.substr(0, colon)), trim(s.substr(colon + 1)));
      continue;
    }
    const std::size_t values = static_cast<std::size_t>(std::count(s.begin(), s.end(), ',')) + 1;
    if (channels == 0) {
      if (values == kJointCount * 3) {
        channels = 3;
      } else if (values == kJointCount * 2) {
        channels = 2;
      } else {
        const std::string joints = values % 3 == 0   ? std::to_string(values / 3) + " joints in 3-D"
                                   : values % 2 == 0 ? std::to_string(values / 2) + " joints in 2-D"
                                                     : "an incomplete joint";
        throw ParseError(name, lineno,
                         "expected 25 joints per frame (75 values for 3-D or 50 for 2-D), got " +
                             std::to_string(values) + " values (" + joints + ")");
      }
    } else if (values != kJointCount * channels) {
      throw ParseError(name, lineno,
                       "expected 25 joints per frame (" + std::to_string(kJointCount * channels) + " values), got " +
                           std::to_string(values) + " values");
    }
    std::size_t start = 0;
    for (std::size_t k = 0; k < values; ++k) {
      const auto comma = s.find(',', start);
      const auto field = s.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
      double v = 0.0;
      if (!parse_number(field, v)) {
        throw ParseError(name, lineno, "value " + std::to_string(k + 1) + " is not a number: '" + std::string(field) + "'");
      }
      if (!std::isfinite(v)) throw ParseError(name, lineno, "value " + std::to_string(k + 1) + " is not finite");
      seq.coords.push_back(v);
      start = comma + 1;
    }
    ++seq.frames;
  }
  if (!have_exercise || !have_label || !have_group || !have_fps) {
    throw ParseError(name, lineno, "missing header (need exercise, label, group and fps)");
  }
  if (seq.frames < 2) {
    throw ParseError(name, lineno, "sequence needs at least 2 frames, got " + std::to_string(seq.frames));
  }
  seq.channels = channels;
  return seq;
}

void save_sequence(const std::filesystem::path& path, const SkeletonSequence& seq) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << format_sequence(seq);
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

SkeletonSequence load_sequence(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return read_sequence(in, path.filename().string());
}

void save_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create directory " + dir.string() + ": " + ec.message());
  for (const auto& s : corpus.sequences) {
    if (s.source_id.empty()) throw std::invalid_argument("sequence without source_id cannot be saved");
    save_sequence(dir / (s.source_id + std::string(kSequenceExtension)), s);
  }
}

Corpus load_corpus(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("corpus directory not found: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == kSequenceExtension) files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  Corpus corpus;
  corpus.sequences.reserve(files.size());
  for (const auto& f : files) corpus.sequences.push_back(load_sequence(f));
  return corpus;
}

SkeletonSequence interpolate(const SkeletonSequence& seq, std::size_t target_frames) {
  if (target_frames < 2) throw std::invalid_argument("interpolation target must be at least 2 frames");
  seq.validate();
  if (target_frames == seq.frames) return seq;
  SkeletonSequence out = seq;
  out.frames = target_frames;
  const std::size_t per_frame = kJointCount * seq.channels;
  out.coords.assign(target_frames * per_frame, 0.0);
  const std::size_t span_src = seq.frames - 1;
  const std::size_t span_dst = target_frames - 1;
  for (std::size_t i = 0; i < target_frames; ++i) {
    // Source position i * span_src / span_dst, split into integer frame + exact remainder.
    const std::size_t num = i * span_src;
    const std::size_t lo = num / span_dst;
    const double frac = static_cast<double>(num % span_dst) / static_cast<double>(span_dst);
    const double* a = seq.coords.data() + lo * per_frame;
    double* dst = out.coords.data() + i * per_frame;
    if (frac == 0.0) {
      std::copy_n(a, per_frame, dst);
      continue;
    }
    const double* b = a + per_frame;
    for (std::size_t k = 0; k < per_frame; ++k) dst[k] = a[k] + frac * (b[k] - a[k]);
  }
  return out;
}

SkeletonSequence center_on_spine_base(const SkeletonSequence& seq) {
  SkeletonSequence out = seq;
  for (std::size_t t = 0; t < seq.frames; ++t) {
    for (std::size_t c = 0; c < seq.channels; ++c) {
      const double origin = seq.at(t, SpineBase, c);
      for (std::size_t j = 0; j < kJointCount; ++j) out.at(t, j, c) -= origin;
    }
  }
  return out;
}

Tensor to_model_tensor(const SkeletonSequence& seq) {
  seq.validate();
  Tensor x({seq.channels, seq.frames, kJointCount});
  for (std::size_t c = 0; c < seq.channels; ++c)
    for (std::size_t t = 0; t < seq.frames; ++t)
      for (std::size_t j = 0; j < kJointCount; ++j) x[(c * seq.frames + t) * kJointCount + j] = seq.at(t, j, c);
  return x;
}

SkeletonSequence from_model_tensor(const Tensor& x, const SkeletonSequence& meta) {
  if (x.rank() != 3 || x.dim(2) != kJointCount) {
    throw ShapeError("expected a [C,T,25] tensor, got " + to_string(x.shape()));
  }
  SkeletonSequence seq = meta;
  seq.channels = x.dim(0);
  seq.frames = x.dim(1);
  seq.coords.assign(x.size(), 0.0);
  for (std::size_t c = 0; c < seq.channels; ++c)
    for (std::size_t t = 0; t < seq.frames; ++t)
      for (std::size_t j = 0; j < kJointCount; ++j) seq.at(t, j, c) = x[(c * seq.frames + t) * kJointCount + j];
  return seq;
}

Tensor batch_tensor(std::span<const SkeletonSequence* const> seqs) {
  if (seqs.empty()) throw std::invalid_argument("cannot batch zero sequences");
  const std::size_t c = seqs.front()->channels;
  const std::size_t t = seqs.front()->frames;
  Tensor out({seqs.size(), c, t, kJointCount});
  const std::size_t per = c * t * kJointCount;
  for (std::size_t n = 0; n < seqs.size(); ++n) {
    if (seqs[n]->channels != c || seqs[n]->frames != t) {
      throw ShapeError("batch sequences disagree on frames/channels; interpolate first");
    }
    const Tensor x = to_model_tensor(*seqs[n]);
    std::copy(x.values().begin(), x.values().end(), out.data().begin() + static_cast<std::ptrdiff_t>(n * per));
  }
  return out;
}

}  // namespace rehab
