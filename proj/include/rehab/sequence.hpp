#pragma once

// Skeleton sequences, corpora and the canonical on-disk text format.
//
// One file per repetition:
//
//   exercise: torso_rotation
//   label: correct
//   group: 3
//   fps: 30
//   x0,y0,z0,x1,y1,z1,...      <- one line per frame, 75 values (50 for 2-D)
//
// Joint order is the canonical Kinect V2 order from skeleton.hpp. Numbers are
// written in shortest round-trip form, so save -> load -> save is byte-identical.

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "rehab/skeleton.hpp"
#include "rehab/tensor.hpp"

namespace rehab {

inline constexpr std::size_t kClassCount = 4;

enum class Exercise { torso_rotation = 0, flank_stretch = 1, hiding_face = 2 };
enum class Label { correct = 0, error1 = 1, error2 = 2, error3 = 3 };
enum class Group { patients = 1, healthy = 2, simulated = 3 };

std::string_view to_string(Exercise e);
std::string_view to_string(Label l);
Exercise parse_exercise(std::string_view s);
Label parse_label(std::string_view s);
/// Accepts "1"/"2"/"3" or "patients"/"healthy"/"simulated".
Group parse_group(std::string_view s);

constexpr std::size_t class_index(Label l) { return static_cast<std::size_t>(l); }
constexpr Label label_from_index(std::size_t i) { return static_cast<Label>(i); }

/// Reports a malformed file with its name and 1-based line number.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::string file, std::size_t line, const std::string& what);
  const std::string& file() const noexcept { return file_; }
  std::size_t line() const noexcept { return line_; }

 private:
  std::string file_;
  std::size_t line_;
};

struct SkeletonSequence {
  std::size_t frames = 0;
  std::size_t channels = 3;
  /// [frames][kJointCount][channels], row-major, meters.
  std::vector<double> coords;
  Exercise exercise = Exercise::torso_rotation;
  Label label = Label::correct;
  Group group = Group::simulated;
  double fps = 30.0;
  std::string source_id;

  double& at(std::size_t t, std::size_t joint, std::size_t c) {
    return coords[(t * kJointCount + joint) * channels + c];
  }
  double at(std::size_t t, std::size_t joint, std::size_t c) const {
    return coords[(t * kJointCount + joint) * channels + c];
  }
  /// Throws std::invalid_argument if T < 2, C not in {2,3}, sizes disagree or a value is non-finite.
  void validate() const;
};

struct Corpus {
  std::vector<SkeletonSequence> sequences;

  std::size_t size() const noexcept { return sequences.size(); }
  bool empty() const noexcept { return sequences.empty(); }
  /// Per-class counts over sequences of `exercise`, or of every sequence when unset.
  std::array<std::size_t, kClassCount> class_counts(std::optional<Exercise> exercise = std::nullopt) const;
  /// The single exercise shared by all sequences; throws on an empty or mixed corpus.
  Exercise single_exercise() const;
};

void write_sequence(std::ostream& out, const SkeletonSequence& seq);
std::string format_sequence(const SkeletonSequence& seq);
/// `name` is used in error messages and as the source id.
SkeletonSequence read_sequence(std::istream& in, const std::string& name);

void save_sequence(const std::filesystem::path& path, const SkeletonSequence& seq);
SkeletonSequence load_sequence(const std::filesystem::path& path);

inline constexpr std::string_view kSequenceExtension = ".skel";

/// Writes `<source_id>.skel` per sequence, creating the directory if needed.
void save_corpus(const std::filesystem::path& dir, const Corpus& corpus);
/// Loads every `.skel` file in `dir`, sorted by file name.
Corpus load_corpus(const std::filesystem::path& dir);

/// Piecewise-linear resampling over normalized time; first and last frames are kept exactly.
SkeletonSequence interpolate(const SkeletonSequence& seq, std::size_t target_frames);

/// Subtracts the per-frame SpineBase position from every joint.
SkeletonSequence center_on_spine_base(const SkeletonSequence& seq);

/// Channel-first layout [C, T, V].
Tensor to_model_tensor(const SkeletonSequence& seq);
/// Inverse of to_model_tensor; metadata comes from `meta`.
SkeletonSequence from_model_tensor(const Tensor& x, const SkeletonSequence& meta);

/// Stacks sequences (all with equal T and C) into [N, C, T, V].
Tensor batch_tensor(std::span<const SkeletonSequence* const> seqs);

}  // namespace rehab
