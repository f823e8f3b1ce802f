#pragma once

// Parametric generator of labeled exercise repetitions on the Kinect V2
// skeleton. A neutral standing pose is animated through a raise -> hold ->
// return phase profile by forward kinematics; each error class moves one
// class-defining angle away from the correct target by a margin.
//
// Body frame: x toward the subject's left, y up, z forward. Meters.
// Legs and hips never move.

#include <cstddef>
#include <cstdint>

#include "rehab/sequence.hpp"

namespace rehab {

struct MotionSpec {
  Exercise exercise = Exercise::torso_rotation;
  Label error_class = Label::correct;

  /// Upper-arm angle from hanging (0) through horizontal (90) to overhead (180). Both arms,
  /// except in flank_stretch where it is the raised (right) arm only.
  double arm_elevation_deg = 0.0;
  /// Twist of the upper body about the vertical axis, toward the left.
  double torso_rotation_deg = 0.0;
  /// Sideways lean of the upper body about SpineBase, toward the left.
  double lateral_lean_deg = 0.0;
  /// Horizontal angle of the raised arms away from straight ahead (0) toward the sides (90).
  double arm_spread_deg = 0.0;
  double elbow_flex_deg = 0.0;
  /// flank_stretch only: elevation of the non-raised (left) arm, sideways.
  double opposite_arm_elevation_deg = 0.0;

  double noise_sigma = 0.0;
  std::size_t frames_raw = 60;
  double fps = 30.0;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument when an angle leaves its documented range.
  void validate() const;
};

/// Target angles for an exercise/class with the class-defining angle moved by `margin_deg`.
MotionSpec default_motion(Exercise exercise, Label error_class, double margin_deg = 25.0);

inline constexpr double kEasyMarginDeg = 25.0;
inline constexpr double kHardMarginDeg = 8.0;

/// 0 -> 1 raised-cosine ramp over the first 30% of the repetition, hold, symmetric return.
double phase_profile(double normalized_time);

/// Frame index where the phase profile peaks (middle of the hold).
std::size_t peak_frame(std::size_t frames);

/// Joint positions [kJointCount][3] for the pose at phase `phase` in [0, 1].
std::vector<double> pose_at(const MotionSpec& spec, double phase);

SkeletonSequence generate(const MotionSpec& spec);

struct SynthOptions {
  double margin_deg = kEasyMarginDeg;
  /// Uniform per-repetition perturbation of every target angle, +/- this many degrees.
  double jitter_deg = 3.0;
  std::size_t min_frames = 50;
  std::size_t max_frames = 80;
  Group group = Group::simulated;

  /// 25 degree margins, +/-3 degree jitter.
  static SynthOptions easy() { return {}; }
  /// 8 degree margins with +/-6 degree jitter, so repetitions overlap neighbouring classes.
  static SynthOptions hard() {
    SynthOptions o;
    o.margin_deg = kHardMarginDeg;
    o.jitter_deg = 6.0;
    return o;
  }
};

inline constexpr double kEasyNoiseSigma = 0.01;
inline constexpr double kHardNoiseSigma = 0.02;

/// Balanced 4-class corpus with 4 * n_per_class repetitions, each with its own derived seed.
Corpus generate_corpus(std::size_t n_per_class, Exercise exercise, double noise_sigma, std::uint64_t seed,
                       const SynthOptions& options = {});

/// Deterministic 64-bit mix used to derive per-item seeds from a root seed.
std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index);

}  // namespace rehab
