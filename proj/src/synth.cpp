#include "rehab/synth.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace rehab {
namespace {

using Vec3 = std::array<double, 3>;

constexpr double kUpperArm = 0.28;
constexpr double kForearm = 0.25;
constexpr double kHand = 0.08;
constexpr double kHandTip = 0.07;
constexpr double kThumb = 0.05;

Vec3 operator+(Vec3 a, Vec3 b) { return {a[0] + b[0], a[1] + b[1], a[2] + b[2]}; }
Vec3 operator-(Vec3 a, Vec3 b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }
Vec3 operator*(double s, Vec3 a) { return {s * a[0], s * a[1], s * a[2]}; }

Vec3 normalized(Vec3 a) {
  const double n = std::sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2]);
  return {a[0] / n, a[1] / n, a[2] / n};
}

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

// Neutral standing pose; arm joints are overwritten by forward kinematics.
std::array<Vec3, kJointCount> neutral_pose() {
  std::array<Vec3, kJointCount> p{};
  p[SpineBase] = {0.0, 1.00, 0.0};
  p[SpineMid] = {0.0, 1.25, 0.0};
  p[SpineShoulder] = {0.0, 1.45, 0.0};
  p[Neck] = {0.0, 1.52, 0.0};
  p[Head] = {0.0, 1.65, 0.02};
  p[ShoulderLeft] = {0.18, 1.42, 0.0};
  p[ShoulderRight] = {-0.18, 1.42, 0.0};
  p[HipLeft] = {0.09, 0.95, 0.0};
  p[KneeLeft] = {0.09, 0.52, 0.02};
  p[AnkleLeft] = {0.09, 0.10, 0.0};
  p[FootLeft] = {0.09, 0.04, 0.12};
  p[HipRight] = {-0.09, 0.95, 0.0};
  p[KneeRight] = {-0.09, 0.52, 0.02};
  p[AnkleRight] = {-0.09, 0.10, 0.0};
  p[FootRight] = {-0.09, 0.04, 0.12};
  return p;
}

struct ArmAngles {
  double elevation;
  double spread;
  double elbow_flex;
};

struct ArmJoints {
  std::size_t elbow, wrist, hand, tip, thumb;
};

// Places one arm in the (unrotated) torso frame. `side` is +1 for left, -1 for right.
void place_arm(std::array<Vec3, kJointCount>& p, std::size_t shoulder, const ArmJoints& j, double side,
               const ArmAngles& a) {
  const double e = radians(a.elevation);
  const double s = radians(a.spread);
  const double f = radians(a.elbow_flex);
  const Vec3 horizontal{side * std::sin(s), 0.0, std::cos(s)};
  const Vec3 up{0.0, 1.0, 0.0};
  const Vec3 upper = std::sin(e) * horizontal - std::cos(e) * up;
  // Unit vector orthogonal to the upper arm, in the plane of the arm and the vertical.
  const Vec3 bend = std::cos(e) * horizontal + std::sin(e) * up;
  const Vec3 fore = std::cos(f) * upper + std::sin(f) * bend;
  const Vec3 thumb_dir = normalized(fore + 0.6 * bend);
  p[j.elbow] = p[shoulder] + kUpperArm * upper;
  p[j.wrist] = p[j.elbow] + kForearm * fore;
  p[j.hand] = p[j.wrist] + kHand * fore;
  p[j.tip] = p[j.hand] + kHandTip * fore;
  p[j.thumb] = p[j.hand] + kThumb * thumb_dir;
}

bool is_lower_body(std::size_t j) {
  return j == SpineBase || j == HipLeft || j == KneeLeft || j == AnkleLeft || j == FootLeft || j == HipRight ||
         j == KneeRight || j == AnkleRight || j == FootRight;
}

void check_range(const char* name, double v, double lo, double hi) {
  if (!std::isfinite(v) || v < lo || v > hi) {
    throw std::invalid_argument(std::string(name) + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
                                ", " + std::to_string(hi) + "]");
  }
}

}  // namespace

void MotionSpec::validate() const {
  if (static_cast<int>(exercise) < 0 || static_cast<int>(exercise) > 2 || static_cast<int>(error_class) < 0 ||
      static_cast<int>(error_class) > 3) {
    throw std::invalid_argument("invalid exercise/error class combination");
  }
  check_range("arm_elevation_deg", arm_elevation_deg, 0.0, 180.0);
  check_range("torso_rotation_deg", torso_rotation_deg, -90.0, 90.0);
  check_range("lateral_lean_deg", lateral_lean_deg, -60.0, 60.0);
  check_range("arm_spread_deg", arm_spread_deg, -45.0, 135.0);
  check_range("elbow_flex_deg", elbow_flex_deg, 0.0, 150.0);
  check_range("opposite_arm_elevation_deg", opposite_arm_elevation_deg, 0.0, 180.0);
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw std::invalid_argument("noise_sigma must be >= 0");
  if (frames_raw < 2) throw std::invalid_argument("frames_raw must be at least 2");
  if (!(fps > 0.0)) throw std::invalid_argument("fps must be positive");
}

MotionSpec default_motion(Exercise exercise, Label error_class, double margin_deg) {
  MotionSpec m;
  m.exercise = exercise;
  m.error_class = error_class;
  switch (exercise) {
    case Exercise::torso_rotation:
      // Arms raised forward slightly above horizontal, torso twisted.
      m.arm_elevation_deg = 100.0;
      m.torso_rotation_deg = 45.0;
      if (error_class == Label::error1) m.arm_elevation_deg -= margin_deg;  // arms not raised enough
      if (error_class == Label::error2) m.torso_rotation_deg -= margin_deg;  // insufficient rotation
      if (error_class == Label::error3) m.lateral_lean_deg += margin_deg;  // leaning to the side
      break;
    case Exercise::flank_stretch:
      // Right arm bent over the head, body tilted left, left arm along the body.
      m.arm_elevation_deg = 160.0;
      m.arm_spread_deg = 90.0;
      m.elbow_flex_deg = 60.0;
      m.lateral_lean_deg = 30.0;
      if (error_class == Label::error1) m.opposite_arm_elevation_deg += margin_deg;  // opposite arm off the body
      if (error_class == Label::error2) m.lateral_lean_deg -= margin_deg;  // body not tilted
      if (error_class == Label::error3) m.elbow_flex_deg -= margin_deg;  // raised arm not bent
      break;
    case Exercise::hiding_face:
      // Upper arms horizontal and spread, forearms folded up in front of the face.
      m.arm_elevation_deg = 90.0;
      m.arm_spread_deg = 45.0;
      m.elbow_flex_deg = 120.0;
      if (error_class == Label::error1) m.arm_elevation_deg -= margin_deg;  // upper arms not raised enough
      if (error_class == Label::error2) m.arm_spread_deg -= margin_deg;  // arms not outspread enough
      if (error_class == Label::error3) m.elbow_flex_deg -= margin_deg;  // hands not raised to the face
      break;
  }
  return m;
}

double phase_profile(double t) {
  constexpr double ramp = 0.3;
  if (t <= 0.0 || t >= 1.0) return 0.0;
  if (t < ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * t / ramp);
  if (t > 1.0 - ramp) return 0.5 - 0.5 * std::cos(std::numbers::pi * (1.0 - t) / ramp);
  return 1.0;
}

std::size_t peak_frame(std::size_t frames) { return frames / 2; }

std::vector<double> pose_at(const MotionSpec& spec, double phase) {
  auto p = neutral_pose();
  const ArmJoints left{ElbowLeft, WristLeft, HandLeft, HandTipLeft, ThumbLeft};
  const ArmJoints right{ElbowRight, WristRight, HandRight, HandTipRight, ThumbRight};
  const ArmAngles raised{phase * spec.arm_elevation_deg, phase * spec.arm_spread_deg, phase * spec.elbow_flex_deg};
  place_arm(p, ShoulderRight, right, -1.0, raised);
  if (spec.exercise == Exercise::flank_stretch) {
    place_arm(p, ShoulderLeft, left, +1.0, ArmAngles{phase * spec.opposite_arm_elevation_deg, phase * 90.0, 0.0});
  } else {
    place_arm(p, ShoulderLeft, left, +1.0, raised);
  }

  // Rigid upper-body motion about SpineBase: twist about y, then lean about z.
  const double tw = radians(phase * spec.torso_rotation_deg);
  const double ln = radians(phase * spec.lateral_lean_deg);
  const Vec3 origin = p[SpineBase];
  for (std::size_t j = 0; j < kJointCount; ++j) {
    if (is_lower_body(j)) continue;
    const Vec3 r = p[j] - origin;
    const Vec3 t{r[0] * std::cos(tw) + r[2] * std::sin(tw), r[1], -r[0] * std::sin(tw) + r[2] * std::cos(tw)};
    const Vec3 l{t[0] * std::cos(ln) + t[1] * std::sin(ln), -t[0] * std::sin(ln) + t[1] * std::cos(ln), t[2]};
    p[j] = origin + l;
  }

  std::vector<double> out(kJointCount * 3);
  for (std::size_t j = 0; j < kJointCount; ++j)
    for (std::size_t c = 0; c < 3; ++c) out[j * 3 + c] = p[j][c];
  return out;
}

SkeletonSequence generate(const MotionSpec& spec) {
  spec.validate();
  SkeletonSequence seq;
  seq.frames = spec.frames_raw;
  seq.channels = 3;
  seq.exercise = spec.exercise;
  seq.label = spec.error_class;
  seq.fps = spec.fps;
  seq.coords.reserve(seq.frames * kJointCount * 3);
  for (std::size_t t = 0; t < seq.frames; ++t) {
    const double tau = static_cast<double>(t) / static_cast<double>(seq.frames - 1);
    const auto pose = pose_at(spec, phase_profile(tau));
    seq.coords.insert(seq.coords.end(), pose.begin(), pose.end());
  }
  if (spec.noise_sigma > 0.0) {
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> jitter(0.0, spec.noise_sigma);
    for (auto& v : seq.coords) v += jitter(rng);
  }
  return seq;
}

std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  // splitmix64 finalizer over root and index
  std::uint64_t z = root + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

Corpus generate_corpus(std::size_t n_per_class, Exercise exercise, double noise_sigma, std::uint64_t seed,
                       const SynthOptions& options) {
  if (n_per_class < 1) throw std::invalid_argument("n_per_class must be at least 1");
  if (options.min_frames < 2 || options.max_frames < options.min_frames) {
    throw std::invalid_argument("invalid raw frame range");
  }
  Corpus corpus;
  corpus.sequences.reserve(kClassCount * n_per_class);
  for (std::size_t c = 0; c < kClassCount; ++c) {
    for (std::size_t k = 0; k < n_per_class; ++k) {
      const std::uint64_t item_seed = derive_seed(seed, c * n_per_class + k);
      std::mt19937_64 rng(item_seed);
      std::uniform_int_distribution<std::size_t> frames(options.min_frames, options.max_frames);
      std::uniform_real_distribution<double> jitter(-options.jitter_deg, options.jitter_deg);

      MotionSpec spec = default_motion(exercise, label_from_index(c), options.margin_deg);
      spec.frames_raw = frames(rng);
      spec.arm_elevation_deg += jitter(rng);
      spec.torso_rotation_deg += jitter(rng);
      spec.lateral_lean_deg += jitter(rng);
      spec.arm_spread_deg += jitter(rng);
      spec.elbow_flex_deg = std::max(0.0, spec.elbow_flex_deg + jitter(rng));
      spec.opposite_arm_elevation_deg = std::max(0.0, spec.opposite_arm_elevation_deg + jitter(rng));
      spec.noise_sigma = noise_sigma;
      spec.seed = rng();

      SkeletonSequence seq = generate(spec);
      seq.group = options.group;
      char id[96];
      std::snprintf(id, sizeof id, "%s_%s_%03zu", std::string(to_string(exercise)).c_str(),
                    std::string(to_string(seq.label)).c_str(), k);
      seq.source_id = id;
      corpus.sequences.push_back(std::move(seq));
    }
  }
  return corpus;
}

}  // namespace rehab
