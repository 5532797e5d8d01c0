#include "sparsepose/synth.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "sparsepose/errors.hpp"

namespace sparsepose {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Joint indices of the standard tree.
enum J : int {
  kLeftHip = 1, kRightHip = 2, kSpine1 = 3, kLeftKnee = 4, kRightKnee = 5, kSpine2 = 6,
  kLeftAnkle = 7, kRightAnkle = 8, kSpine3 = 9, kNeck = 12, kLeftCollar = 13,
  kRightCollar = 14, kHead = 15, kLeftShoulder = 16, kRightShoulder = 17,
  kLeftElbow = 18, kRightElbow = 19,
};

class Params {
 public:
  explicit Params(std::uint64_t seed) : rng_(seed) {}
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
  double jitter() { return uniform(0.75, 1.25); }
  double phase() { return uniform(0.0, kTwoPi); }

 private:
  std::mt19937_64 rng_;
};

struct Frame {
  Vec3 root{0.0, kRestRootHeight, 0.0};
  RotMatrix global;
  std::array<RotMatrix, kNumLocal> local{};

  RotMatrix& at(int joint) { return local[static_cast<std::size_t>(joint - 1)]; }
};

// Arm hanging at the side: the rest pose holds the arms out horizontally.
constexpr double kArmDown = 1.25;

struct Walk {
  double freq, speed, radius, start, dir;
  double hip, knee, arm, elbow, twist, bob, head;
  double ph_head;

  explicit Walk(Params& p)
      : freq(p.uniform(0.8, 1.05)),
        speed(p.uniform(0.8, 1.3)),
        radius(p.uniform(1.2, 2.5)),
        start(p.phase()),
        dir(p.uniform(0, 1) < 0.5 ? -1.0 : 1.0),
        hip(0.45 * p.jitter()),
        knee(0.6 * p.jitter()),
        arm(0.35 * p.jitter()),
        elbow(0.3 * p.jitter()),
        twist(0.08 * p.jitter()),
        bob(0.02 * p.jitter()),
        head(0.1 * p.jitter()),
        ph_head(p.phase()) {}

  void legs_and_root(Frame& f, double t) const {
    const double ph = kTwoPi * freq * t;
    const double s = std::sin(ph);
    f.at(kLeftHip) = rot_x(-hip * s);
    f.at(kRightHip) = rot_x(hip * s);
    f.at(kLeftKnee) = rot_x(knee * (0.5 + 0.5 * std::sin(ph + 1.2)));
    f.at(kRightKnee) = rot_x(knee * (0.5 + 0.5 * std::sin(ph + std::numbers::pi + 1.2)));
    f.at(kLeftAnkle) = rot_x(0.15 * std::sin(ph - 0.6));
    f.at(kRightAnkle) = rot_x(-0.15 * std::sin(ph - 0.6));
    f.at(kSpine1) = rot_y(twist * s);
    f.at(kSpine3) = rot_y(-0.5 * twist * s);

    // Walk along a circle so positions stay bounded for any duration.
    const double psi = start + dir * speed * t / radius;
    f.root = Vec3(radius * std::cos(psi), kRestRootHeight - bob + bob * std::cos(2.0 * ph),
                  radius * std::sin(psi));
    const Vec3 heading = dir * Vec3(-std::sin(psi), 0.0, std::cos(psi));
    const double yaw = std::atan2(heading.x(), heading.z());
    f.global = rot_y(yaw) * rot_x(0.04 * std::sin(2.0 * ph));
  }

  void arms(Frame& f, double t) const {
    const double s = std::sin(kTwoPi * freq * t);
    f.at(kLeftShoulder) = rot_x(arm * s) * rot_z(-kArmDown);
    f.at(kRightShoulder) = rot_x(-arm * s) * rot_z(kArmDown);
    f.at(kLeftElbow) = rot_y(-elbow * (1.0 + 0.5 * s));
    f.at(kRightElbow) = rot_y(elbow * (1.0 - 0.5 * s));
  }

  void neck(Frame& f, double t) const {
    f.at(kNeck) = rot_y(head * std::sin(kTwoPi * 0.3 * t + ph_head));
    f.at(kHead) = rot_x(0.5 * head * std::sin(kTwoPi * 0.45 * t + ph_head));
  }
};

struct Wave {
  double freq, lift, swing, elbow, ph, yaw;
  bool both;
  Vec3 root;

  explicit Wave(Params& p)
      : freq(p.uniform(0.5, 1.2)),
        lift(0.9 * p.jitter()),
        swing(0.4 * p.jitter()),
        elbow(0.8 * p.jitter()),
        ph(p.phase()),
        yaw(p.uniform(-std::numbers::pi, std::numbers::pi)),
        both(p.uniform(0, 1) < 0.5),
        root(p.uniform(-0.5, 0.5), kRestRootHeight, p.uniform(-0.5, 0.5)) {}

  // The waving arm rises above shoulder height; the other one hangs or
  // mirrors it with a phase lag.
  void right_arm(Frame& f, double t) const {
    const double s = std::sin(kTwoPi * freq * t + ph);
    f.at(kRightShoulder) = rot_x(-swing * s) * rot_z(kArmDown - lift * (1.2 + 0.6 * s));
    f.at(kRightElbow) = rot_y(-elbow * (0.6 + 0.4 * std::sin(kTwoPi * 2.0 * freq * t + ph)));
    f.at(kRightCollar) = rot_z(-0.1 * (1.0 + s));
  }

  void left_arm(Frame& f, double t) const {
    const double s = std::sin(kTwoPi * freq * t + ph + 1.0);
    if (both) {
      f.at(kLeftShoulder) = rot_x(-swing * s) * rot_z(-kArmDown + lift * (1.2 + 0.6 * s));
      f.at(kLeftElbow) = rot_y(elbow * (0.6 + 0.4 * s));
    } else {
      f.at(kLeftShoulder) = rot_x(0.1 * s) * rot_z(-kArmDown);
      f.at(kLeftElbow) = rot_y(-0.2 * (1.0 + 0.3 * s));
    }
  }

  void body(Frame& f, double t) const {
    f.root = root;
    f.global = rot_y(yaw);
    f.at(kSpine2) = rot_z(0.05 * std::sin(kTwoPi * freq * t + ph));
  }
};

struct Squat {
  double freq, depth, lean, arm, ph, yaw;
  Vec3 root;

  explicit Squat(Params& p)
      : freq(p.uniform(0.25, 0.45)),
        depth(p.uniform(0.5, 1.0)),
        lean(0.4 * p.jitter()),
        arm(0.9 * p.jitter()),
        ph(p.phase()),
        yaw(p.uniform(-std::numbers::pi, std::numbers::pi)),
        root(p.uniform(-0.5, 0.5), 0.0, p.uniform(-0.5, 0.5)) {}

  void apply(Frame& f, double t) const {
    const double s = depth * 0.5 * (1.0 - std::cos(kTwoPi * freq * t + ph));
    const double hip = 1.2 * s, knee = 2.0 * s, ankle = 0.8 * s;
    f.at(kLeftHip) = rot_x(-hip);
    f.at(kRightHip) = rot_x(-hip);
    f.at(kLeftKnee) = rot_x(knee);
    f.at(kRightKnee) = rot_x(knee);
    f.at(kLeftAnkle) = rot_x(-ankle);
    f.at(kRightAnkle) = rot_x(-ankle);
    f.at(kSpine1) = rot_x(lean * s);
    f.at(kLeftShoulder) = rot_x(-arm * s) * rot_z(-kArmDown);
    f.at(kRightShoulder) = rot_x(-arm * s) * rot_z(kArmDown);
    f.at(kLeftElbow) = rot_y(-0.2);
    f.at(kRightElbow) = rot_y(0.2);
    f.at(kNeck) = rot_x(-0.5 * lean * s);
    // Shin and thigh drop the pelvis; the feet stay roughly planted.
    const double drop = 0.38 * (1.0 - std::cos(hip)) + 0.40 * (1.0 - std::cos(knee - hip));
    f.root = Vec3(root.x(), kRestRootHeight - drop, root.z());
    f.global = rot_y(yaw);
  }
};

struct HeadTurn {
  double yaw_amp, pitch_amp, roll_amp, f_yaw, f_pitch, ph_yaw, ph_pitch;

  explicit HeadTurn(Params& p)
      : yaw_amp(p.uniform(0.5, 1.1)),
        pitch_amp(p.uniform(0.15, 0.4)),
        roll_amp(p.uniform(0.0, 0.15)),
        f_yaw(p.uniform(0.2, 0.6)),
        f_pitch(p.uniform(0.2, 0.6)),
        ph_yaw(p.phase()),
        ph_pitch(p.phase()) {}

  void apply(Frame& f, double t) const {
    const double yaw = yaw_amp * std::sin(kTwoPi * f_yaw * t + ph_yaw);
    const double pitch = pitch_amp * std::sin(kTwoPi * f_pitch * t + ph_pitch);
    const double roll = roll_amp * std::sin(kTwoPi * f_yaw * 0.5 * t + ph_pitch);
    f.at(kNeck) = rot_y(0.4 * yaw) * rot_x(0.5 * pitch);
    f.at(kHead) = rot_y(0.6 * yaw) * rot_x(0.5 * pitch) * rot_z(roll);
  }
};

ClipFrame to_clip_frame(const Frame& f) {
  ClipFrame out;
  out.root_pos = f.root;
  out.global_orient = matrix_to_axis_angle(f.global);
  for (std::size_t j = 0; j < kNumLocal; ++j) out.local_rot[j] = matrix_to_axis_angle(f.local[j]);
  return out;
}

}  // namespace

std::string_view motion_kind_name(MotionKind k) {
  switch (k) {
    case MotionKind::kWalkCycle: return "walk-cycle";
    case MotionKind::kArmWave: return "arm-wave";
    case MotionKind::kSquat: return "squat";
    case MotionKind::kHeadTurn: return "head-turn";
    case MotionKind::kComposite: return "composite";
  }
  return "unknown";
}

std::optional<MotionKind> parse_motion_kind(std::string_view name) {
  for (const auto k : {MotionKind::kWalkCycle, MotionKind::kArmWave, MotionKind::kSquat,
                       MotionKind::kHeadTurn, MotionKind::kComposite})
    if (motion_kind_name(k) == name) return k;
  return std::nullopt;
}

MotionClip rest_clip(std::size_t frames, double fps) {
  MotionClip clip;
  clip.fps = fps;
  clip.skeleton_hash = Skeleton::standard().hash();
  clip.frames.assign(frames, to_clip_frame(Frame{}));
  return clip;
}

MotionClip synth_motion(MotionKind kind, double duration_s, std::uint64_t seed, double fps) {
  if (!(duration_s > 0) || !std::isfinite(duration_s))
    throw InvalidArgument("synth_motion: duration must be positive");
  if (!(fps > 0) || !std::isfinite(fps)) throw InvalidArgument("synth_motion: fps must be positive");

  // Each kind draws its parameters in a fixed order from one stream.
  Params p(seed);
  const Walk walk(p);
  const Wave wave(p);
  const Squat squat(p);
  const HeadTurn head(p);

  const auto count = static_cast<std::size_t>(std::llround(duration_s * fps));
  MotionClip clip;
  clip.fps = fps;
  clip.skeleton_hash = Skeleton::standard().hash();
  clip.frames.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = static_cast<double>(i) / fps;
    Frame f;
    switch (kind) {
      case MotionKind::kWalkCycle:
        walk.legs_and_root(f, t);
        walk.arms(f, t);
        walk.neck(f, t);
        break;
      case MotionKind::kArmWave:
        wave.body(f, t);
        wave.right_arm(f, t);
        wave.left_arm(f, t);
        break;
      case MotionKind::kSquat:
        squat.apply(f, t);
        break;
      case MotionKind::kHeadTurn:
        head.apply(f, t);
        break;
      case MotionKind::kComposite:
        walk.legs_and_root(f, t);
        walk.arms(f, t);
        wave.right_arm(f, t);
        head.apply(f, t);
        break;
    }
    clip.frames.push_back(to_clip_frame(f));
  }
  return clip;
}

}  // namespace sparsepose
