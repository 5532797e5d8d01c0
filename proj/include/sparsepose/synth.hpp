#pragma once
// Procedural motion clips standing in for captured data.

#include <cstdint>
#include <optional>
#include <string_view>

#include "sparsepose/clip.hpp"

namespace sparsepose {

enum class MotionKind { kWalkCycle, kArmWave, kSquat, kHeadTurn, kComposite };

std::string_view motion_kind_name(MotionKind k);
/// Accepts "walk-cycle", "arm-wave", "squat", "head-turn", "composite".
std::optional<MotionKind> parse_motion_kind(std::string_view name);

/// Pelvis height of the standing rest pose for the standard skeleton.
inline constexpr double kRestRootHeight = 0.93;

/// round(duration_s * fps) frames of smooth sinusoidal joint trajectories,
/// deterministic in `seed`. Throws InvalidArgument for a non-positive
/// duration or rate.
MotionClip synth_motion(MotionKind kind, double duration_s, std::uint64_t seed, double fps = 60.0);

/// Every frame the rest pose: identity rotations, root at kRestRootHeight.
MotionClip rest_clip(std::size_t frames, double fps = 60.0);

}  // namespace sparsepose
