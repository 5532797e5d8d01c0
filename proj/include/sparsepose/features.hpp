#pragma once
// Per-frame tracker features and sliding windows.

#include <cstddef>
#include <span>
#include <vector>

#include "sparsepose/rotations.hpp"

namespace sparsepose {

/// World-space 6DoF observation of one tracked device.
struct TrackerFrame {
  Vec3 pos = Vec3::Zero();
  RotMatrix orient;
};

/// Device order within a frame: head, left hand, right hand.
inline constexpr std::size_t kNumDevices = 3;
inline constexpr std::size_t kFeaturesPerDevice = 18;

/// Tracker observations at a fixed rate; frames[t][device].
struct TrackerStream {
  double fps = 60.0;
  std::vector<std::vector<TrackerFrame>> frames;

  std::size_t size() const { return frames.size(); }
  std::size_t devices() const { return frames.empty() ? kNumDevices : frames.front().size(); }
};

/// Per device [pos(3), vel(3), 6D orientation(6), 6D angular velocity(6)].
/// Throws InvalidArgument if the device counts differ.
std::vector<double> encode_frame(std::span<const TrackerFrame> cur,
                                 std::span<const TrackerFrame> prev);

/// Row-major (T-1) x 18S matrix: row t-1 encodes frame t against frame t-1.
struct FeatureSequence {
  std::size_t width = 0;
  std::vector<double> rows;

  std::size_t size() const { return width == 0 ? 0 : rows.size() / width; }
  std::span<const double> row(std::size_t i) const {
    return {rows.data() + i * width, width};
  }
};

FeatureSequence encode_stream(const TrackerStream& stream);

/// N consecutive feature rows whose last row belongs to `target_frame`.
struct Window {
  std::size_t target_frame = 0;
  std::size_t length = 0;
  std::size_t width = 0;
  std::vector<double> rows;  // length x width
};

struct WindowSet {
  std::vector<Window> windows;
  /// Set when the stream had fewer than length+1 frames.
  bool too_short = false;
};

/// Windows for target frames length, length+stride, ... (0-based stream
/// indices). Frame 0 only serves as the predecessor of frame 1.
WindowSet make_windows(const TrackerStream& stream, std::size_t length, std::size_t stride);

/// Number of windows make_windows would produce.
std::size_t window_count(std::size_t stream_frames, std::size_t length, std::size_t stride);

}  // namespace sparsepose
