#pragma once
// Motion clips, tracker streams and their file formats.
//
// Binary container (all little-endian):
//   char[8] magic "SPCLIP\0\1"
//   u32     format version (1)
//   u32     record kind: 0 = pose frames, 1 = tracker stream
//   f64     frames per second
//   u32     joints (pose) or devices (tracker) per frame
//   u64     skeleton hash (Skeleton::hash, 0 when unknown)
//   u64     frame count
//   f64[]   records
// Pose record: root position (3), global orientation as axis-angle (3),
// local axis-angle rotations of joints 1..21 (63): 69 values.
// Tracker record: per device position (3) and axis-angle orientation (3).
//
// Text variant: '#' comment lines, then "key value" header lines
// (kind, fps, joints|devices, skeleton_hash, frames), then one frame per
// line with the record values in the same column order, space separated
// in shortest round-trip decimal form.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "sparsepose/features.hpp"
#include "sparsepose/skeleton.hpp"

namespace sparsepose {

struct ClipFrame {
  Vec3 root_pos = Vec3::Zero();
  AxisAngle global_orient;
  std::array<AxisAngle, kNumLocal> local_rot{};
};

struct MotionClip {
  double fps = 60.0;
  std::uint64_t skeleton_hash = 0;
  std::vector<ClipFrame> frames;

  std::size_t size() const { return frames.size(); }
  double duration() const { return static_cast<double>(frames.size()) / fps; }
};

PoseOutput to_pose(const ClipFrame& f);
/// Rotations are canonicalized through matrix_to_axis_angle.
ClipFrame from_pose(const PoseOutput& p);
std::vector<PoseOutput> to_poses(const MotionClip& clip);

inline constexpr std::size_t kPoseRecordSize = 3 + 3 + 3 * kNumLocal;
inline constexpr std::size_t kDeviceRecordSize = 6;

std::string encode_clip(const MotionClip& clip);
MotionClip decode_clip(std::string_view bytes);
std::string encode_clip_text(const MotionClip& clip);
MotionClip decode_clip_text(std::string_view text);

std::string encode_stream(const TrackerStream& stream, std::uint64_t skeleton_hash);
TrackerStream decode_stream(std::string_view bytes);
std::string encode_stream_text(const TrackerStream& stream, std::uint64_t skeleton_hash);
TrackerStream decode_stream_text(std::string_view text);

/// Binary or text is chosen from the extension: ".txt" means text.
void write_clip(const std::filesystem::path& path, const MotionClip& clip);
/// Detects binary vs text from the magic bytes.
MotionClip read_clip(const std::filesystem::path& path);
void write_stream(const std::filesystem::path& path, const TrackerStream& stream,
                  std::uint64_t skeleton_hash);
TrackerStream read_stream(const std::filesystem::path& path);

/// Head, left wrist and right wrist world poses per frame, via FK.
TrackerStream extract_trackers(const MotionClip& clip, const Skeleton& s);

/// Linear root interpolation and shortest-geodesic rotation interpolation.
/// Output has round(duration * target_fps) frames. Throws InvalidArgument
/// for a clip with fewer than two frames or a non-positive rate.
MotionClip resample(const MotionClip& clip, double target_fps);

struct DatasetSplit {
  std::vector<MotionClip> train;
  std::vector<MotionClip> test;
  std::uint64_t seed = 0;
};

/// Random disjoint split; round(train_ratio * n) clips go to train.
DatasetSplit split_dataset(std::vector<MotionClip> clips, double train_ratio, std::uint64_t seed);

/// All *.clip and *.txt clips in `dir`, sorted by file name.
std::vector<MotionClip> load_clip_dir(const std::filesystem::path& dir);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view bytes);

}  // namespace sparsepose
