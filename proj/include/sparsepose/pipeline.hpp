#pragma once
// Tracker stream -> network -> decoded poses -> optional arm IK.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sparsepose/clip.hpp"
#include "sparsepose/ik.hpp"
#include "sparsepose/metrics.hpp"
#include "sparsepose/model.hpp"
#include "sparsepose/training.hpp"

namespace sparsepose {

struct InferenceOptions {
  /// Global orientation derived from the head tracker instead of the
  /// stabilizer output.
  bool no_stabilizer = false;
  bool use_ik = true;
  IkConfig ik;
  /// Windows per network call. Results do not depend on `threads`.
  std::size_t batch = 64;
  unsigned threads = 1;
};

struct PipelineConfig {
  ModelConfig model;
  IkConfig ik;
  AblationFlags flags;
  bool use_ik = true;
  std::optional<std::filesystem::path> skeleton_path;
  std::filesystem::path checkpoint_path;

  InferenceOptions inference() const;
  /// The standard skeleton unless skeleton_path is set.
  Skeleton skeleton() const;
  /// Throws IoError when a referenced file is missing.
  void check_files() const;
};

/// Pose for a decoded network prediction at one frame.
PoseOutput assemble_pose(const NetworkPrediction& pred, const std::vector<TrackerFrame>& devices,
                         const Skeleton& s, bool no_stabilizer);

/// One pose per frame window .. T-1 using stride-1 windows. Throws
/// InvalidArgument when the stream has fewer than window + 1 frames or the
/// wrong device count.
std::vector<PoseOutput> infer_stream(const PoseModel& model, const TrackerStream& stream,
                                     const Skeleton& s, const InferenceOptions& opt);

/// Frame-weighted combination of per-clip reports.
EvalReport combine_reports(const std::vector<EvalReport>& parts, const Skeleton& s);

/// Trackers from each clip, inference, then metrics against the clip's
/// own frames window .. T-1. Clips too short for one window are skipped.
EvalReport evaluate_clips(const PoseModel& model, const std::vector<MotionClip>& clips,
                          const Skeleton& s, const InferenceOptions& opt);

struct BenchReport {
  std::size_t frames = 0;
  std::size_t ik_iters = 0;
  double net_mean_ms = 0, net_p95_ms = 0;
  double ik_iter_mean_ms = 0, ik_iter_p95_ms = 0;

  double net_fps() const { return 1000.0 / net_mean_ms; }
  std::string to_text() const;
};

/// Streaming cost per frame: one single-window network call, and the IK
/// refinement divided by its iteration count, timed separately.
BenchReport bench(const PoseModel& model, const Skeleton& s, std::size_t frames,
                  const IkConfig& ik, std::uint64_t seed);

}  // namespace sparsepose
