#pragma once
// Composite rotation/position loss and the training loop.

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "sparsepose/clip.hpp"
#include "sparsepose/model.hpp"

namespace sparsepose {

struct LossWeights {
  double ori = 0.05;
  double rot = 1.0;
  double fk = 1.0;
};

struct AblationFlags {
  /// Global orientation from the head tracker through the predicted chain.
  bool no_stabilizer = false;
  /// Root regressed by the network instead of placed through the head.
  bool predict_pelvis = false;
  bool no_fk_loss = false;
};

struct TrainConfig {
  std::size_t batch = 256;
  std::size_t window = 40;
  double lr = 1e-4;
  double decay_factor = 0.5;
  std::uint64_t decay_every = 20000;
  std::uint64_t max_iters = 1000;
  std::uint64_t seed = 0;
  /// 0 writes a checkpoint only at the end.
  std::uint64_t checkpoint_every = 0;
  /// Spacing of the target frames used as training samples.
  std::size_t sample_stride = 1;
  LossWeights weights;
  AblationFlags flags;

  /// Throws ConfigError for non-positive sizes or rates.
  void validate() const;
  KeyValues to_kv() const;
  /// Reads "train.*" keys; missing keys keep their defaults.
  static TrainConfig from_kv(const KeyValues& kv);
};

/// Step-decayed rate used at 0-based `iteration`.
double learning_rate(const TrainConfig& cfg, std::uint64_t iteration);

/// One mini-batch. Positions are world positions minus the tracked head
/// position, so they do not depend on where the subject stands.
struct Batch {
  ad::Tensor input;        // [B, N, F]
  ad::Tensor global6d;     // [B, 6]
  ad::Tensor local6d;      // [B, 126]
  ad::Tensor head_orient;  // [B, 3, 3]
  ad::Tensor rel_pos;      // [B, 22, 3]
  std::size_t size() const { return input.defined() ? input.dim(0) : 0; }
};

/// Windows over a set of clips, indexed lazily by (clip, target frame).
class TrainingSet {
 public:
  /// Clips shorter than window + 1 frames contribute nothing.
  TrainingSet(const std::vector<MotionClip>& clips, const Skeleton& s, std::size_t window,
              std::size_t stride = 1);

  std::size_t size() const { return samples_.size(); }
  std::size_t window() const { return window_; }
  std::size_t width() const { return width_; }
  Batch gather(std::span<const std::size_t> indices) const;

 private:
  struct ClipData {
    FeatureSequence features;
    std::vector<std::array<Real, 6>> global6d;
    std::vector<std::array<Real, kNumLocal * 6>> local6d;
    std::vector<std::array<Real, 9>> head_orient;
    std::vector<std::array<Real, kNumJoints * 3>> rel_pos;
  };
  struct Sample {
    std::size_t clip;
    std::size_t target;
  };
  std::size_t window_;
  std::size_t width_ = kFeaturesPerDevice * kNumDevices;
  std::vector<ClipData> clips_;
  std::vector<Sample> samples_;
};

struct LossTerms {
  ad::Tensor total;
  ad::Tensor ori;
  ad::Tensor rot;
  ad::Tensor fk;
};

/// Weighted mean-L1 losses on 6D codes and on head-relative FK positions.
LossTerms composite_loss(const ModelOutput& out, const Batch& target, const Skeleton& s,
                         const LossWeights& w, const AblationFlags& flags);

struct LossRecord {
  std::uint64_t iteration = 0;
  double total = 0, ori = 0, rot = 0, fk = 0;
};

/// Mean loss over every sample of `data`, without gradients.
LossRecord dataset_loss(const PoseModel& model, const TrainingSet& data, const Skeleton& s,
                        const TrainConfig& cfg, std::size_t chunk = 64);

struct TrainIo {
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> history;
  /// Called after every iteration.
  std::function<void(const LossRecord&)> on_step;
};

struct TrainState {
  std::uint64_t iteration = 0;
  std::vector<AdamState> adam;
};

/// Runs iterations state.iteration .. cfg.max_iters - 1 and returns the
/// per-iteration mini-batch losses. Throws ConfigError on an empty dataset.
std::vector<LossRecord> train(PoseModel& model, const TrainingSet& data, const Skeleton& s,
                              const TrainConfig& cfg, TrainState& state, const TrainIo& io = {});

/// Appends or creates a whitespace-separated history file.
void write_history(const std::filesystem::path& path, std::span<const LossRecord> rows, bool append);

}  // namespace sparsepose
