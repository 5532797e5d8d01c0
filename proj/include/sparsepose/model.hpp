#pragma once
// Transformer-encoder pose regressor.
//
//   window [B, N, F] -> linear embedding + sinusoidal positions
//                    -> num_layers x (multi-head self-attention, GELU FFN),
//                       post-norm residual blocks
//                    -> feature of the last (current) frame
//                    -> stabilizer MLP: global orientation, 6D
//                    -> pose MLP: 21 local rotations, 6D each
//                    -> optional pelvis MLP: root translation
//
// Attention spans the whole window; the window itself only contains the
// current frame and its predecessors, so predictions are causal.

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "sparsepose/autodiff.hpp"
#include "sparsepose/config.hpp"
#include "sparsepose/features.hpp"
#include "sparsepose/optim.hpp"
#include "sparsepose/skeleton.hpp"

namespace sparsepose {

struct ModelConfig {
  std::size_t input_dim = kFeaturesPerDevice * kNumDevices;
  std::size_t embed_dim = 256;
  std::size_t num_layers = 3;
  std::size_t num_heads = 8;
  std::size_t ff_dim = 256;
  std::size_t mlp_hidden = 256;
  std::size_t window = 40;
  std::size_t output_local = kNumLocal * 6;
  std::size_t output_global = 6;
  /// Extra head regressing the root position directly.
  bool predict_pelvis = false;

  /// Throws ConfigError when the fields are inconsistent.
  void validate() const;
  KeyValues to_kv() const;
  /// Missing keys keep their defaults.
  static ModelConfig from_kv(const KeyValues& kv);
  bool operator==(const ModelConfig&) const = default;
};

struct NamedTensor {
  std::string name;
  ad::Tensor tensor;
};

struct ModelOutput {
  ad::Tensor global6d;  // [B, 6]
  ad::Tensor local6d;   // [B, 126]
  ad::Tensor root;      // [B, 3], only with predict_pelvis
};

/// Network output for a single window, as rotation codes.
struct NetworkPrediction {
  Rotation6D global;
  std::array<Rotation6D, kNumLocal> local;
  std::optional<Vec3> root;
};

class PoseModel {
 public:
  /// Weights drawn from `seed`; output biases start at the identity 6D code.
  PoseModel(ModelConfig cfg, std::uint64_t seed);
  // Parameters are shared handles; a copy would alias them.
  PoseModel(const PoseModel&) = delete;
  PoseModel& operator=(const PoseModel&) = delete;
  PoseModel(PoseModel&&) = default;
  PoseModel& operator=(PoseModel&&) = default;

  const ModelConfig& config() const { return cfg_; }

  /// input: [B, window, input_dim]. Throws ShapeError on other shapes.
  ModelOutput forward(const ad::Tensor& input) const;

  /// Tape-free inference on one window.
  NetworkPrediction predict(const Window& window) const;
  /// Tape-free inference on a batch of windows.
  std::vector<NetworkPrediction> predict(const std::vector<const Window*>& windows) const;

  /// Parameters in a fixed order; handles alias the model's storage.
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  struct Linear {
    ad::Tensor weight;  // [in, out]
    ad::Tensor bias;    // [out]
  };
  struct EncoderLayer {
    Linear q, k, v, o;
    ad::Tensor norm1_gamma, norm1_beta;
    Linear ff1, ff2;
    ad::Tensor norm2_gamma, norm2_beta;
  };

  ad::Tensor make_param(const std::string& name, ad::Shape shape, std::vector<Real> values);
  ad::Tensor apply(const Linear& l, const ad::Tensor& x) const;
  ad::Tensor encoder_layer(const EncoderLayer& l, const ad::Tensor& x) const;

  ModelConfig cfg_;
  std::vector<NamedTensor> params_;
  ad::Tensor positional_;  // [window, embed_dim], constant
  Linear embed_;
  std::vector<EncoderLayer> layers_;
  Linear stab1_, stab2_, pose1_, pose2_;
  std::optional<std::pair<Linear, Linear>> pelvis_;
};

/// Rotation matrices from network codes; root placed through the head.
/// Throws DegenerateRotation for degenerate codes.
PoseOutput decode(const Rotation6D& global6d, const std::array<Rotation6D, kNumLocal>& local6d,
                  const TrackerFrame& head, const Skeleton& s);

/// Serialized model state plus optimizer state for resuming.
struct StoredTensor {
  std::string name;
  ad::Shape shape;
  std::vector<Real> data;
};

struct Checkpoint {
  ModelConfig config;
  std::uint64_t iteration = 0;
  std::vector<StoredTensor> tensors;  // model parameters, in parameters() order
  std::vector<AdamState> adam;        // one per parameter, or empty
};

/// Binary container: magic, version, scalar width, key=value header, then
/// named little-endian tensors.
void save_checkpoint(const std::filesystem::path& path, const PoseModel& model,
                     std::uint64_t iteration, const std::vector<AdamState>& adam);
Checkpoint read_checkpoint(const std::filesystem::path& path);
/// Model with weights from `ckpt`. When `expected` is given and differs
/// from the stored config, throws ConfigError.
PoseModel model_from_checkpoint(const Checkpoint& ckpt,
                                const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace sparsepose
