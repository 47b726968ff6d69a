#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "socnav/autodiff.hpp"
#include "socnav/sampling.hpp"

namespace socnav {

enum class Modality { rgb, lidar, multimodal };
enum class EncoderScale { desk, paper };

std::string to_string(Modality m);
Modality parse_modality(std::string_view s);
std::string to_string(EncoderScale s);
EncoderScale parse_scale(std::string_view s);

struct ModelConfig {
  Modality modality = Modality::multimodal;
  std::vector<int> img_channels{16, 32, 64};
  std::vector<int> vox_channels{8, 16, 32};
  int embed_dim = 128;
  int rnn_hidden = 128;
  int tf_layers = 2;
  int tf_heads = 4;
  int plan_length = kPlanLength;
  EncoderScale scale = EncoderScale::desk;
  // Patch size of the first (non-overlapping) image convolution at desk scale.
  int img_patch = 8;
  // Kernel and stride of the first voxel convolution.
  std::array<int, 3> vox_patch{4, 4, 5};
  // Grid the voxel encoder is built for.
  GridSpec grid;

  /// Throws ValidationError on a broken configuration.
  void validate() const;

  bool uses_image() const { return modality != Modality::lidar; }
  bool uses_voxels() const { return modality != Modality::rgb; }
};

/// Smallest configuration that still exercises every block; used for
/// finite-difference checks and quick tests.
ModelConfig tiny_config(Modality m);

struct ParamEntry {
  std::string name;
  ad::Tensor value;
};

/// Named parameter collection. Names start with "theta." (global planner:
/// encoders, recurrent cells, global fusion, waypoint head) or "phi." (local
/// planner: waypoint embedder, local fusion, transformer, action head).
class ModelParams {
 public:
  void add(std::string name, ad::Tensor value);

  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;
  const ad::Tensor& get(std::string_view name) const { return entries_[index_of(name)].value; }
  ad::Tensor& get(std::string_view name) { return entries_[index_of(name)].value; }

  const std::vector<ParamEntry>& entries() const { return entries_; }
  std::vector<ParamEntry>& entries() { return entries_; }
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  bool all_finite() const;

  /// Indices of entries in the global-planner (theta) or local-planner (phi) set.
  std::vector<std::size_t> theta() const;
  std::vector<std::size_t> phi() const;

  friend bool operator==(const ModelParams& a, const ModelParams& b);

 private:
  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradient buffers aligned with ModelParams::entries().
struct Gradients {
  std::vector<ad::Tensor> tensors;

  explicit Gradients(const ModelParams& params);
  void zero();
  double global_norm() const;
};

/// Deterministic initialization for `config` from `seed`.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct NetworkOutput {
  std::array<Vec2, kPlanLength> waypoints{};
  VelocityCommand action;
};

/// Graph handles of a forward pass.
struct ForwardVars {
  ad::Var waypoints;  // [plan_length * 2], x0 y0 x1 y1 ...
  ad::Var action;     // [2], v omega
};

/// Records the full policy on `g`. With a non-null `grads`, parameters
/// accumulate gradients into it during g.backward().
ForwardVars build_forward(ad::Graph& g, const NavigationInput& input, const ModelConfig& config,
                          const ModelParams& params, Gradients* grads);

NetworkOutput forward(const NavigationInput& input, const ModelConfig& config, const ModelParams& params);

// Building blocks, evaluated without gradient tracking.
using Embedding = std::vector<double>;

/// Image encoder; throws InputError unless the image is 224x224x3.
Embedding encode_image(const Image& image, const ModelParams& params, const ModelConfig& config);
/// Voxel encoder; throws InputError when the grid shape differs from config.grid.
Embedding encode_pointcloud(const VoxelGrid& grid, const ModelParams& params, const ModelConfig& config);

struct TemporalStep {
  std::vector<double> hidden;
  std::vector<double> state;
};
/// One recurrent step for `branch` (rgb or lidar) from `state`; pass an empty
/// state for the zero initial state.
TemporalStep temporal_encode(const Embedding& embedding, Vec2 goal, const std::vector<double>& state,
                             Modality branch, const ModelParams& params, const ModelConfig& config);

enum class FusionSite { global, local };
std::vector<double> fuse(const std::vector<double>& hidden_pc, const std::vector<double>& hidden_img,
                         FusionSite site, const ModelParams& params, const ModelConfig& config);

std::array<Vec2, kPlanLength> global_head(const std::vector<double>& hidden, const ModelParams& params,
                                          const ModelConfig& config);
VelocityCommand local_head(const std::vector<double>& hidden, const std::array<Vec2, kPlanLength>& waypoints,
                           const ModelParams& params, const ModelConfig& config);

}  // namespace socnav
