#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <new>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svj/latents.hpp"

namespace svj {

enum class Placement { kInitialThird, kMiddleThird, kLastThird, kAll };

std::string to_string(Placement placement);
Placement placement_from_string(const std::string& text);

enum class EnergyAggregation { kMean, kSum, kLast };

std::string to_string(EnergyAggregation aggregation);
EnergyAggregation aggregation_from_string(const std::string& text);

// Factorised spatiotemporal transformer: per layer, full attention among the
// H*W tokens of one frame, then causal attention along time at each spatial
// position, then a token-wise MLP. One token per latent pixel.
struct BackboneConfig {
  int num_layers = 6;
  int model_dim = 64;
  int num_heads = 4;
  int mlp_ratio = 4;
  int channels = 4;
  int height = 8;
  int width = 8;
  int max_frames = 32;
  int energy_hidden = 32;
  int num_aspects = 21;
  int aspect_hidden = 64;
  EnergyAggregation aggregation = EnergyAggregation::kMean;

  bool operator==(const BackboneConfig&) const = default;
};

// Throws Error{kConfigError}.
void check_config(const BackboneConfig& cfg);

struct AdapterConfig {
  int rank = 8;
  double alpha = 8.0;
  Placement placement = Placement::kLastThird;

  bool operator==(const AdapterConfig&) const = default;
};

enum class ParamGroup : unsigned {
  kBackbone = 1u << 0,
  kAdapter = 1u << 1,
  kPredictionHead = 1u << 2,
  kEnergyHead = 1u << 3,
  kAspectHead = 1u << 4,
  kRewardHead = 1u << 5,
};

using GroupMask = unsigned;

constexpr GroupMask operator|(ParamGroup a, ParamGroup b) {
  return static_cast<GroupMask>(a) | static_cast<GroupMask>(b);
}
constexpr GroupMask operator|(GroupMask a, ParamGroup b) {
  return a | static_cast<GroupMask>(b);
}
constexpr GroupMask mask_of(ParamGroup g) { return static_cast<GroupMask>(g); }
inline constexpr GroupMask kAllGroups = 0x3Fu;

// 64-byte aligned storage. Vectorised reductions peel a different prefix
// for differently aligned buffers, so alignment must not vary between runs
// for results to be bit-reproducible.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) {
    return static_cast<T*>(::operator new(n * sizeof(T), kAlign));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

using AlignedVector = std::vector<double, AlignedAllocator<double>>;

struct Param {
  std::string name;
  std::vector<int> shape;  // row-major; matrices are {out, in}
  AlignedVector value;
  ParamGroup group = ParamGroup::kBackbone;
  int layer = -1;  // transformer block index, -1 outside the stack
};

struct EnergyTrajectory {
  std::vector<double> per_step;
  double aggregate = 0.0;
};

struct AspectScores {
  std::vector<double> scores;
};

// One gradient buffer per parameter; empty for frozen parameters.
using Gradients = std::vector<AlignedVector>;

namespace detail {
struct Tape;
}

enum HeadOutput : unsigned {
  kEnergyOutput = 1u << 0,
  kAspectOutput = 1u << 1,
  kPredictionOutput = 1u << 2,
};

struct ForwardPass {
  int frames = 0;
  EnergyTrajectory energy;
  std::vector<double> aspects;
  // Next-frame prediction, token-major (t, h, w) x channels; token t
  // predicts frame t + 1.
  std::vector<double> prediction;
  std::shared_ptr<const detail::Tape> tape;
};

struct UpstreamGrads {
  std::vector<double> d_energy_per_step;
  std::vector<double> d_aspects;
  std::vector<double> d_prediction;
};

class JudgeNet {
 public:
  explicit JudgeNet(const BackboneConfig& cfg, std::uint64_t seed = 0);

  const BackboneConfig& config() const { return cfg_; }
  const std::optional<AdapterConfig>& adapter() const { return adapter_; }

  // Attaches fresh low-rank adapters (B zero-initialised) to the selected
  // third of the stack, dropping any previous adapters, and makes the
  // adapters the only trainable group. Throws Error{kConfigError}.
  void set_placement(const AdapterConfig& cfg, std::uint64_t seed = 0);
  std::vector<int> adapted_layers() const;

  void set_trainable(GroupMask groups);
  GroupMask trainable_groups() const { return trainable_mask_; }
  bool is_trainable(std::size_t param) const { return trainable_[param]; }

  // Re-draws one head's parameters (e.g. a fresh aspect head on top of a
  // discriminative checkpoint).
  void reinit_group(ParamGroup group, std::uint64_t seed);

  const std::vector<Param>& params() const { return params_; }
  std::vector<Param>& mutable_params() { return params_; }
  const Param& param(const std::string& name) const;
  Param& mutable_param(const std::string& name);
  std::size_t param_index(const std::string& name) const;

  std::size_t parameter_count(GroupMask groups) const;
  std::size_t trainable_count() const;
  std::vector<double> flat_trainable() const;
  void set_flat_trainable(std::span<const double> values);
  std::vector<double> flatten_gradients(const Gradients& grads) const;
  Gradients zero_gradients() const;
  // FNV-1a over parameter bytes of the selected groups.
  std::uint64_t checksum(GroupMask groups) const;

  EnergyTrajectory forward_energy(const LatentVideo& video) const;
  AspectScores forward_aspects(const LatentVideo& video) const;
  double forward_reward(const LatentVideo& video) const;
  double reward_from_aspects(const AspectScores& aspects) const;

  // Training interface. `heads` is a HeadOutput mask; with record=true the
  // pass keeps what backward() needs.
  ForwardPass forward(const LatentVideo& video, unsigned heads,
                      bool record = true) const;
  // Accumulates parameter gradients of the trainable set into `grads`.
  void backward(const ForwardPass& pass, const UpstreamGrads& upstream,
                Gradients& grads) const;
  // Gradient of a reward loss w.r.t. the reward head; returns d loss / d aspects.
  std::vector<double> reward_backward(std::span<const double> aspects,
                                      double d_reward, Gradients& grads) const;

  // Spreads d loss / d aggregate over the per-step energies.
  std::vector<double> aggregate_grad(int frames, double d_aggregate) const;

  void save(const std::filesystem::path& path) const;
  static JudgeNet load(const std::filesystem::path& path);

 private:
  JudgeNet() = default;
  void build_layout();
  void add_param(const std::string& name, std::vector<int> shape, ParamGroup group,
                 int layer);
  void init_group(ParamGroup group, std::uint64_t seed);
  void init_adapters(std::uint64_t seed);
  void apply_trainable();

  BackboneConfig cfg_;
  std::optional<AdapterConfig> adapter_;
  std::vector<Param> params_;
  std::vector<bool> trainable_;
  GroupMask trainable_mask_ = 0;

  struct Layout;
  std::shared_ptr<const Layout> layout_;

  EnergyTrajectory aggregate(std::vector<double> per_step) const;
};

// Next-frame regression on smooth latents; stands in for generative
// pretraining of the backbone.
struct PretrainConfig {
  int steps = 200;
  int batch_size = 4;
  double learning_rate = 1e-3;
  bool adam = true;
  std::uint64_t seed = 0;
};

struct PretrainLog {
  std::vector<double> losses;
  double initial_heldout_mse = 0.0;
  double final_heldout_mse = 0.0;
};

// Mean squared next-frame prediction error over a set of videos.
double next_frame_mse(const JudgeNet& net, std::span<const LatentVideo> videos);

// Trains backbone + prediction head. Throws Error{kTrainingDiverged |
// kEmptyCorpus}.
PretrainLog pretrain_backbone(JudgeNet& net, std::span<const LatentVideo> corpus,
                              std::span<const LatentVideo> heldout,
                              const PretrainConfig& cfg);

}  // namespace svj
