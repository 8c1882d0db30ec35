#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "svj/latents.hpp"
#include "svj/rng.hpp"

namespace svj {

// Frame indices are zero-based throughout the C++ API and in serialized specs.

enum class PerturbationKind {
  kTemporalSliceSwap,
  kNoisySegment,
  kFrameShuffle,
  kFrameDrop,
  kPatchSwap,
};

inline constexpr std::array<PerturbationKind, 5> kAllPerturbations = {
    PerturbationKind::kTemporalSliceSwap, PerturbationKind::kNoisySegment,
    PerturbationKind::kFrameShuffle,      PerturbationKind::kFrameDrop,
    PerturbationKind::kPatchSwap,
};

std::string to_string(PerturbationKind kind);
PerturbationKind perturbation_kind_from_string(const std::string& text);

// out[indices[i]] = in[sources[i]]; sources is a permutation of indices.
struct ShuffleParams {
  std::vector<int> indices;
  std::vector<int> sources;
  bool operator==(const ShuffleParams&) const = default;
};

// out[t] = in[t-1] for t in indices, read from the unmodified input.
struct DropParams {
  std::vector<int> indices;
  bool operator==(const DropParams&) const = default;
};

// Inclusive frame range [start, end].
struct NoiseParams {
  int start = 0;
  int end = 1;
  double sigma = 0.5;
  bool operator==(const NoiseParams&) const = default;
};

struct Region {
  int top = 0;
  int left = 0;
  int height = 1;
  int width = 1;
  int area() const { return height * width; }
  bool operator==(const Region&) const = default;
};

// Slices [first, first + span] and [second, second + span].
struct SliceSwapParams {
  int first = 0;
  int second = 0;
  int span = 0;
  bool operator==(const SliceSwapParams&) const = default;
};

struct PatchSwapParams {
  SliceSwapParams slices;
  Region region;
  // One-directional mode only writes the region of the first slice.
  bool bidirectional = true;
  bool operator==(const PatchSwapParams&) const = default;
};

using PerturbationParams = std::variant<ShuffleParams, DropParams, NoiseParams,
                                        PatchSwapParams, SliceSwapParams>;

struct PerturbationSpec {
  PerturbationKind kind = PerturbationKind::kFrameShuffle;
  PerturbationParams params;
  std::uint64_t seed = 0;
  bool operator==(const PerturbationSpec&) const = default;
};

// Throws Error{kDegenerateSpec | kConfigError} if `spec` is not applicable to
// a video with the given frame count and spatial size.
void check_spec(const PerturbationSpec& spec, int frames, int height, int width);

LatentVideo frame_shuffle(const LatentVideo& video, const PerturbationSpec& spec);
LatentVideo frame_drop(const LatentVideo& video, const PerturbationSpec& spec);
// Noise is drawn from a generator seeded with spec.seed, so a spec log
// replays exactly.
LatentVideo noisy_segment(const LatentVideo& video, const PerturbationSpec& spec);
LatentVideo patch_swap(const LatentVideo& video, const PerturbationSpec& spec);
LatentVideo temporal_slice_swap(const LatentVideo& video,
                                const PerturbationSpec& spec);

LatentVideo apply_perturbation(const LatentVideo& video,
                               const PerturbationSpec& spec);

struct SpecSamplingConfig {
  // Absolute noise scale; callers usually set 0.5 x dataset latent std.
  double sigma = 0.5;
  double region_min_fraction = 0.1;
  double region_max_fraction = 0.5;
  bool bidirectional_patch_swap = true;
};

// Smallest clip length each operator accepts from sample_spec.
int min_frames_for(PerturbationKind kind);

PerturbationSpec sample_spec(PerturbationKind kind, int frames, int height,
                             int width, Rng& rng,
                             const SpecSamplingConfig& cfg = {});

std::string spec_to_json(const PerturbationSpec& spec);
PerturbationSpec spec_from_json(const std::string& text);

// Population standard deviation over every element of every video.
double latent_std(std::span<const LatentVideo> videos);

}  // namespace svj
