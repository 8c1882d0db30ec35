#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "svj/perturb.hpp"
#include "svj/rng.hpp"

namespace svj {

// Probabilities indexed by PerturbationKind (enum order).
using KindProbabilities = std::array<double, kAllPerturbations.size()>;

struct NegativeSamplingTable {
  // Probability that a step's negative is a generated video.
  double generated_reserved = 0.3;
  // Probability of perturbing a real video, per kind; sums with
  // generated_reserved to one.
  KindProbabilities real_perturb_probs{};
  // Conditional distribution over perturbations applied to generated videos
  // (optional mode); sums to one when present.
  std::optional<KindProbabilities> generated_perturb_probs;

  bool operator==(const NegativeSamplingTable&) const = default;
};

// Throws Error{kInvalidTable}.
void check_table(const NegativeSamplingTable& table);

// Calibrated probabilities from the gradient-decay study: 0.3 reserved for
// generated videos, the rest spread over the five perturbations.
NegativeSamplingTable default_table();

// Every negative is a generated video (the no-perturbation ablation).
NegativeSamplingTable generated_only_table();

// All mass on one perturbation of real videos.
NegativeSamplingTable single_kind_table(PerturbationKind kind);

struct NegativeChoice {
  bool generated = false;
  PerturbationKind kind = PerturbationKind::kFrameShuffle;

  bool operator==(const NegativeChoice&) const = default;
};

NegativeChoice sample_negative_kind(const NegativeSamplingTable& table, Rng& rng);

PerturbationKind sample_kind(const KindProbabilities& probs, Rng& rng);

enum class EpsilonMode { kRelativeToPeak, kAbsolute };

struct DecayConfig {
  int max_steps = 200;
  EpsilonMode mode = EpsilonMode::kRelativeToPeak;
  // Fraction of the running peak norm, or an absolute norm.
  double epsilon = 0.1;
  // Trailing mean over this many steps before comparing with epsilon.
  int smoothing_window = 1;
};

struct DecayProfile {
  PerturbationKind kind = PerturbationKind::kFrameShuffle;
  std::vector<double> grad_norms;
  double epsilon = 0.0;  // threshold actually in force when tau was decided
  std::optional<int> tau;  // empty: never decayed within max_steps
};

// Runs `step(t)` (one optimisation step, returning its trainable gradient
// norm) until the norm falls to epsilon or max_steps is reached.
// Throws Error{kTrainingDiverged} on a non-finite norm.
DecayProfile measure_decay(PerturbationKind kind,
                           const std::function<double(int)>& step,
                           const DecayConfig& cfg);

enum class WeightRule {
  kDecayTime,          // weight proportional to tau
  kInverseGradNorm,    // weight proportional to 1 / mean gradient norm
};

// Throws Error{kEmptyProfiles | kInvalidTable}.
NegativeSamplingTable calibrate(const std::vector<DecayProfile>& profiles,
                                double generated_reserved,
                                WeightRule rule = WeightRule::kDecayTime);

std::string table_to_json(const NegativeSamplingTable& table);
NegativeSamplingTable table_from_json(const std::string& text);

}  // namespace svj
