#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "svj/judge_net.hpp"
#include "svj/latents.hpp"
#include "svj/trainer.hpp"

namespace svj {

// Degradation knobs of a synthetic clip. Real-style: no jitter, no
// discontinuities, no flicker, rho >= 0.9.
struct QualityKnobs {
  double rho = 0.95;       // AR(1) temporal correlation, [0, 1]
  double jitter = 0.0;     // i.i.d. innovation amplitude
  int discontinuities = 0; // frames whose state is redrawn from scratch
  double flicker = 0.0;    // depth of the global brightness oscillation

  bool operator==(const QualityKnobs&) const = default;
};

// Throws Error{kConfigError}.
void check_knobs(const QualityKnobs& knobs);

bool is_real_style(const QualityKnobs& knobs);

// Weights of quality = 5 - (w_j j + w_d d + w_f f + w_rho (0.95 - rho)+),
// clamped to [1, 5].
struct QualityWeights {
  double jitter = 4.0;
  double discontinuity = 0.8;
  double flicker = 4.0;
  double rho = 10.0;
};

inline constexpr double kPristineRho = 0.95;

// Knobs at which every aspect bottoms out at 1.
QualityKnobs maximal_degradation();

struct GroundTruth {
  QualityKnobs knobs;
  AspectScores aspects;
  double quality = 5.0;
};

double quality_of(const QualityKnobs& knobs, const QualityWeights& w = {});

// Aspect q = clamp(5 - sum_k a_qk deg_k, 1, 5) with deg = (j, d, f,
// (0.95 - rho)+) and a fixed non-negative table a_qk; each aspect leans on one
// primary knob and at most one secondary knob.
AspectScores aspects_of(const QualityKnobs& knobs, int num_aspects = 21);

GroundTruth ground_truth(const QualityKnobs& knobs, int num_aspects = 21);

// z_0 is spatially smoothed unit Gaussian; z_t = rho z_{t-1} +
// sqrt(1 - rho^2) eta_t + j xi_t with eta smoothed and xi white. Each
// discontinuity redraws z_t at a distinct frame t >= 1; the observed frame is
// (1 + f sin(2 pi t / T)) z_t. Noise streams are separate per knob, so two
// clips with one seed differ only through the knobs.
std::pair<LatentVideo, GroundTruth> gen_video(const QualityKnobs& knobs, const VideoShape& shape,
                                              std::uint64_t seed, int num_aspects = 21,
                                              VideoMeta meta = {});

// Label from ground-truth quality with a symmetric tie band.
PreferenceLabel label_pair(const GroundTruth& a, const GroundTruth& b, double tie_margin);

// Uniform ranges per knob; discontinuities are uniform integers.
struct KnobDistribution {
  double rho_min = 0.9, rho_max = 0.99;
  double jitter_min = 0.0, jitter_max = 0.0;
  int discontinuities_max = 0;
  double flicker_min = 0.0, flicker_max = 0.0;

  bool operator==(const KnobDistribution&) const = default;
};

KnobDistribution real_style_distribution();
KnobDistribution generated_style_distribution();
// Broad mix used for preference pairs: spans pristine to heavily degraded.
KnobDistribution mixed_distribution();

// Throws Error{kConfigError}.
void check_distribution(const KnobDistribution& d);

QualityKnobs sample_knobs(const KnobDistribution& d, Rng& rng);

struct CorpusItem {
  LatentVideo video;
  GroundTruth truth;
};

struct CorpusConfig {
  VideoShape shape;
  KnobDistribution real = real_style_distribution();
  KnobDistribution generated = generated_style_distribution();
  int num_aspects = 21;
};

// n_real real-style items followed by n_generated generated-style items;
// item i uses stream derive_seed(seed, i). Generated knobs are redrawn until
// at least one degradation knob is positive. Throws Error{kConfigError}.
std::vector<CorpusItem> gen_corpus(int n_real, int n_generated, const CorpusConfig& cfg,
                                   std::uint64_t seed);

// Items drawn from one distribution (e.g. the mixed preference pool).
std::vector<CorpusItem> gen_pool(int n, const KnobDistribution& dist, const VideoShape& shape,
                                 std::uint64_t seed, int num_aspects = 21,
                                 const std::string& id_prefix = "pool");

struct PairIndex {
  std::size_t first = 0;
  std::size_t second = 0;
  PreferenceLabel label = PreferenceLabel::kTie;
};

// n random pairs of distinct items labelled by label_pair.
std::vector<PairIndex> sample_pairs(std::span<const CorpusItem> items, int n, double tie_margin,
                                    std::uint64_t seed);

std::vector<PreferencePair> materialize(std::span<const CorpusItem> items,
                                        std::span<const PairIndex> pairs);

std::vector<LatentVideo> videos_of(std::span<const CorpusItem> items);
std::vector<LabeledVideo> labeled_of(std::span<const CorpusItem> items);

std::string knobs_to_json(const QualityKnobs& knobs);

}  // namespace svj
