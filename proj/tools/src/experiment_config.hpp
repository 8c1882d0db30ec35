#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>

#include "svj/judge_net.hpp"
#include "svj/sampler.hpp"
#include "svj/synthworld.hpp"
#include "svj/trainer.hpp"

namespace svj::cli {

// Malformed JSON, an unknown key, a wrong type or an out-of-range value.
// Maps to exit code 2.
class ConfigParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  VideoShape shape{9, 4, 8, 8};
  int num_aspects = 21;
  // Stage-1 corpora and their held-out twins.
  int n_real = 2000;
  int n_generated = 2000;
  int n_heldout = 200;  // per class
  // Aspect regression (mixed-quality clips).
  int n_aspect_train = 1000;
  int n_aspect_val = 200;
  // Preference pools; pairs never cross pools.
  int n_pref_pool = 600;
  int n_pref_pairs = 3000;
  int n_calib_pool = 200;
  int n_calib_pairs = 500;
  int n_test_pool = 600;
  int n_test_pairs = 1000;
  double tie_margin = 0.25;
  KnobDistribution real = real_style_distribution();
  KnobDistribution generated = generated_style_distribution();
  KnobDistribution mixed = mixed_distribution();
};

struct DecaySettings {
  DecayConfig decay;
  double generated_reserved = 0.3;
  WeightRule rule = WeightRule::kDecayTime;
  int steps = 200;  // per-kind training budget; also decay.max_steps
};

struct EvalSettings {
  // Tie threshold; empty means "calibrate on the calibration pairs".
  std::optional<double> delta;
};

// Stage seeds are derived from `seed` (one stream per stage), so --seed
// reseeds the whole run.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "runs";
  DataConfig data;
  BackboneConfig backbone;
  AdapterConfig adapter;
  PretrainConfig pretrain;
  TrainConfig discriminative;
  DecaySettings calibration;
  TrainConfig aspects;
  TrainConfig preference;
  EvalSettings eval;
};

// Desk-scale defaults: T=9, C=4, H=W=8, a 3-layer width-16 backbone.
ExperimentConfig desk_config();

// Missing keys keep desk defaults. Throws ConfigParseError.
ExperimentConfig config_from_json(const std::string& text);
ExperimentConfig load_config(const std::filesystem::path& path);

// Every field except out_dir, canonical key order, trailing newline. The
// output location is left out so the config and its hash do not depend on it.
std::string config_to_json(const ExperimentConfig& cfg);

// FNV-1a 64 over config_to_json, as 16 hex digits.
std::string config_hash(const ExperimentConfig& cfg);

std::uint64_t fnv1a64(std::string_view bytes);

enum class StageStream : std::uint64_t {
  kData = 1,
  kPretrain,
  kDiscriminative,
  kCalibration,
  kAspects,
  kPreference,
  kPerturb,
  kInit,
};

std::uint64_t stage_seed(const ExperimentConfig& cfg, StageStream stream);

}  // namespace svj::cli
