#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "svj/judge_net.hpp"
#include "svj/latents.hpp"
#include "svj/losses.hpp"
#include "svj/perturb.hpp"
#include "svj/sampler.hpp"

namespace svj {

enum class Stage { kDiscriminative, kAspectRegression, kPreference };
enum class OptimizerKind { kSgd, kAdam };
enum class PreferenceLoss { kBT, kBTT };

std::string to_string(Stage stage);
std::string to_string(OptimizerKind kind);
std::string to_string(PreferenceLoss loss);
OptimizerKind optimizer_from_string(const std::string& text);
PreferenceLoss preference_loss_from_string(const std::string& text);

struct TrainConfig {
  Stage stage = Stage::kDiscriminative;
  int steps = 1000;
  int batch_size = 8;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::kSgd;
  // Stage 1.
  double beta = 0.2;
  NegativeSamplingTable sampling_table = default_table();
  // Noise sigma for noisy_segment as a fraction of the real corpus' latent std.
  double noise_sigma_fraction = 0.5;
  double region_min_fraction = 0.1;
  double region_max_fraction = 0.5;
  bool bidirectional_patch_swap = true;
  // Stage 3.
  PreferenceLoss preference_loss = PreferenceLoss::kBT;
  double gamma = 1.0;
  bool train_adapters = false;  // stage 3 only; stages 1-2 always train them

  TruncationConfig truncation;
  std::uint64_t seed = 0;
};

// Stage defaults: truncation p = 0.25 for stage 1, 0.2 for stage 3, off for
// stage 2.
TrainConfig default_train_config(Stage stage);

// Throws Error{kConfigError}. Zero steps and a zero learning rate are accepted
// (both leave the model untouched).
void check_train_config(const TrainConfig& cfg);

struct StepRecord {
  int step = 0;
  double loss = 0.0;
  double grad_norm = 0.0;  // L2 norm over every trainable parameter
  double ms = 0.0;
};

struct TrainLog {
  std::vector<StepRecord> records;
  std::string checkpoint;
  // Stage 2: validation MSE after the last step (NaN when no validation set).
  double final_validation_mse = 0.0;

  std::vector<double> grad_norms() const;
  std::vector<double> losses() const;
  // Columns step,loss,grad_norm,ms. With include_time = false the ms column
  // is written as 0 so two seeded runs compare byte-for-byte.
  std::string to_csv(bool include_time = true) const;
  void write_csv(const std::filesystem::path& path, bool include_time = true) const;
};

// Plain SGD or Adam over the model's trainable set. Frozen parameters are
// never touched.
class Optimizer {
 public:
  Optimizer(OptimizerKind kind, double learning_rate);
  void step(JudgeNet& net, const Gradients& grads);

 private:
  OptimizerKind kind_;
  double lr_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double gradient_norm(const JudgeNet& net, const Gradients& grads);

// ---- Stage 1: discriminative EBM ------------------------------------------

struct ContrastBatch {
  std::vector<LatentVideo> positives;
  std::vector<LatentVideo> negatives;
  std::vector<NegativeChoice> choices;
};

// Each pair is one real clip and one negative (a generated clip, or the same
// real clip perturbed per the table). With probability cfg.truncation.p the
// pair shares one truncation window, applied before perturbing; a kind that
// cannot act on the shortened clip keeps the full clip instead. Deterministic
// in (cfg.seed, step).
ContrastBatch draw_contrast_batch(std::span<const LatentVideo> real,
                                  std::span<const LatentVideo> generated,
                                  const TrainConfig& cfg, int step, double noise_sigma);

struct BatchGradient {
  double loss = 0.0;
  Gradients grads;
  double norm = 0.0;
};

BatchGradient contrast_batch_gradient(const JudgeNet& net, const ContrastBatch& batch,
                                      const ContrastConfig& loss_cfg);

// Step-at-a-time discriminative training; train_discriminative and the
// sampler's decay study both drive this.
class DiscriminativeSession {
 public:
  // Makes adapters and the energy head the trainable set. Throws
  // Error{kEmptyCorpus | kConfigError}.
  DiscriminativeSession(JudgeNet& net, std::span<const LatentVideo> real,
                        std::span<const LatentVideo> generated, const TrainConfig& cfg);
  StepRecord step();
  int steps_done() const { return step_; }
  double noise_sigma() const { return noise_sigma_; }

 private:
  JudgeNet& net_;
  std::span<const LatentVideo> real_;
  std::span<const LatentVideo> generated_;
  TrainConfig cfg_;
  Optimizer opt_;
  double noise_sigma_;
  int step_ = 0;
};

// Throws Error{kTrainingDiverged | kEmptyCorpus | kConfigError}.
TrainLog train_discriminative(JudgeNet& net, std::span<const LatentVideo> real,
                              std::span<const LatentVideo> generated,
                              const TrainConfig& cfg);

// Gradient-decay study for one perturbation kind: trains a copy of `net` on
// real-vs-that-perturbation negatives only.
DecayProfile measure_perturbation_decay(const JudgeNet& net,
                                        std::span<const LatentVideo> real,
                                        PerturbationKind kind, const TrainConfig& cfg,
                                        const DecayConfig& decay);

// ---- Stage 2: aspect regression -------------------------------------------

struct LabeledVideo {
  LatentVideo video;
  AspectScores aspects;
};

// Trains adapters (when attached) and the aspect head on MSE. Throws
// Error{kTrainingDiverged | kLengthMismatch | kEmptyCorpus}.
TrainLog train_aspects(JudgeNet& net, std::span<const LabeledVideo> train,
                       std::span<const LabeledVideo> validation, const TrainConfig& cfg);

double evaluate_aspect_mse(const JudgeNet& net, std::span<const LabeledVideo> videos);

// MSE of predicting the per-aspect training mean for every validation video.
double mean_predictor_mse(std::span<const LabeledVideo> train,
                          std::span<const LabeledVideo> validation);

// ---- Stage 3: preference tuning -------------------------------------------

enum class PreferenceLabel { kFirstPreferred, kSecondPreferred, kTie };

std::string to_string(PreferenceLabel label);
PreferenceLabel preference_label_from_string(const std::string& text);
PreferenceLabel mirror(PreferenceLabel label);

struct PreferencePair {
  LatentVideo first;
  LatentVideo second;
  PreferenceLabel label = PreferenceLabel::kTie;
};

// BT drops tie pairs; BTT trains on all pairs, scoring ties with the implied
// tie probability. Each pair is seen in (preferred, other) order, so
// mirroring every pair leaves training unchanged. Throws
// Error{kTrainingDiverged | kNoPairs}.
TrainLog train_preference(JudgeNet& net, std::span<const PreferencePair> pairs,
                          const TrainConfig& cfg);

}  // namespace svj
