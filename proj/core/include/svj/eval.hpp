#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "svj/judge_net.hpp"
#include "svj/trainer.hpp"

namespace svj {

struct TieThreshold {
  double delta = 0.0;
};

// counts[truth][predicted], indexed by PreferenceLabel.
using Confusion = std::array<std::array<long, 3>, 3>;

struct EvalReport {
  double acc_with_ties = 0.0;
  double acc_without_ties = 0.0;
  long n_pairs = 0;
  long n_tie_pairs = 0;
  Confusion confusion{};
  double delta = 0.0;

  std::string to_json() const;
};

// Tie iff |d| <= delta; otherwise the sign of d picks the preferred side.
PreferenceLabel predict_from_difference(double d, double delta);

PreferenceLabel predict_pair(const JudgeNet& net, const PreferencePair& pair, double delta);

// Reward difference first - second, with the pair's ground-truth label.
struct ScoredPair {
  double difference = 0.0;
  PreferenceLabel truth = PreferenceLabel::kTie;
};

std::vector<ScoredPair> score_pairs(const JudgeNet& net, std::span<const PreferencePair> pairs);

// acc_with_ties: exact three-way match over all pairs. acc_without_ties: over
// pairs whose truth is not a tie, sign(d) agrees with the truth; d = 0 is
// wrong. Throws Error{kNoPairs | kConfigError}.
EvalReport evaluate_scored(std::span<const ScoredPair> scored, double delta);
EvalReport evaluate(const JudgeNet& net, std::span<const PreferencePair> pairs, double delta);

// Candidates are 0 and the k/100 quantiles (nearest rank) of |d|, k = 1..100;
// returns the candidate with the best acc_with_ties, smallest on ties.
// Throws Error{kNoPairs}.
TieThreshold calibrate_delta_scored(std::span<const ScoredPair> scored);
TieThreshold calibrate_delta(const JudgeNet& net, std::span<const PreferencePair> calib_pairs);

struct TrajectoryStats {
  double mean = 0.0;
  double variance = 0.0;  // population variance; 0 for a single step
  double max_abs_step_change = 0.0;
};

TrajectoryStats trajectory_stats(std::span<const double> per_step);
std::vector<TrajectoryStats> trajectory_stats(const JudgeNet& net,
                                              std::span<const LatentVideo> videos);

// Long-format CSV with columns video_id,t,energy.
std::string trajectories_csv(std::span<const std::string> ids,
                             std::span<const EnergyTrajectory> trajectories);
// Columns video_id,mean,variance,max_abs_step_change.
std::string trajectory_stats_csv(std::span<const std::string> ids,
                                 std::span<const TrajectoryStats> stats);

// P(score of a random negative > score of a random positive), ties counted
// half. Throws Error{kEmptyBatch}.
double auc(std::span<const double> positive_scores, std::span<const double> negative_scores);

double median(std::vector<double> values);

}  // namespace svj
