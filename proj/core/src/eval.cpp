#include "svj/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"
#include "svj/parallel.hpp"

namespace svj {
namespace {

std::size_t idx(PreferenceLabel l) { return static_cast<std::size_t>(l); }

}  // namespace

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["acc_with_ties"] = acc_with_ties;
  j["acc_without_ties"] = acc_without_ties;
  j["n_pairs"] = n_pairs;
  j["n_tie_pairs"] = n_tie_pairs;
  j["delta"] = delta;
  nlohmann::ordered_json c;
  for (PreferenceLabel t : {PreferenceLabel::kFirstPreferred, PreferenceLabel::kSecondPreferred,
                            PreferenceLabel::kTie}) {
    nlohmann::ordered_json row;
    for (PreferenceLabel p : {PreferenceLabel::kFirstPreferred,
                              PreferenceLabel::kSecondPreferred, PreferenceLabel::kTie}) {
      row[to_string(p)] = confusion[idx(t)][idx(p)];
    }
    c[to_string(t)] = row;
  }
  j["confusion"] = c;
  return j.dump(2) + "\n";
}

PreferenceLabel predict_from_difference(double d, double delta) {
  if (std::abs(d) <= delta) return PreferenceLabel::kTie;
  return d > 0.0 ? PreferenceLabel::kFirstPreferred : PreferenceLabel::kSecondPreferred;
}

PreferenceLabel predict_pair(const JudgeNet& net, const PreferencePair& pair, double delta) {
  const double d = net.forward_reward(pair.first) - net.forward_reward(pair.second);
  return predict_from_difference(d, delta);
}

std::vector<ScoredPair> score_pairs(const JudgeNet& net, std::span<const PreferencePair> pairs) {
  std::vector<ScoredPair> out(pairs.size());
  parallel_for(pairs.size(), [&](std::size_t i) {
    out[i].difference = net.forward_reward(pairs[i].first) - net.forward_reward(pairs[i].second);
    out[i].truth = pairs[i].label;
  });
  return out;
}

EvalReport evaluate_scored(std::span<const ScoredPair> scored, double delta) {
  if (scored.empty()) fail(ErrorCode::kNoPairs, "no pairs to evaluate");
  if (!(delta >= 0.0)) fail(ErrorCode::kConfigError, "delta must be >= 0");
  EvalReport r;
  r.delta = delta;
  long exact = 0, strict_total = 0, strict_correct = 0;
  for (const ScoredPair& s : scored) {
    const PreferenceLabel pred = predict_from_difference(s.difference, delta);
    ++r.confusion[idx(s.truth)][idx(pred)];
    ++r.n_pairs;
    if (pred == s.truth) ++exact;
    if (s.truth == PreferenceLabel::kTie) {
      ++r.n_tie_pairs;
      continue;
    }
    ++strict_total;
    const bool right = (s.truth == PreferenceLabel::kFirstPreferred && s.difference > 0.0) ||
                       (s.truth == PreferenceLabel::kSecondPreferred && s.difference < 0.0);
    if (right) ++strict_correct;
  }
  r.acc_with_ties = static_cast<double>(exact) / static_cast<double>(r.n_pairs);
  r.acc_without_ties =
      strict_total == 0 ? 0.0 : static_cast<double>(strict_correct) / static_cast<double>(strict_total);
  return r;
}

EvalReport evaluate(const JudgeNet& net, std::span<const PreferencePair> pairs, double delta) {
  if (pairs.empty()) fail(ErrorCode::kNoPairs, "no pairs to evaluate");
  return evaluate_scored(score_pairs(net, pairs), delta);
}

TieThreshold calibrate_delta_scored(std::span<const ScoredPair> scored) {
  if (scored.empty()) fail(ErrorCode::kNoPairs, "no calibration pairs");
  std::vector<double> mags;
  mags.reserve(scored.size());
  for (const auto& s : scored) mags.push_back(std::abs(s.difference));
  std::sort(mags.begin(), mags.end());
  std::vector<double> candidates = {0.0};
  const double n = static_cast<double>(mags.size());
  for (int k = 1; k <= 100; ++k) {
    const auto rank = static_cast<std::size_t>(std::ceil(k / 100.0 * n));
    candidates.push_back(mags[std::max<std::size_t>(rank, 1) - 1]);
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
  TieThreshold best{candidates.front()};
  double best_acc = -1.0;
  for (double c : candidates) {
    const double acc = evaluate_scored(scored, c).acc_with_ties;
    if (acc > best_acc) {
      best_acc = acc;
      best.delta = c;
    }
  }
  return best;
}

TieThreshold calibrate_delta(const JudgeNet& net, std::span<const PreferencePair> calib_pairs) {
  if (calib_pairs.empty()) fail(ErrorCode::kNoPairs, "no calibration pairs");
  return calibrate_delta_scored(score_pairs(net, calib_pairs));
}

TrajectoryStats trajectory_stats(std::span<const double> e) {
  TrajectoryStats s;
  if (e.empty()) fail(ErrorCode::kEmptyVideo, "empty energy trajectory");
  double sum = 0.0;
  for (double x : e) sum += x;
  s.mean = sum / static_cast<double>(e.size());
  double sq = 0.0;
  for (double x : e) sq += (x - s.mean) * (x - s.mean);
  s.variance = sq / static_cast<double>(e.size());
  for (std::size_t t = 1; t < e.size(); ++t) {
    s.max_abs_step_change = std::max(s.max_abs_step_change, std::abs(e[t] - e[t - 1]));
  }
  return s;
}

std::vector<TrajectoryStats> trajectory_stats(const JudgeNet& net,
                                              std::span<const LatentVideo> videos) {
  std::vector<TrajectoryStats> out(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    out[i] = trajectory_stats(net.forward_energy(videos[i]).per_step);
  });
  return out;
}

std::string trajectories_csv(std::span<const std::string> ids,
                             std::span<const EnergyTrajectory> trajectories) {
  if (ids.size() != trajectories.size()) {
    fail(ErrorCode::kLengthMismatch, "ids and trajectories differ in length");
  }
  std::ostringstream out;
  out << "video_id,t,energy\n";
  char buf[64];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    for (std::size_t t = 0; t < trajectories[i].per_step.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.17g", trajectories[i].per_step[t]);
      out << ids[i] << ',' << t << ',' << buf << '\n';
    }
  }
  return out.str();
}

std::string trajectory_stats_csv(std::span<const std::string> ids,
                                 std::span<const TrajectoryStats> stats) {
  if (ids.size() != stats.size()) fail(ErrorCode::kLengthMismatch, "ids and stats differ in length");
  std::ostringstream out;
  out << "video_id,mean,variance,max_abs_step_change\n";
  char buf[160];
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g", stats[i].mean, stats[i].variance,
                  stats[i].max_abs_step_change);
    out << ids[i] << ',' << buf << '\n';
  }
  return out.str();
}

double auc(std::span<const double> pos, std::span<const double> neg) {
  if (pos.empty() || neg.empty()) fail(ErrorCode::kEmptyBatch, "auc needs both classes");
  // Rank-sum over the merged sample with average ranks for ties.
  std::vector<std::pair<double, int>> all;
  all.reserve(pos.size() + neg.size());
  for (double x : pos) all.emplace_back(x, 0);
  for (double x : neg) all.emplace_back(x, 1);
  std::sort(all.begin(), all.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double rank_sum_neg = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    while (j < all.size() && all[j].first == all[i].first) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].second == 1) rank_sum_neg += avg_rank;
    }
    i = j;
  }
  const double nn = static_cast<double>(neg.size()), np = static_cast<double>(pos.size());
  return (rank_sum_neg - nn * (nn + 1.0) / 2.0) / (nn * np);
}

double median(std::vector<double> v) {
  if (v.empty()) fail(ErrorCode::kEmptyBatch, "median of an empty set");
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

}  // namespace svj
