#include "svj/sampler.hpp"

#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"

namespace svj {
namespace {

constexpr double kSumTolerance = 1e-9;

double sum(const KindProbabilities& p) {
  return std::accumulate(p.begin(), p.end(), 0.0);
}

std::size_t idx(PerturbationKind k) { return static_cast<std::size_t>(k); }

}  // namespace

void check_table(const NegativeSamplingTable& table) {
  auto bad = [](const std::string& what) { fail(ErrorCode::kInvalidTable, what); };
  if (!(table.generated_reserved >= 0.0 && table.generated_reserved <= 1.0)) {
    bad("generated_reserved outside [0,1]");
  }
  for (double p : table.real_perturb_probs) {
    if (!(p >= 0.0)) bad("negative or NaN real perturbation probability");
  }
  if (std::abs(table.generated_reserved + sum(table.real_perturb_probs) - 1.0) >
      kSumTolerance) {
    bad("generated_reserved + real perturbation probabilities != 1");
  }
  if (table.generated_perturb_probs) {
    for (double p : *table.generated_perturb_probs) {
      if (!(p >= 0.0)) bad("negative or NaN generated perturbation probability");
    }
    if (std::abs(sum(*table.generated_perturb_probs) - 1.0) > kSumTolerance) {
      bad("generated perturbation probabilities do not sum to 1");
    }
  }
}

NegativeSamplingTable default_table() {
  NegativeSamplingTable t;
  t.generated_reserved = 0.30;
  t.real_perturb_probs[idx(PerturbationKind::kTemporalSliceSwap)] = 0.04;
  t.real_perturb_probs[idx(PerturbationKind::kNoisySegment)] = 0.10;
  t.real_perturb_probs[idx(PerturbationKind::kFrameShuffle)] = 0.18;
  t.real_perturb_probs[idx(PerturbationKind::kFrameDrop)] = 0.18;
  t.real_perturb_probs[idx(PerturbationKind::kPatchSwap)] = 0.20;
  KindProbabilities g{};
  g[idx(PerturbationKind::kTemporalSliceSwap)] = 0.05;
  g[idx(PerturbationKind::kNoisySegment)] = 0.15;
  g[idx(PerturbationKind::kFrameShuffle)] = 0.25;
  g[idx(PerturbationKind::kFrameDrop)] = 0.25;
  g[idx(PerturbationKind::kPatchSwap)] = 0.30;
  t.generated_perturb_probs = g;
  return t;
}

NegativeSamplingTable generated_only_table() {
  NegativeSamplingTable t;
  t.generated_reserved = 1.0;
  return t;
}

NegativeSamplingTable single_kind_table(PerturbationKind kind) {
  NegativeSamplingTable t;
  t.generated_reserved = 0.0;
  t.real_perturb_probs[idx(kind)] = 1.0;
  return t;
}

PerturbationKind sample_kind(const KindProbabilities& probs, Rng& rng) {
  const double total = sum(probs);
  if (!(total > 0.0)) fail(ErrorCode::kInvalidTable, "no perturbation mass");
  const double u = uniform01(rng) * total;
  double acc = 0.0;
  std::size_t last = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last = i;
    acc += probs[i];
    if (u < acc) return kAllPerturbations[i];
  }
  return kAllPerturbations[last];
}

NegativeChoice sample_negative_kind(const NegativeSamplingTable& table, Rng& rng) {
  check_table(table);
  const double u = uniform01(rng);
  if (u < table.generated_reserved) return {true, PerturbationKind::kFrameShuffle};
  double acc = table.generated_reserved;
  std::size_t last = 0;
  for (std::size_t i = 0; i < table.real_perturb_probs.size(); ++i) {
    const double p = table.real_perturb_probs[i];
    if (p <= 0.0) continue;
    last = i;
    acc += p;
    if (u < acc) return {false, kAllPerturbations[i]};
  }
  if (table.generated_reserved >= 1.0 - kSumTolerance && sum(table.real_perturb_probs) == 0.0) {
    return {true, PerturbationKind::kFrameShuffle};
  }
  // u landed in the rounding gap above the last cumulative bound.
  return {false, kAllPerturbations[last]};
}

DecayProfile measure_decay(PerturbationKind kind,
                           const std::function<double(int)>& step,
                           const DecayConfig& cfg) {
  if (cfg.max_steps < 1 || !(cfg.epsilon >= 0.0) || cfg.smoothing_window < 1) {
    fail(ErrorCode::kConfigError, "invalid decay configuration");
  }
  DecayProfile profile;
  profile.kind = kind;
  double peak = 0.0;
  for (int t = 0; t < cfg.max_steps; ++t) {
    const double norm = step(t);
    if (!std::isfinite(norm)) {
      fail(ErrorCode::kTrainingDiverged, "non-finite gradient norm at step " +
                                             std::to_string(t));
    }
    profile.grad_norms.push_back(norm);
    const std::size_t n = profile.grad_norms.size();
    const std::size_t w = std::min<std::size_t>(n, static_cast<std::size_t>(cfg.smoothing_window));
    double smoothed = 0.0;
    for (std::size_t i = n - w; i < n; ++i) smoothed += profile.grad_norms[i];
    smoothed /= static_cast<double>(w);
    peak = std::max(peak, smoothed);
    profile.epsilon = cfg.mode == EpsilonMode::kAbsolute ? cfg.epsilon : cfg.epsilon * peak;
    if (smoothed <= profile.epsilon) {
      profile.tau = t;
      break;
    }
  }
  return profile;
}

NegativeSamplingTable calibrate(const std::vector<DecayProfile>& profiles,
                                double generated_reserved, WeightRule rule) {
  if (profiles.empty()) fail(ErrorCode::kEmptyProfiles, "no decay profiles");
  if (!(generated_reserved >= 0.0 && generated_reserved <= 1.0)) {
    fail(ErrorCode::kInvalidTable, "generated_reserved outside [0,1]");
  }
  std::size_t longest = 0;
  for (const auto& p : profiles) longest = std::max(longest, p.grad_norms.size());

  KindProbabilities weight{};
  for (const auto& p : profiles) {
    double w = 0.0;
    if (rule == WeightRule::kDecayTime) {
      w = p.tau ? static_cast<double>(*p.tau) : static_cast<double>(longest);
    } else {
      if (p.grad_norms.empty()) fail(ErrorCode::kEmptyProfiles, "profile without norms");
      const double mean = std::accumulate(p.grad_norms.begin(), p.grad_norms.end(), 0.0) /
                          static_cast<double>(p.grad_norms.size());
      w = mean > 0.0 ? 1.0 / mean : 0.0;
    }
    weight[idx(p.kind)] += w;
  }

  NegativeSamplingTable table;
  table.generated_reserved = generated_reserved;
  const double total = sum(weight);
  const double mass = 1.0 - generated_reserved;
  if (total > 0.0) {
    for (std::size_t i = 0; i < weight.size(); ++i) {
      table.real_perturb_probs[i] = mass * weight[i] / total;
    }
  } else {
    // Every profile decayed at step zero: no difficulty signal, spread evenly
    // over the measured kinds.
    std::size_t measured = 0;
    KindProbabilities seen{};
    for (const auto& p : profiles) seen[idx(p.kind)] = 1.0;
    for (double s : seen) measured += s > 0.0 ? 1 : 0;
    for (std::size_t i = 0; i < seen.size(); ++i) {
      table.real_perturb_probs[i] = seen[i] > 0.0 ? mass / static_cast<double>(measured) : 0.0;
    }
  }
  check_table(table);
  return table;
}

std::string table_to_json(const NegativeSamplingTable& table) {
  nlohmann::json j;
  j["generated_reserved"] = table.generated_reserved;
  nlohmann::json real, gen;
  for (auto k : kAllPerturbations) {
    real[to_string(k)] = table.real_perturb_probs[idx(k)];
    if (table.generated_perturb_probs) {
      gen[to_string(k)] = (*table.generated_perturb_probs)[idx(k)];
    }
  }
  j["real_perturb_probs"] = real;
  if (table.generated_perturb_probs) j["generated_perturb_probs"] = gen;
  return j.dump(2);
}

NegativeSamplingTable table_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    NegativeSamplingTable t;
    t.generated_reserved = j.at("generated_reserved").get<double>();
    for (auto& [key, value] : j.at("real_perturb_probs").items()) {
      t.real_perturb_probs[idx(perturbation_kind_from_string(key))] = value.get<double>();
    }
    if (j.contains("generated_perturb_probs")) {
      KindProbabilities g{};
      for (auto& [key, value] : j.at("generated_perturb_probs").items()) {
        g[idx(perturbation_kind_from_string(key))] = value.get<double>();
      }
      t.generated_perturb_probs = g;
    }
    check_table(t);
    return t;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad sampling table: ") + e.what());
  }
}

}  // namespace svj
