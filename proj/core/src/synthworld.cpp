#include "svj/synthworld.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"
#include "svj/parallel.hpp"

namespace svj {
namespace {

// Std of [1,2,1] x [1,2,1] / 16 applied to unit white noise: sqrt(36) / 16.
constexpr double kSmoothStd = 0.375;

// Periodic 3x3 binomial smoothing of one channel, rescaled to unit variance.
void smooth_channel(const std::vector<double>& in, std::vector<double>& out, int h, int w) {
  static constexpr double k[3] = {1.0, 2.0, 1.0};
  out.assign(in.size(), 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = (y + dy + h) % h, xx = (x + dx + w) % w;
          acc += k[dy + 1] * k[dx + 1] * in[static_cast<std::size_t>(yy * w + xx)];
        }
      }
      out[static_cast<std::size_t>(y * w + x)] = acc / (16.0 * kSmoothStd);
    }
  }
}

// One frame (C x H x W) of spatially correlated unit-variance noise.
std::vector<double> smooth_noise(const VideoShape& s, Rng& rng) {
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  std::vector<double> frame(s.frame_size());
  std::vector<double> white(plane), smooth;
  for (int c = 0; c < s.channels; ++c) {
    for (double& v : white) v = standard_normal(rng);
    smooth_channel(white, smooth, s.height, s.width);
    std::copy(smooth.begin(), smooth.end(), frame.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  return frame;
}

// Aspect weights over deg = (jitter, discontinuities, flicker, rho deficit).
// Every row reaches a penalty >= 4 at maximal_degradation().
struct AspectRow {
  std::array<double, 4> a;
};

AspectRow aspect_row(int q) {
  static constexpr std::array<double, 4> base = {5.0, 1.2, 5.0, 6.0};
  AspectRow row{{0.0, 0.0, 0.0, 0.0}};
  const int primary = q % 4;
  const int group = q / 4;
  const int secondary = (q + 1 + group) % 4;
  row.a[static_cast<std::size_t>(primary)] = base[static_cast<std::size_t>(primary)] * (1.0 + 0.1 * group);
  if (secondary != primary) {
    row.a[static_cast<std::size_t>(secondary)] += 0.25 * base[static_cast<std::size_t>(secondary)];
  }
  return row;
}

double rho_deficit(const QualityKnobs& k) { return std::max(0.0, kPristineRho - k.rho); }

}  // namespace

void check_knobs(const QualityKnobs& k) {
  if (!(k.rho >= 0.0 && k.rho <= 1.0)) fail(ErrorCode::kConfigError, "rho must lie in [0, 1]");
  if (!(k.jitter >= 0.0) || !std::isfinite(k.jitter)) {
    fail(ErrorCode::kConfigError, "jitter must be finite and >= 0");
  }
  if (k.discontinuities < 0) fail(ErrorCode::kConfigError, "discontinuities must be >= 0");
  if (!(k.flicker >= 0.0) || !std::isfinite(k.flicker)) {
    fail(ErrorCode::kConfigError, "flicker must be finite and >= 0");
  }
}

bool is_real_style(const QualityKnobs& k) {
  return k.jitter == 0.0 && k.discontinuities == 0 && k.flicker == 0.0 && k.rho >= 0.9;
}

QualityKnobs maximal_degradation() { return QualityKnobs{0.0, 1.0, 4, 1.0}; }

double quality_of(const QualityKnobs& k, const QualityWeights& w) {
  const double penalty = w.jitter * k.jitter + w.discontinuity * k.discontinuities +
                         w.flicker * k.flicker + w.rho * rho_deficit(k);
  return std::clamp(5.0 - penalty, 1.0, 5.0);
}

AspectScores aspects_of(const QualityKnobs& k, int num_aspects) {
  const std::array<double, 4> deg = {k.jitter, static_cast<double>(k.discontinuities), k.flicker,
                                     rho_deficit(k)};
  AspectScores out;
  out.scores.resize(static_cast<std::size_t>(std::max(0, num_aspects)));
  for (int q = 0; q < num_aspects; ++q) {
    const AspectRow row = aspect_row(q);
    double penalty = 0.0;
    for (std::size_t i = 0; i < 4; ++i) penalty += row.a[i] * deg[i];
    out.scores[static_cast<std::size_t>(q)] = std::clamp(5.0 - penalty, 1.0, 5.0);
  }
  return out;
}

GroundTruth ground_truth(const QualityKnobs& knobs, int num_aspects) {
  return GroundTruth{knobs, aspects_of(knobs, num_aspects), quality_of(knobs)};
}

std::pair<LatentVideo, GroundTruth> gen_video(const QualityKnobs& knobs, const VideoShape& shape,
                                              std::uint64_t seed, int num_aspects,
                                              VideoMeta meta) {
  check_knobs(knobs);
  if (shape.frames < 1 || shape.channels < 1 || shape.height < 1 || shape.width < 1) {
    fail(ErrorCode::kConfigError, "video shape must be positive");
  }
  if (knobs.discontinuities > shape.frames - 1) {
    fail(ErrorCode::kConfigError, "more discontinuities than frames after the first");
  }
  Rng base(derive_seed(seed, 0));
  Rng jitter(derive_seed(seed, 1));
  Rng jumps(derive_seed(seed, 2));

  const int frames = shape.frames;
  std::vector<char> redraw(static_cast<std::size_t>(frames), 0);
  {
    std::vector<int> candidates(static_cast<std::size_t>(std::max(0, frames - 1)));
    std::iota(candidates.begin(), candidates.end(), 1);
    std::shuffle(candidates.begin(), candidates.end(), jumps);
    const auto n = static_cast<std::size_t>(knobs.discontinuities);
    for (std::size_t i = 0; i < n; ++i) redraw[static_cast<std::size_t>(candidates[i])] = 1;
  }

  const std::size_t fs = shape.frame_size();
  const double innov = std::sqrt(std::max(0.0, 1.0 - knobs.rho * knobs.rho));
  std::vector<float> data(shape.size());
  std::vector<double> z = smooth_noise(shape, base);
  for (int t = 0; t < frames; ++t) {
    if (t > 0) {
      const std::vector<double> eta = smooth_noise(shape, base);
      for (std::size_t i = 0; i < fs; ++i) {
        z[i] = knobs.rho * z[i] + innov * eta[i] + knobs.jitter * standard_normal(jitter);
      }
      if (redraw[static_cast<std::size_t>(t)]) z = smooth_noise(shape, jumps);
    }
    const double gain = 1.0 + knobs.flicker * std::sin(2.0 * std::numbers::pi * t / frames);
    for (std::size_t i = 0; i < fs; ++i) {
      data[static_cast<std::size_t>(t) * fs + i] = static_cast<float>(gain * z[i]);
    }
  }
  return {LatentVideo(shape, std::move(data), std::move(meta)), ground_truth(knobs, num_aspects)};
}

PreferenceLabel label_pair(const GroundTruth& a, const GroundTruth& b, double tie_margin) {
  const double gap = a.quality - b.quality;
  if (gap > tie_margin) return PreferenceLabel::kFirstPreferred;
  if (gap < -tie_margin) return PreferenceLabel::kSecondPreferred;
  return PreferenceLabel::kTie;
}

KnobDistribution real_style_distribution() { return KnobDistribution{}; }

KnobDistribution generated_style_distribution() {
  return KnobDistribution{0.8, 0.95, 0.0, 0.6, 2, 0.0, 0.4};
}

KnobDistribution mixed_distribution() {
  return KnobDistribution{0.85, 0.99, 0.0, 0.5, 2, 0.0, 0.3};
}

void check_distribution(const KnobDistribution& d) {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfigError, m); };
  if (!(0.0 <= d.rho_min && d.rho_min <= d.rho_max && d.rho_max <= 1.0)) {
    bad("need 0 <= rho_min <= rho_max <= 1");
  }
  if (!(0.0 <= d.jitter_min && d.jitter_min <= d.jitter_max)) bad("bad jitter range");
  if (!(0.0 <= d.flicker_min && d.flicker_min <= d.flicker_max)) bad("bad flicker range");
  if (d.discontinuities_max < 0) bad("discontinuities_max must be >= 0");
}

QualityKnobs sample_knobs(const KnobDistribution& d, Rng& rng) {
  QualityKnobs k;
  k.rho = uniform(rng, d.rho_min, d.rho_max);
  k.jitter = d.jitter_max > d.jitter_min ? uniform(rng, d.jitter_min, d.jitter_max) : d.jitter_min;
  k.discontinuities = uniform_int(rng, 0, d.discontinuities_max);
  k.flicker =
      d.flicker_max > d.flicker_min ? uniform(rng, d.flicker_min, d.flicker_max) : d.flicker_min;
  return k;
}

namespace {

std::string item_id(const std::string& prefix, int i) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s-%05d", prefix.c_str(), i);
  return buf;
}

}  // namespace

std::vector<CorpusItem> gen_corpus(int n_real, int n_generated, const CorpusConfig& cfg,
                                   std::uint64_t seed) {
  if (n_real < 0 || n_generated < 0) fail(ErrorCode::kConfigError, "counts must be >= 0");
  check_distribution(cfg.real);
  check_distribution(cfg.generated);
  const bool can_degrade = cfg.generated.jitter_max > 0.0 || cfg.generated.flicker_max > 0.0 ||
                           cfg.generated.discontinuities_max > 0;
  if (n_generated > 0 && !can_degrade) {
    fail(ErrorCode::kConfigError, "generated distribution allows no degradation");
  }
  const std::size_t n = static_cast<std::size_t>(n_real) + static_cast<std::size_t>(n_generated);
  std::vector<std::optional<CorpusItem>> slots(n);
  parallel_for(n, [&](std::size_t i) {
    const bool real = i < static_cast<std::size_t>(n_real);
    Rng rng(derive_seed(seed, i));
    QualityKnobs k = sample_knobs(real ? cfg.real : cfg.generated, rng);
    while (!real && k.jitter == 0.0 && k.flicker == 0.0 && k.discontinuities == 0) {
      k = sample_knobs(cfg.generated, rng);
    }
    VideoMeta meta;
    meta.source_kind = real ? SourceKind::kReal : SourceKind::kGenerated;
    meta.origin_id = real ? item_id("real", static_cast<int>(i))
                          : item_id("gen", static_cast<int>(i) - n_real);
    auto [video, truth] = gen_video(k, cfg.shape, rng(), cfg.num_aspects, meta);
    slots[i] = CorpusItem{std::move(video), std::move(truth)};
  });
  std::vector<CorpusItem> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<CorpusItem> gen_pool(int n, const KnobDistribution& dist, const VideoShape& shape,
                                 std::uint64_t seed, int num_aspects,
                                 const std::string& id_prefix) {
  if (n < 0) fail(ErrorCode::kConfigError, "count must be >= 0");
  check_distribution(dist);
  std::vector<std::optional<CorpusItem>> slots(static_cast<std::size_t>(n));
  parallel_for(slots.size(), [&](std::size_t i) {
    Rng rng(derive_seed(seed, i));
    const QualityKnobs k = sample_knobs(dist, rng);
    VideoMeta meta;
    meta.source_kind = is_real_style(k) ? SourceKind::kReal : SourceKind::kGenerated;
    meta.origin_id = item_id(id_prefix, static_cast<int>(i));
    auto [video, truth] = gen_video(k, shape, rng(), num_aspects, meta);
    slots[i] = CorpusItem{std::move(video), std::move(truth)};
  });
  std::vector<CorpusItem> out;
  out.reserve(slots.size());
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<PairIndex> sample_pairs(std::span<const CorpusItem> items, int n, double tie_margin,
                                    std::uint64_t seed) {
  if (n < 0 || !(tie_margin >= 0.0)) fail(ErrorCode::kConfigError, "bad pair sampling request");
  if (n > 0 && items.size() < 2) fail(ErrorCode::kEmptyCorpus, "need at least two items");
  Rng rng(seed);
  const int last = static_cast<int>(items.size()) - 1;
  std::vector<PairIndex> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const auto a = static_cast<std::size_t>(uniform_int(rng, 0, last));
    auto b = static_cast<std::size_t>(uniform_int(rng, 0, last - 1));
    if (b >= a) ++b;
    out.push_back({a, b, label_pair(items[a].truth, items[b].truth, tie_margin)});
  }
  return out;
}

std::vector<PreferencePair> materialize(std::span<const CorpusItem> items,
                                        std::span<const PairIndex> pairs) {
  std::vector<PreferencePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (p.first >= items.size() || p.second >= items.size()) {
      fail(ErrorCode::kConfigError, "pair index out of range");
    }
    out.push_back({items[p.first].video, items[p.second].video, p.label});
  }
  return out;
}

std::vector<LatentVideo> videos_of(std::span<const CorpusItem> items) {
  std::vector<LatentVideo> out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back(i.video);
  return out;
}

std::vector<LabeledVideo> labeled_of(std::span<const CorpusItem> items) {
  std::vector<LabeledVideo> out;
  out.reserve(items.size());
  for (const auto& i : items) out.push_back({i.video, i.truth.aspects});
  return out;
}

std::string knobs_to_json(const QualityKnobs& k) {
  nlohmann::json j = {{"rho", k.rho},
                      {"jitter", k.jitter},
                      {"discontinuities", k.discontinuities},
                      {"flicker", k.flicker}};
  return j.dump();
}

}  // namespace svj
