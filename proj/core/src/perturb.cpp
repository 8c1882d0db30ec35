#include "svj/perturb.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"

namespace svj {
namespace {

using nlohmann::json;

[[noreturn]] void degenerate(const std::string& what) { fail(ErrorCode::kDegenerateSpec, what); }

template <typename P>
const P& params_as(const PerturbationSpec& spec, PerturbationKind expected) {
  if (spec.kind != expected) {
    degenerate("spec kind " + to_string(spec.kind) + " passed to " +
               to_string(expected));
  }
  const P* p = std::get_if<P>(&spec.params);
  if (p == nullptr) degenerate("params do not match kind " + to_string(spec.kind));
  return *p;
}

void check_slices(const SliceSwapParams& s, int frames) {
  if (frames < 2) degenerate("need at least two frames to swap");
  if (s.span < 0) degenerate("negative slice span");
  if (2 * s.span > frames) degenerate("slice span exceeds T/2");
  if (s.first < 0 || s.second < 0 || s.first + s.span >= frames ||
      s.second + s.span >= frames) {
    degenerate("slice out of range");
  }
  if (std::abs(s.first - s.second) <= s.span) degenerate("slices overlap");
}

void check_region(const Region& r, int height, int width) {
  if (r.height < 1 || r.width < 1) degenerate("empty region");
  if (r.top < 0 || r.left < 0 || r.top + r.height > height ||
      r.left + r.width > width) {
    degenerate("region out of bounds");
  }
}

std::vector<float> copy_data(const LatentVideo& v) {
  return {v.data().begin(), v.data().end()};
}

VideoMeta perturbed_meta(const LatentVideo& v, PerturbationKind kind) {
  VideoMeta m = v.meta();
  m.source_kind = SourceKind::kPerturbed;
  m.origin_id += "+" + to_string(kind);
  return m;
}

void copy_frame(const LatentVideo& in, int src, std::vector<float>& out, int dst) {
  const auto f = in.frame(src);
  std::copy(f.begin(), f.end(),
            out.begin() + static_cast<std::ptrdiff_t>(dst * f.size()));
}

}  // namespace

std::string to_string(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kTemporalSliceSwap: return "temporal_slice_swap";
    case PerturbationKind::kNoisySegment: return "noisy_segment";
    case PerturbationKind::kFrameShuffle: return "frame_shuffle";
    case PerturbationKind::kFrameDrop: return "frame_drop";
    case PerturbationKind::kPatchSwap: return "patch_swap";
  }
  return "frame_shuffle";
}

PerturbationKind perturbation_kind_from_string(const std::string& text) {
  for (auto k : kAllPerturbations) {
    if (to_string(k) == text) return k;
  }
  fail(ErrorCode::kFormatError, "unknown perturbation kind: " + text);
}

void check_spec(const PerturbationSpec& spec, int frames, int height, int width) {
  switch (spec.kind) {
    case PerturbationKind::kFrameShuffle: {
      const auto& p = params_as<ShuffleParams>(spec, spec.kind);
      if (frames < 2) degenerate("frame shuffle needs T >= 2");
      if (p.indices.size() < 2) degenerate("frame shuffle needs |I| >= 2");
      if (p.indices.size() != p.sources.size()) degenerate("|I| != |Pi|");
      std::vector<int> a = p.indices, b = p.sources;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (std::adjacent_find(a.begin(), a.end()) != a.end()) {
        degenerate("repeated shuffle index");
      }
      if (a != b) degenerate("Pi is not a permutation of I");
      if (a.front() < 0 || a.back() >= frames) degenerate("index out of range");
      if (p.indices == p.sources) degenerate("Pi is the identity");
      break;
    }
    case PerturbationKind::kFrameDrop: {
      const auto& p = params_as<DropParams>(spec, spec.kind);
      if (frames < 2) degenerate("frame drop needs T >= 2");
      if (p.indices.empty()) degenerate("frame drop needs |I| >= 1");
      std::vector<int> a = p.indices;
      std::sort(a.begin(), a.end());
      if (a.front() < 1) degenerate("first frame may not be dropped");
      if (a.back() >= frames) degenerate("index out of range");
      for (std::size_t i = 1; i < a.size(); ++i) {
        if (a[i] - a[i - 1] < 2) degenerate("drop indices must be non-contiguous");
      }
      break;
    }
    case PerturbationKind::kNoisySegment: {
      const auto& p = params_as<NoiseParams>(spec, spec.kind);
      if (!(p.sigma > 0.0)) fail(ErrorCode::kConfigError, "sigma must be positive");
      if (p.start >= p.end) degenerate("noise segment needs start < end");
      if (p.start < 0 || p.end >= frames) degenerate("segment out of range");
      break;
    }
    case PerturbationKind::kPatchSwap: {
      const auto& p = params_as<PatchSwapParams>(spec, spec.kind);
      check_slices(p.slices, frames);
      check_region(p.region, height, width);
      break;
    }
    case PerturbationKind::kTemporalSliceSwap: {
      check_slices(params_as<SliceSwapParams>(spec, spec.kind), frames);
      break;
    }
  }
}

LatentVideo frame_shuffle(const LatentVideo& video, const PerturbationSpec& spec) {
  const auto& p = params_as<ShuffleParams>(spec, PerturbationKind::kFrameShuffle);
  const auto& s = video.shape();
  check_spec(spec, s.frames, s.height, s.width);
  std::vector<float> out = copy_data(video);
  for (std::size_t i = 0; i < p.indices.size(); ++i) {
    copy_frame(video, p.sources[i], out, p.indices[i]);
  }
  return LatentVideo(s, std::move(out), perturbed_meta(video, spec.kind));
}

LatentVideo frame_drop(const LatentVideo& video, const PerturbationSpec& spec) {
  const auto& p = params_as<DropParams>(spec, PerturbationKind::kFrameDrop);
  const auto& s = video.shape();
  check_spec(spec, s.frames, s.height, s.width);
  std::vector<float> out = copy_data(video);
  for (int t : p.indices) copy_frame(video, t - 1, out, t);
  return LatentVideo(s, std::move(out), perturbed_meta(video, spec.kind));
}

LatentVideo noisy_segment(const LatentVideo& video, const PerturbationSpec& spec) {
  const auto& p = params_as<NoiseParams>(spec, PerturbationKind::kNoisySegment);
  const auto& s = video.shape();
  check_spec(spec, s.frames, s.height, s.width);
  std::vector<float> out = copy_data(video);
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, p.sigma);
  const std::size_t n = s.frame_size();
  for (std::size_t i = static_cast<std::size_t>(p.start) * n;
       i < static_cast<std::size_t>(p.end + 1) * n; ++i) {
    out[i] = static_cast<float>(out[i] + noise(rng));
  }
  return LatentVideo(s, std::move(out), perturbed_meta(video, spec.kind));
}

LatentVideo patch_swap(const LatentVideo& video, const PerturbationSpec& spec) {
  const auto& p = params_as<PatchSwapParams>(spec, PerturbationKind::kPatchSwap);
  const auto& s = video.shape();
  check_spec(spec, s.frames, s.height, s.width);
  std::vector<float> out = copy_data(video);
  const auto& r = p.region;
  for (int d = 0; d <= p.slices.span; ++d) {
    const int a = p.slices.first + d;
    const int b = p.slices.second + d;
    for (int c = 0; c < s.channels; ++c) {
      for (int h = r.top; h < r.top + r.height; ++h) {
        for (int w = r.left; w < r.left + r.width; ++w) {
          out[LatentVideo::index(s, a, c, h, w)] = video.at(b, c, h, w);
          if (p.bidirectional) {
            out[LatentVideo::index(s, b, c, h, w)] = video.at(a, c, h, w);
          }
        }
      }
    }
  }
  return LatentVideo(s, std::move(out), perturbed_meta(video, spec.kind));
}

LatentVideo temporal_slice_swap(const LatentVideo& video,
                                const PerturbationSpec& spec) {
  const auto& p =
      params_as<SliceSwapParams>(spec, PerturbationKind::kTemporalSliceSwap);
  const auto& s = video.shape();
  check_spec(spec, s.frames, s.height, s.width);
  std::vector<float> out = copy_data(video);
  for (int d = 0; d <= p.span; ++d) {
    copy_frame(video, p.second + d, out, p.first + d);
    copy_frame(video, p.first + d, out, p.second + d);
  }
  return LatentVideo(s, std::move(out), perturbed_meta(video, spec.kind));
}

LatentVideo apply_perturbation(const LatentVideo& video,
                               const PerturbationSpec& spec) {
  switch (spec.kind) {
    case PerturbationKind::kFrameShuffle: return frame_shuffle(video, spec);
    case PerturbationKind::kFrameDrop: return frame_drop(video, spec);
    case PerturbationKind::kNoisySegment: return noisy_segment(video, spec);
    case PerturbationKind::kPatchSwap: return patch_swap(video, spec);
    case PerturbationKind::kTemporalSliceSwap: return temporal_slice_swap(video, spec);
  }
  degenerate("unknown perturbation kind");
}

int min_frames_for(PerturbationKind kind) {
  switch (kind) {
    case PerturbationKind::kFrameShuffle:
    case PerturbationKind::kFrameDrop:
    case PerturbationKind::kNoisySegment:
      return 2;
    case PerturbationKind::kPatchSwap:
    case PerturbationKind::kTemporalSliceSwap:
      // tau >= 1 and two disjoint slices of tau + 1 frames.
      return 4;
  }
  return 2;
}

namespace {

SliceSwapParams sample_slices(int frames, Rng& rng) {
  const int span = uniform_int(rng, 1, frames / 2 - 1);
  const int len = span + 1;
  const int first = uniform_int(rng, 0, frames - 2 * len);
  const int second = uniform_int(rng, first + len, frames - len);
  return {first, second, span};
}

Region sample_region(int height, int width, const SpecSamplingConfig& cfg, Rng& rng) {
  const double total = static_cast<double>(height) * width;
  std::vector<std::pair<int, int>> sizes;
  for (int h = 1; h <= height; ++h) {
    for (int w = 1; w <= width; ++w) {
      const double frac = h * w / total;
      if (frac >= cfg.region_min_fraction && frac <= cfg.region_max_fraction) {
        sizes.emplace_back(h, w);
      }
    }
  }
  if (sizes.empty()) {
    // Tiny frames: take the size whose coverage is closest to the band.
    double best = 1e300;
    std::pair<int, int> pick{1, 1};
    for (int h = 1; h <= height; ++h) {
      for (int w = 1; w <= width; ++w) {
        const double frac = h * w / total;
        const double gap = std::max(cfg.region_min_fraction - frac,
                                    frac - cfg.region_max_fraction);
        if (gap < best) {
          best = gap;
          pick = {h, w};
        }
      }
    }
    sizes.push_back(pick);
  }
  const auto [h, w] = sizes[static_cast<std::size_t>(
      uniform_int(rng, 0, static_cast<int>(sizes.size()) - 1))];
  Region r;
  r.height = h;
  r.width = w;
  r.top = uniform_int(rng, 0, height - h);
  r.left = uniform_int(rng, 0, width - w);
  return r;
}

}  // namespace

PerturbationSpec sample_spec(PerturbationKind kind, int frames, int height,
                             int width, Rng& rng, const SpecSamplingConfig& cfg) {
  if (frames < min_frames_for(kind)) {
    degenerate(to_string(kind) + " needs at least " +
               std::to_string(min_frames_for(kind)) + " frames, got " +
               std::to_string(frames));
  }
  PerturbationSpec spec;
  spec.kind = kind;
  spec.seed = rng();
  switch (kind) {
    case PerturbationKind::kFrameShuffle: {
      const int k = uniform_int(rng, 2, std::max(2, std::min(frames, frames / 2 + 1)));
      std::vector<int> all(static_cast<std::size_t>(frames));
      std::iota(all.begin(), all.end(), 0);
      std::shuffle(all.begin(), all.end(), rng);
      ShuffleParams p;
      p.indices.assign(all.begin(), all.begin() + k);
      std::sort(p.indices.begin(), p.indices.end());
      p.sources = p.indices;
      while (p.sources == p.indices) std::shuffle(p.sources.begin(), p.sources.end(), rng);
      spec.params = std::move(p);
      break;
    }
    case PerturbationKind::kFrameDrop: {
      const int k = uniform_int(rng, 1, std::max(1, (frames - 1) / 3));
      std::vector<int> candidates(static_cast<std::size_t>(frames - 1));
      std::iota(candidates.begin(), candidates.end(), 1);
      std::shuffle(candidates.begin(), candidates.end(), rng);
      DropParams p;
      for (int c : candidates) {
        if (static_cast<int>(p.indices.size()) == k) break;
        const bool adjacent = std::any_of(p.indices.begin(), p.indices.end(),
                                          [c](int i) { return std::abs(i - c) < 2; });
        if (!adjacent) p.indices.push_back(c);
      }
      std::sort(p.indices.begin(), p.indices.end());
      spec.params = std::move(p);
      break;
    }
    case PerturbationKind::kNoisySegment: {
      if (!(cfg.sigma > 0.0)) fail(ErrorCode::kConfigError, "sigma must be positive");
      NoiseParams p;
      p.start = uniform_int(rng, 0, frames - 2);
      p.end = uniform_int(rng, p.start + 1, frames - 1);
      p.sigma = cfg.sigma;
      spec.params = p;
      break;
    }
    case PerturbationKind::kPatchSwap: {
      PatchSwapParams p;
      p.slices = sample_slices(frames, rng);
      p.region = sample_region(height, width, cfg, rng);
      p.bidirectional = cfg.bidirectional_patch_swap;
      spec.params = p;
      break;
    }
    case PerturbationKind::kTemporalSliceSwap:
      spec.params = sample_slices(frames, rng);
      break;
  }
  return spec;
}

std::string spec_to_json(const PerturbationSpec& spec) {
  json j;
  j["kind"] = to_string(spec.kind);
  j["seed"] = spec.seed;
  json p;
  std::visit(
      [&p](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ShuffleParams>) {
          p["indices"] = v.indices;
          p["sources"] = v.sources;
        } else if constexpr (std::is_same_v<T, DropParams>) {
          p["indices"] = v.indices;
        } else if constexpr (std::is_same_v<T, NoiseParams>) {
          p["start"] = v.start;
          p["end"] = v.end;
          p["sigma"] = v.sigma;
        } else if constexpr (std::is_same_v<T, PatchSwapParams>) {
          p["first"] = v.slices.first;
          p["second"] = v.slices.second;
          p["span"] = v.slices.span;
          p["region"] = {{"top", v.region.top},
                         {"left", v.region.left},
                         {"height", v.region.height},
                         {"width", v.region.width}};
          p["bidirectional"] = v.bidirectional;
        } else {
          p["first"] = v.first;
          p["second"] = v.second;
          p["span"] = v.span;
        }
      },
      spec.params);
  j["params"] = std::move(p);
  return j.dump();
}

PerturbationSpec spec_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    PerturbationSpec spec;
    spec.kind = perturbation_kind_from_string(j.at("kind").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
    const json& p = j.at("params");
    switch (spec.kind) {
      case PerturbationKind::kFrameShuffle:
        spec.params = ShuffleParams{p.at("indices").get<std::vector<int>>(),
                                    p.at("sources").get<std::vector<int>>()};
        break;
      case PerturbationKind::kFrameDrop:
        spec.params = DropParams{p.at("indices").get<std::vector<int>>()};
        break;
      case PerturbationKind::kNoisySegment:
        spec.params = NoiseParams{p.at("start").get<int>(), p.at("end").get<int>(),
                                  p.at("sigma").get<double>()};
        break;
      case PerturbationKind::kPatchSwap: {
        PatchSwapParams ps;
        ps.slices = {p.at("first").get<int>(), p.at("second").get<int>(),
                     p.at("span").get<int>()};
        const json& r = p.at("region");
        ps.region = {r.at("top").get<int>(), r.at("left").get<int>(),
                     r.at("height").get<int>(), r.at("width").get<int>()};
        ps.bidirectional = p.value("bidirectional", true);
        spec.params = ps;
        break;
      }
      case PerturbationKind::kTemporalSliceSwap:
        spec.params = SliceSwapParams{p.at("first").get<int>(),
                                      p.at("second").get<int>(),
                                      p.at("span").get<int>()};
        break;
    }
    return spec;
  } catch (const json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad perturbation spec: ") + e.what());
  }
}

double latent_std(std::span<const LatentVideo> videos) {
  double sum = 0.0, sq = 0.0;
  std::size_t n = 0;
  for (const auto& v : videos) {
    for (float x : v.data()) {
      sum += x;
      sq += static_cast<double>(x) * x;
    }
    n += v.data().size();
  }
  if (n == 0) return 0.0;
  const double mean = sum / static_cast<double>(n);
  return std::sqrt(std::max(0.0, sq / static_cast<double>(n) - mean * mean));
}

}  // namespace svj
