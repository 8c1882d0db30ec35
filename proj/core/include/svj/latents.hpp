#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "svj/rng.hpp"

namespace svj {

enum class SourceKind { kReal, kGenerated, kPerturbed };

std::string to_string(SourceKind kind);
SourceKind source_kind_from_string(const std::string& text);

struct VideoMeta {
  SourceKind source_kind = SourceKind::kReal;
  // Nine latent frames stand in for a six second clip.
  double seconds_per_latent_frame = 6.0 / 9.0;
  // f+1 latent frames cover 4f+1 pixel frames.
  int compression_f = 8;
  std::string origin_id;

  bool operator==(const VideoMeta&) const = default;
};

struct VideoShape {
  int frames = 9;
  int channels = 4;
  int height = 8;
  int width = 8;

  std::size_t frame_size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  std::size_t size() const { return frame_size() * frames; }
  bool operator==(const VideoShape&) const = default;
};

// T x C x H x W latent tensor, row-major with time outermost. Immutable:
// every transformation returns a new value.
class LatentVideo {
 public:
  LatentVideo(VideoShape shape, std::vector<float> data, VideoMeta meta);

  static LatentVideo zeros(VideoShape shape, VideoMeta meta = {});

  const VideoShape& shape() const { return shape_; }
  const VideoMeta& meta() const { return meta_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> frame(int t) const;

  float at(int t, int c, int h, int w) const {
    return data_[index(shape_, t, c, h, w)];
  }

  int frames() const { return shape_.frames; }
  double duration_seconds() const {
    return shape_.frames * meta_.seconds_per_latent_frame;
  }

  // Same meta, new payload of identical shape.
  LatentVideo with_data(std::vector<float> data) const;
  LatentVideo with_meta(VideoMeta meta) const;
  // Contiguous frames [start, start + count).
  LatentVideo slice_frames(int start, int count) const;

  static std::size_t index(const VideoShape& s, int t, int c, int h, int w) {
    return ((static_cast<std::size_t>(t) * s.channels + c) * s.height + h) *
               s.width + w;
  }

  bool operator==(const LatentVideo&) const = default;

 private:
  VideoShape shape_;
  std::vector<float> data_;
  VideoMeta meta_;
};

struct SpatialShape {
  int channels;
  int height;
  int width;
};

// Throws Error{kEmptyVideo | kNonFinite | kShapeMismatch | kConfigError}.
void validate(const LatentVideo& video,
              std::optional<SpatialShape> expected = std::nullopt);

struct TruncationConfig {
  double probability = 0.0;
  double min_seconds = 2.0;
  double max_seconds = 6.0;
};

struct FrameWindow {
  int start = 0;
  int count = 0;
};

// Draws the truncation decision for a clip of `frames` latent frames. An
// empty optional means "keep the whole clip". The window length is a uniform
// duration in [min_seconds, max_seconds] rounded down to whole frames (at
// least one), placed at a uniformly random start.
std::optional<FrameWindow> draw_truncation(int frames,
                                           double seconds_per_latent_frame,
                                           const TruncationConfig& cfg,
                                           Rng& rng);

LatentVideo apply_window(const LatentVideo& video,
                         const std::optional<FrameWindow>& window);

LatentVideo truncate(const LatentVideo& video, const TruncationConfig& cfg,
                     Rng& rng);

// Binary container: "SVJL", u32 version, u32 count, then per video
// u32 T,C,H,W, f32 LE payload, u32-length-prefixed key=value metadata.
// A JSON sidecar (<path>.json) mirrors the metadata.
void save_dataset(std::span<const LatentVideo> videos,
                  const std::filesystem::path& path);
std::vector<LatentVideo> load_dataset(const std::filesystem::path& path);

std::filesystem::path sidecar_path(const std::filesystem::path& path);

}  // namespace svj
