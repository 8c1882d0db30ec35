#include "svj/latents.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"

namespace svj {
namespace {

constexpr char kMagic[4] = {'S', 'V', 'J', 'L'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) {
    return ((v & 0xFFu) << 24) | ((v & 0xFF00u) << 8) | ((v >> 8) & 0xFF00u) |
           (v >> 24);
  }
  return v;
}

void write_u32(std::ostream& out, std::uint32_t v) {
  const std::uint32_t le = to_le(v);
  out.write(reinterpret_cast<const char*>(&le), sizeof(le));
}

std::uint32_t read_u32(std::istream& in, const std::string& what) {
  std::uint32_t le = 0;
  if (!in.read(reinterpret_cast<char*>(&le), sizeof(le))) {
    fail(ErrorCode::kFormatError, "truncated file while reading " + what);
  }
  return to_le(le);
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string encode_meta(const VideoMeta& meta) {
  std::ostringstream os;
  os << "source_kind=" << to_string(meta.source_kind) << '\n'
     << "seconds_per_latent_frame=" << format_double(meta.seconds_per_latent_frame)
     << '\n'
     << "compression_f=" << meta.compression_f << '\n'
     << "origin_id=" << meta.origin_id << '\n';
  return os.str();
}

VideoMeta decode_meta(const std::string& text) {
  VideoMeta meta;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      fail(ErrorCode::kFormatError, "metadata line without '=': " + line);
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "source_kind") {
      meta.source_kind = source_kind_from_string(value);
    } else if (key == "seconds_per_latent_frame") {
      meta.seconds_per_latent_frame = std::strtod(value.c_str(), nullptr);
    } else if (key == "compression_f") {
      meta.compression_f = std::stoi(value);
    } else if (key == "origin_id") {
      meta.origin_id = value;
    } else {
      fail(ErrorCode::kFormatError, "unknown metadata key: " + key);
    }
  }
  return meta;
}

}  // namespace

std::string to_string(SourceKind kind) {
  switch (kind) {
    case SourceKind::kReal: return "real";
    case SourceKind::kGenerated: return "generated";
    case SourceKind::kPerturbed: return "perturbed";
  }
  return "real";
}

SourceKind source_kind_from_string(const std::string& text) {
  if (text == "real") return SourceKind::kReal;
  if (text == "generated") return SourceKind::kGenerated;
  if (text == "perturbed") return SourceKind::kPerturbed;
  fail(ErrorCode::kFormatError, "unknown source kind: " + text);
}

LatentVideo::LatentVideo(VideoShape shape, std::vector<float> data,
                         VideoMeta meta)
    : shape_(shape), data_(std::move(data)), meta_(std::move(meta)) {
  if (shape_.frames < 0 || shape_.channels < 1 || shape_.height < 1 ||
      shape_.width < 1) {
    fail(ErrorCode::kShapeMismatch, "non-positive tensor dimension");
  }
  if (data_.size() != shape_.size()) {
    fail(ErrorCode::kShapeMismatch,
         "payload has " + std::to_string(data_.size()) + " elements, shape needs " +
             std::to_string(shape_.size()));
  }
}

LatentVideo LatentVideo::zeros(VideoShape shape, VideoMeta meta) {
  return LatentVideo(shape, std::vector<float>(shape.size(), 0.0f),
                     std::move(meta));
}

std::span<const float> LatentVideo::frame(int t) const {
  const std::size_t n = shape_.frame_size();
  return std::span<const float>(data_).subspan(static_cast<std::size_t>(t) * n, n);
}

LatentVideo LatentVideo::with_data(std::vector<float> data) const {
  return LatentVideo(shape_, std::move(data), meta_);
}

LatentVideo LatentVideo::with_meta(VideoMeta meta) const {
  return LatentVideo(shape_, data_, std::move(meta));
}

LatentVideo LatentVideo::slice_frames(int start, int count) const {
  if (start < 0 || count < 1 || start + count > shape_.frames) {
    fail(ErrorCode::kConfigError, "frame window out of range");
  }
  VideoShape s = shape_;
  s.frames = count;
  const std::size_t n = shape_.frame_size();
  auto first = data_.begin() + static_cast<std::ptrdiff_t>(start * n);
  std::vector<float> out(first, first + static_cast<std::ptrdiff_t>(count * n));
  return LatentVideo(s, std::move(out), meta_);
}

void validate(const LatentVideo& video, std::optional<SpatialShape> expected) {
  const VideoShape& s = video.shape();
  if (s.frames < 1) fail(ErrorCode::kEmptyVideo, "video has no frames");
  if (video.data().size() != s.size()) {
    fail(ErrorCode::kShapeMismatch, "payload size does not match shape");
  }
  if (expected && (expected->channels != s.channels ||
                   expected->height != s.height || expected->width != s.width)) {
    fail(ErrorCode::kShapeMismatch,
         "expected C,H,W = " + std::to_string(expected->channels) + "," +
             std::to_string(expected->height) + "," +
             std::to_string(expected->width));
  }
  for (float x : video.data()) {
    if (!std::isfinite(x)) fail(ErrorCode::kNonFinite, "NaN or Inf in latent");
  }
  const VideoMeta& m = video.meta();
  if (!(m.seconds_per_latent_frame > 0.0)) {
    fail(ErrorCode::kConfigError, "seconds_per_latent_frame must be positive");
  }
  if (m.compression_f < 1) {
    fail(ErrorCode::kConfigError, "compression_f must be >= 1");
  }
}

std::optional<FrameWindow> draw_truncation(int frames,
                                           double seconds_per_latent_frame,
                                           const TruncationConfig& cfg,
                                           Rng& rng) {
  if (cfg.probability < 0.0 || cfg.probability > 1.0) {
    fail(ErrorCode::kConfigError, "truncation probability outside [0,1]");
  }
  if (!(cfg.min_seconds > 0.0) || cfg.min_seconds > cfg.max_seconds) {
    fail(ErrorCode::kConfigError, "need 0 < min_seconds <= max_seconds");
  }
  if (cfg.probability == 0.0) return std::nullopt;
  const double duration = frames * seconds_per_latent_frame;
  if (cfg.min_seconds > duration + 1e-9) {
    fail(ErrorCode::kConfigError, "min_seconds exceeds video duration");
  }
  if (uniform01(rng) >= cfg.probability) return std::nullopt;

  const double hi = std::min(cfg.max_seconds, duration);
  const double lo = std::min(cfg.min_seconds, hi);
  const double seconds = lo == hi ? lo : uniform(rng, lo, hi);
  int count = static_cast<int>(std::floor(seconds / seconds_per_latent_frame + 1e-9));
  count = std::clamp(count, 1, frames);
  const int start = uniform_int(rng, 0, frames - count);
  return FrameWindow{start, count};
}

LatentVideo apply_window(const LatentVideo& video,
                         const std::optional<FrameWindow>& window) {
  if (!window) return video;
  return video.slice_frames(window->start, window->count);
}

LatentVideo truncate(const LatentVideo& video, const TruncationConfig& cfg,
                     Rng& rng) {
  return apply_window(video, draw_truncation(video.frames(),
                                             video.meta().seconds_per_latent_frame,
                                             cfg, rng));
}

std::filesystem::path sidecar_path(const std::filesystem::path& path) {
  std::filesystem::path p = path;
  p += ".json";
  return p;
}

void save_dataset(std::span<const LatentVideo> videos,
                  const std::filesystem::path& path) {
  for (const auto& v : videos) {
    validate(v);
    if (v.meta().origin_id.find('\n') != std::string::npos) {
      fail(ErrorCode::kConfigError, "origin_id may not contain newlines");
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIOError, "cannot open " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kVersion);
  write_u32(out, static_cast<std::uint32_t>(videos.size()));

  nlohmann::json sidecar;
  sidecar["format"] = "SVJL";
  sidecar["version"] = kVersion;
  sidecar["videos"] = nlohmann::json::array();

  for (const auto& v : videos) {
    const VideoShape& s = v.shape();
    write_u32(out, static_cast<std::uint32_t>(s.frames));
    write_u32(out, static_cast<std::uint32_t>(s.channels));
    write_u32(out, static_cast<std::uint32_t>(s.height));
    write_u32(out, static_cast<std::uint32_t>(s.width));
    for (float x : v.data()) {
      write_u32(out, std::bit_cast<std::uint32_t>(x));
    }
    const std::string meta = encode_meta(v.meta());
    write_u32(out, static_cast<std::uint32_t>(meta.size()));
    out.write(meta.data(), static_cast<std::streamsize>(meta.size()));

    sidecar["videos"].push_back({
        {"origin_id", v.meta().origin_id},
        {"source_kind", to_string(v.meta().source_kind)},
        {"seconds_per_latent_frame", v.meta().seconds_per_latent_frame},
        {"compression_f", v.meta().compression_f},
        {"shape", {s.frames, s.channels, s.height, s.width}},
    });
  }
  if (!out) fail(ErrorCode::kIOError, "write failed for " + path.string());

  std::ofstream side(sidecar_path(path), std::ios::trunc);
  if (!side) fail(ErrorCode::kIOError, "cannot open sidecar for " + path.string());
  side << sidecar.dump(2) << '\n';
}

std::vector<LatentVideo> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIOError, "cannot open " + path.string());
  char magic[4] = {};
  if (!in.read(magic, sizeof(magic)) ||
      std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    fail(ErrorCode::kFormatError, "bad magic in " + path.string());
  }
  const std::uint32_t version = read_u32(in, "version");
  if (version != kVersion) {
    fail(ErrorCode::kFormatError, "unsupported version " + std::to_string(version));
  }
  const std::uint32_t count = read_u32(in, "count");
  std::vector<LatentVideo> videos;
  videos.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    VideoShape s;
    s.frames = static_cast<int>(read_u32(in, "T"));
    s.channels = static_cast<int>(read_u32(in, "C"));
    s.height = static_cast<int>(read_u32(in, "H"));
    s.width = static_cast<int>(read_u32(in, "W"));
    if (s.frames < 1 || s.channels < 1 || s.height < 1 || s.width < 1) {
      fail(ErrorCode::kFormatError, "invalid shape in record " + std::to_string(i));
    }
    std::vector<float> data(s.size());
    for (auto& x : data) x = std::bit_cast<float>(read_u32(in, "payload"));
    const std::uint32_t meta_len = read_u32(in, "metadata length");
    std::string meta(meta_len, '\0');
    if (!in.read(meta.data(), meta_len)) {
      fail(ErrorCode::kFormatError, "truncated metadata");
    }
    videos.emplace_back(s, std::move(data), decode_meta(meta));
  }
  return videos;
}

}  // namespace svj
