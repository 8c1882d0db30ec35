#pragma once

#include <cstdint>
#include <vector>

#include "svj/judge_net.hpp"
#include "svj/latents.hpp"
#include "svj/rng.hpp"

namespace svj::test {

inline LatentVideo random_video(VideoShape shape, std::uint64_t seed, VideoMeta meta = {}) {
  Rng rng(seed);
  std::vector<float> data(shape.size());
  for (float& x : data) x = static_cast<float>(standard_normal(rng));
  return LatentVideo(shape, std::move(data), std::move(meta));
}

inline VideoShape small_shape(int frames = 5) { return VideoShape{frames, 2, 4, 4}; }

// Small enough that finite differences over many coordinates stay fast.
inline BackboneConfig tiny_config() {
  BackboneConfig c;
  c.num_layers = 3;
  c.model_dim = 8;
  c.num_heads = 2;
  c.mlp_ratio = 2;
  c.channels = 2;
  c.height = 4;
  c.width = 4;
  c.max_frames = 12;
  c.energy_hidden = 6;
  c.num_aspects = 5;
  c.aspect_hidden = 6;
  return c;
}

// Gives every LoRA B a random value so adapter gradients are not degenerate.
inline void randomize_adapters(JudgeNet& net, std::uint64_t seed, double scale = 0.2) {
  Rng rng(seed);
  for (auto& p : net.mutable_params()) {
    if (p.group != ParamGroup::kAdapter) continue;
    for (double& v : p.value) v = scale * standard_normal(rng);
  }
}

}  // namespace svj::test
