#include <bit>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"
#include "svj/judge_net.hpp"

namespace svj {
namespace {

constexpr char kMagic[4] = {'S', 'V', 'J', 'M'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

void put_u32(std::ostream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t get_u32(std::istream& in) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!in) fail(ErrorCode::kFormatError, "truncated checkpoint");
  return v;
}

std::string get_bytes(std::istream& in, std::uint32_t n) {
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) fail(ErrorCode::kFormatError, "truncated checkpoint");
  return s;
}

nlohmann::json header_json(const BackboneConfig& c, const std::optional<AdapterConfig>& a,
                           GroupMask trainable) {
  nlohmann::json j;
  j["backbone"] = {{"num_layers", c.num_layers},       {"model_dim", c.model_dim},
                   {"num_heads", c.num_heads},         {"mlp_ratio", c.mlp_ratio},
                   {"channels", c.channels},           {"height", c.height},
                   {"width", c.width},                 {"max_frames", c.max_frames},
                   {"energy_hidden", c.energy_hidden}, {"num_aspects", c.num_aspects},
                   {"aspect_hidden", c.aspect_hidden}, {"aggregation", to_string(c.aggregation)}};
  if (a) {
    j["adapter"] = {{"rank", a->rank}, {"alpha", a->alpha}, {"placement", to_string(a->placement)}};
  } else {
    j["adapter"] = nullptr;
  }
  j["trainable_groups"] = trainable;
  return j;
}

}  // namespace

void JudgeNet::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIOError, "cannot write " + path.string());
  out.write(kMagic, 4);
  put_u32(out, kVersion);
  const std::string header = header_json(cfg_, adapter_, trainable_mask_).dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  put_u32(out, static_cast<std::uint32_t>(params_.size()));
  for (const Param& p : params_) {
    put_u32(out, static_cast<std::uint32_t>(p.name.size()));
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put_u32(out, static_cast<std::uint32_t>(p.shape.size()));
    for (int s : p.shape) put_u32(out, static_cast<std::uint32_t>(s));
    for (double v : p.value) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  }
  if (!out) fail(ErrorCode::kIOError, "write failed: " + path.string());
}

JudgeNet JudgeNet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIOError, "cannot read " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0) {
    fail(ErrorCode::kFormatError, path.string() + " is not a model checkpoint");
  }
  if (get_u32(in) != kVersion) fail(ErrorCode::kFormatError, "unsupported checkpoint version");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(get_bytes(in, get_u32(in)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad checkpoint header: ") + e.what());
  }
  BackboneConfig cfg;
  std::optional<AdapterConfig> adapter;
  GroupMask trainable = 0;
  try {
    const auto& b = h.at("backbone");
    cfg.num_layers = b.at("num_layers");
    cfg.model_dim = b.at("model_dim");
    cfg.num_heads = b.at("num_heads");
    cfg.mlp_ratio = b.at("mlp_ratio");
    cfg.channels = b.at("channels");
    cfg.height = b.at("height");
    cfg.width = b.at("width");
    cfg.max_frames = b.at("max_frames");
    cfg.energy_hidden = b.at("energy_hidden");
    cfg.num_aspects = b.at("num_aspects");
    cfg.aspect_hidden = b.at("aspect_hidden");
    cfg.aggregation = aggregation_from_string(b.at("aggregation"));
    if (!h.at("adapter").is_null()) {
      const auto& a = h.at("adapter");
      adapter = AdapterConfig{a.at("rank"), a.at("alpha"),
                              placement_from_string(a.at("placement"))};
    }
    trainable = h.at("trainable_groups");
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, std::string("bad checkpoint header: ") + e.what());
  }

  JudgeNet net(cfg, 0);
  if (adapter) net.set_placement(*adapter, 0);
  const std::uint32_t count = get_u32(in);
  if (count != net.params_.size()) {
    fail(ErrorCode::kFormatError, "checkpoint parameter count does not match its config");
  }
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string name = get_bytes(in, get_u32(in));
    Param& p = net.mutable_param(name);
    const std::uint32_t ndim = get_u32(in);
    std::vector<int> shape;
    for (std::uint32_t k = 0; k < ndim; ++k) shape.push_back(static_cast<int>(get_u32(in)));
    if (shape != p.shape) fail(ErrorCode::kFormatError, "shape mismatch for " + name);
    for (double& v : p.value) v = std::bit_cast<float>(get_u32(in));
  }
  net.set_trainable(trainable);
  return net;
}

}  // namespace svj
