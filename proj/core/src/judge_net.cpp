#include "svj/judge_net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

#include "svj/error.hpp"
#include "svj/rng.hpp"

namespace svj {
namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowVec = Eigen::Matrix<double, 1, Eigen::Dynamic>;
using ColVec = Eigen::VectorXd;
using CMat = Eigen::Map<const Mat>;
using MMat = Eigen::Map<Mat>;
using CRow = Eigen::Map<const RowVec>;
using MRow = Eigen::Map<RowVec>;
using StridedC = Eigen::Map<const Mat, 0, Eigen::OuterStride<>>;
using StridedM = Eigen::Map<Mat, 0, Eigen::OuterStride<>>;

constexpr double kNormEps = 1e-6;
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)

// tanh(u) = 1 - 2 / (e^{2u} + 1), written with exp so Eigen vectorizes it.
template <typename A>
auto tanh_via_exp(const A& u) {
  return 1.0 - 2.0 / ((2.0 * u).exp() + 1.0);
}

// Tanh-approximated GELU and its derivative, elementwise.
template <typename M>
M gelu(const M& x) {
  const auto a = x.array();
  const auto t = tanh_via_exp(kGeluC * (a + 0.044715 * a.cube()));
  return (0.5 * a * (1.0 + t)).matrix();
}

template <typename M>
M gelu_grad(const M& x) {
  const auto a = x.array();
  const M t = tanh_via_exp(kGeluC * (a + 0.044715 * a.cube())).matrix();
  const auto du = kGeluC * (1.0 + 3.0 * 0.044715 * a.square());
  return (0.5 * (1.0 + t.array()) + 0.5 * a * (1.0 - t.array().square()) * du).matrix();
}

std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::uint64_t name_hash(const std::string& s) {
  return fnv1a(s.data(), s.size(), 0xCBF29CE484222325ULL);
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

struct Lin {
  int w = -1, b = -1, a = -1, bb = -1;
};

struct LayerIds {
  int norm1 = -1, norm2 = -1, norm3 = -1;
  Lin sq, sk, sv, so, tq, tk, tv, to, fc1, fc2;
};

// Rows of group g are base(g) + j * stride for j in [0, len).
struct Grouping {
  int groups;
  int len;
  int base_step;
  int stride;
  bool causal;
  int base(int g) const { return g * base_step; }
};

struct LinCache {
  Mat xa;
};

struct AttnCache {
  Mat q, k, v, ctx;
  std::vector<Mat> probs;
  LinCache lq, lk, lv, lo;
};

struct LayerCache {
  Mat x_in, n1, a, n2, b, n3, h_pre, h_act;
  ColVec rms1, rms2, rms3;
  AttnCache spatial, temporal;
  LinCache l1, l2;
};

}  // namespace

namespace detail {
struct Tape {
  int frames = 0;
  unsigned heads = 0;
  Mat input;
  std::vector<LayerCache> layers;
  Mat x_final;
  ColVec rms_final;
  Mat features;
  Mat pooled_t, e_pre, e_act;
  RowVec pooled_all, a_pre, a_act;
};
}  // namespace detail

struct JudgeNet::Layout {
  int embed_w = -1, embed_b = -1, pos_time = -1, pos_space = -1, final_norm = -1;
  int pred_w = -1, pred_b = -1;
  int e1w = -1, e1b = -1, e2w = -1, e2b = -1;
  int a1w = -1, a1b = -1, a2w = -1, a2b = -1;
  int rw = -1, rb = -1;
  std::vector<LayerIds> layers;
  double lora_scale = 0.0;
  std::map<std::string, int> by_name;
};

namespace {

// Stateless kernels over one network's parameters.
class Kernels {
 public:
  Kernels(const std::vector<Param>& params, const std::vector<bool>& trainable,
          double lora_scale)
      : params_(params), trainable_(trainable), lora_scale_(lora_scale) {}

  CMat mat(int id) const {
    const Param& p = params_[static_cast<std::size_t>(id)];
    return CMat(p.value.data(), p.shape[0], p.shape.size() > 1 ? p.shape[1] : 1);
  }
  CRow row(int id) const {
    const Param& p = params_[static_cast<std::size_t>(id)];
    return CRow(p.value.data(), static_cast<Eigen::Index>(p.value.size()));
  }
  bool trains(int id) const { return id >= 0 && trainable_[static_cast<std::size_t>(id)]; }

  MMat grad_mat(Gradients& g, int id) const {
    const Param& p = params_[static_cast<std::size_t>(id)];
    return MMat(g[static_cast<std::size_t>(id)].data(), p.shape[0],
                p.shape.size() > 1 ? p.shape[1] : 1);
  }
  MRow grad_row(Gradients& g, int id) const {
    auto& v = g[static_cast<std::size_t>(id)];
    return MRow(v.data(), static_cast<Eigen::Index>(v.size()));
  }

  Mat linear(const Mat& x, const Lin& l, LinCache* cache) const {
    Mat y = x * mat(l.w).transpose();
    y.rowwise() += row(l.b);
    if (l.a >= 0) {
      Mat xa = x * mat(l.a).transpose();
      y.noalias() += lora_scale_ * (xa * mat(l.bb).transpose());
      if (cache) cache->xa = std::move(xa);
    }
    return y;
  }

  Mat linear_backward(const Mat& dy, const Mat& x, const Lin& l, const LinCache& cache,
                      Gradients& g) const {
    if (trains(l.w)) grad_mat(g, l.w).noalias() += dy.transpose() * x;
    if (trains(l.b)) grad_row(g, l.b) += dy.colwise().sum();
    Mat dx = dy * mat(l.w);
    if (l.a >= 0) {
      const Mat dyb = dy * mat(l.bb);
      if (trains(l.a)) grad_mat(g, l.a).noalias() += lora_scale_ * (dyb.transpose() * x);
      if (trains(l.bb)) {
        grad_mat(g, l.bb).noalias() += lora_scale_ * (dy.transpose() * cache.xa);
      }
      dx.noalias() += lora_scale_ * (dyb * mat(l.a));
    }
    return dx;
  }

  Mat rmsnorm(const Mat& x, int gain, ColVec& rms) const {
    const double d = static_cast<double>(x.cols());
    rms = ((x.array().square().rowwise().sum() / d) + kNormEps).sqrt();
    Mat y = x.array().colwise() / rms.array();
    y.array().rowwise() *= row(gain).array();
    return y;
  }

  Mat rmsnorm_backward(const Mat& dy, const Mat& x, const ColVec& rms, int gain,
                       Gradients& g) const {
    const double d = static_cast<double>(x.cols());
    const Mat xhat = x.array().colwise() / rms.array();
    if (trains(gain)) grad_row(g, gain) += (dy.array() * xhat.array()).colwise().sum().matrix();
    Mat dxhat = dy.array().rowwise() * row(gain).array();
    const ColVec m = (dxhat.array() * xhat.array()).rowwise().sum() / d;
    Mat dx = dxhat - (xhat.array().colwise() * m.array()).matrix();
    dx.array().colwise() /= rms.array();
    return dx;
  }

  static void attention(const Mat& q, const Mat& k, const Mat& v, int heads,
                        const Grouping& gp, Mat& ctx, std::vector<Mat>* probs) {
    const int d = static_cast<int>(q.cols());
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    ctx.setZero(q.rows(), q.cols());
    if (probs) probs->reserve(static_cast<std::size_t>(gp.groups * heads));
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(gp.stride) * d);
    Mat s(gp.len, gp.len);
    for (int g = 0; g < gp.groups; ++g) {
      for (int h = 0; h < heads; ++h) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(gp.base(g)) * d + h * dh;
        const StridedC qg(q.data() + off, gp.len, dh, stride);
        const StridedC kg(k.data() + off, gp.len, dh, stride);
        const StridedC vg(v.data() + off, gp.len, dh, stride);
        s.noalias() = scale * (qg * kg.transpose());
        if (gp.causal) s.triangularView<Eigen::StrictlyUpper>().setConstant(-kInf);
        s.colwise() -= s.rowwise().maxCoeff();
        s.array() = s.array().exp();
        if (gp.causal) s.triangularView<Eigen::StrictlyUpper>().setZero();
        s.array().colwise() /= s.rowwise().sum().array();
        StridedM cg(ctx.data() + off, gp.len, dh, stride);
        cg.noalias() = s * vg;
        if (probs) probs->push_back(s);
      }
    }
  }

  static void attention_backward(const AttnCache& c, int heads, const Grouping& gp,
                                 const Mat& dctx, Mat& dq, Mat& dk, Mat& dv) {
    const int d = static_cast<int>(c.q.cols());
    const int dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    dq.setZero(c.q.rows(), d);
    dk.setZero(c.q.rows(), d);
    dv.setZero(c.q.rows(), d);
    const Eigen::OuterStride<> stride(static_cast<Eigen::Index>(gp.stride) * d);
    for (int g = 0; g < gp.groups; ++g) {
      for (int h = 0; h < heads; ++h) {
        const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(gp.base(g)) * d + h * dh;
        const StridedC qg(c.q.data() + off, gp.len, dh, stride);
        const StridedC kg(c.k.data() + off, gp.len, dh, stride);
        const StridedC vg(c.v.data() + off, gp.len, dh, stride);
        const StridedC dog(dctx.data() + off, gp.len, dh, stride);
        const Mat& p = c.probs[static_cast<std::size_t>(g * heads + h)];
        const Mat dp = dog * vg.transpose();
        const ColVec rs = (dp.array() * p.array()).rowwise().sum();
        const Mat ds = (p.array() * (dp.array().colwise() - rs.array())).matrix();
        StridedM(dv.data() + off, gp.len, dh, stride).noalias() = p.transpose() * dog;
        StridedM(dq.data() + off, gp.len, dh, stride).noalias() = scale * (ds * kg);
        StridedM(dk.data() + off, gp.len, dh, stride).noalias() = scale * (ds.transpose() * qg);
      }
    }
  }

 private:
  const std::vector<Param>& params_;
  const std::vector<bool>& trainable_;
  double lora_scale_;
};

}  // namespace

std::string to_string(Placement placement) {
  switch (placement) {
    case Placement::kInitialThird: return "initial";
    case Placement::kMiddleThird: return "middle";
    case Placement::kLastThird: return "last";
    case Placement::kAll: return "all";
  }
  return "last";
}

Placement placement_from_string(const std::string& text) {
  if (text == "initial") return Placement::kInitialThird;
  if (text == "middle") return Placement::kMiddleThird;
  if (text == "last") return Placement::kLastThird;
  if (text == "all") return Placement::kAll;
  fail(ErrorCode::kConfigError, "unknown placement: " + text);
}

std::string to_string(EnergyAggregation aggregation) {
  switch (aggregation) {
    case EnergyAggregation::kMean: return "mean";
    case EnergyAggregation::kSum: return "sum";
    case EnergyAggregation::kLast: return "last";
  }
  return "mean";
}

EnergyAggregation aggregation_from_string(const std::string& text) {
  if (text == "mean") return EnergyAggregation::kMean;
  if (text == "sum") return EnergyAggregation::kSum;
  if (text == "last") return EnergyAggregation::kLast;
  fail(ErrorCode::kConfigError, "unknown energy aggregation: " + text);
}

void check_config(const BackboneConfig& cfg) {
  auto bad = [](const std::string& what) { fail(ErrorCode::kConfigError, what); };
  if (cfg.num_layers < 3 || cfg.num_layers % 3 != 0) {
    bad("num_layers must be a positive multiple of 3");
  }
  if (cfg.model_dim < 1 || cfg.num_heads < 1 || cfg.model_dim % cfg.num_heads != 0) {
    bad("model_dim must be divisible by num_heads");
  }
  if (cfg.mlp_ratio < 1 || cfg.channels < 1 || cfg.height < 1 || cfg.width < 1 ||
      cfg.max_frames < 1 || cfg.energy_hidden < 1 || cfg.num_aspects < 1 ||
      cfg.aspect_hidden < 1) {
    bad("backbone dimensions must be positive");
  }
}

JudgeNet::JudgeNet(const BackboneConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
  check_config(cfg_);
  const int d = cfg_.model_dim;
  const int s = cfg_.height * cfg_.width;
  const int hidden = d * cfg_.mlp_ratio;
  add_param("embed.w", {d, cfg_.channels}, ParamGroup::kBackbone, -1);
  add_param("embed.b", {d}, ParamGroup::kBackbone, -1);
  add_param("pos.time", {cfg_.max_frames, d}, ParamGroup::kBackbone, -1);
  add_param("pos.space", {s, d}, ParamGroup::kBackbone, -1);
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    add_param(p + "norm1.g", {d}, ParamGroup::kBackbone, l);
    for (const char* m : {"q", "k", "v", "o"}) {
      add_param(p + "spatial." + m + ".w", {d, d}, ParamGroup::kBackbone, l);
      add_param(p + "spatial." + m + ".b", {d}, ParamGroup::kBackbone, l);
    }
    add_param(p + "norm2.g", {d}, ParamGroup::kBackbone, l);
    for (const char* m : {"q", "k", "v", "o"}) {
      add_param(p + "temporal." + m + ".w", {d, d}, ParamGroup::kBackbone, l);
      add_param(p + "temporal." + m + ".b", {d}, ParamGroup::kBackbone, l);
    }
    add_param(p + "norm3.g", {d}, ParamGroup::kBackbone, l);
    add_param(p + "mlp.fc1.w", {hidden, d}, ParamGroup::kBackbone, l);
    add_param(p + "mlp.fc1.b", {hidden}, ParamGroup::kBackbone, l);
    add_param(p + "mlp.fc2.w", {d, hidden}, ParamGroup::kBackbone, l);
    add_param(p + "mlp.fc2.b", {d}, ParamGroup::kBackbone, l);
  }
  add_param("final_norm.g", {d}, ParamGroup::kBackbone, -1);
  add_param("pred_head.w", {cfg_.channels, d}, ParamGroup::kPredictionHead, -1);
  add_param("pred_head.b", {cfg_.channels}, ParamGroup::kPredictionHead, -1);
  add_param("energy_head.fc1.w", {cfg_.energy_hidden, d}, ParamGroup::kEnergyHead, -1);
  add_param("energy_head.fc1.b", {cfg_.energy_hidden}, ParamGroup::kEnergyHead, -1);
  add_param("energy_head.fc2.w", {1, cfg_.energy_hidden}, ParamGroup::kEnergyHead, -1);
  add_param("energy_head.fc2.b", {1}, ParamGroup::kEnergyHead, -1);
  add_param("aspect_head.fc1.w", {cfg_.aspect_hidden, d}, ParamGroup::kAspectHead, -1);
  add_param("aspect_head.fc1.b", {cfg_.aspect_hidden}, ParamGroup::kAspectHead, -1);
  add_param("aspect_head.fc2.w", {cfg_.num_aspects, cfg_.aspect_hidden},
            ParamGroup::kAspectHead, -1);
  add_param("aspect_head.fc2.b", {cfg_.num_aspects}, ParamGroup::kAspectHead, -1);
  add_param("reward_head.w", {1, cfg_.num_aspects}, ParamGroup::kRewardHead, -1);
  add_param("reward_head.b", {1}, ParamGroup::kRewardHead, -1);

  for (ParamGroup g : {ParamGroup::kBackbone, ParamGroup::kPredictionHead,
                       ParamGroup::kEnergyHead, ParamGroup::kAspectHead,
                       ParamGroup::kRewardHead}) {
    init_group(g, derive_seed(seed, static_cast<unsigned>(g)));
  }
  trainable_mask_ = kAllGroups;
  build_layout();
  apply_trainable();
}

void JudgeNet::add_param(const std::string& name, std::vector<int> shape,
                         ParamGroup group, int layer) {
  std::size_t n = 1;
  for (int s : shape) n *= static_cast<std::size_t>(s);
  params_.push_back(Param{name, std::move(shape), AlignedVector(n, 0.0), group, layer});
}

void JudgeNet::init_group(ParamGroup group, std::uint64_t seed) {
  const double out_scale = 1.0 / std::sqrt(2.0 * cfg_.num_layers);
  for (Param& p : params_) {
    if (p.group != group) continue;
    Rng rng(derive_seed(seed, name_hash(p.name)));
    std::normal_distribution<double> normal(0.0, 1.0);
    const int fan_in = p.shape.size() > 1 ? p.shape[1] : 1;
    double stddev = 0.0;
    double fill = 0.0;
    if (ends_with(p.name, ".g")) {
      fill = 1.0;
    } else if (p.name == "aspect_head.fc2.b") {
      fill = 3.0;  // middle of the 1..5 scale
    } else if (p.name == "reward_head.w") {
      fill = 1.0 / cfg_.num_aspects;
    } else if (ends_with(p.name, ".b") || ends_with(p.name, "lora_b")) {
      fill = 0.0;
    } else if (p.name.rfind("pos.", 0) == 0) {
      stddev = 0.1;
    } else {
      stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
      if (ends_with(p.name, ".o.w") || ends_with(p.name, "fc2.w")) stddev *= out_scale;
    }
    for (double& v : p.value) v = stddev > 0.0 ? stddev * normal(rng) : fill;
  }
}

void JudgeNet::reinit_group(ParamGroup group, std::uint64_t seed) {
  if (group == ParamGroup::kAdapter) {
    init_adapters(seed);
    return;
  }
  init_group(group, seed);
}

void JudgeNet::init_adapters(std::uint64_t seed) { init_group(ParamGroup::kAdapter, seed); }

void JudgeNet::set_placement(const AdapterConfig& cfg, std::uint64_t seed) {
  if (cfg.rank < 1) fail(ErrorCode::kConfigError, "adapter rank must be >= 1");
  if (cfg_.num_layers % 3 != 0) fail(ErrorCode::kConfigError, "num_layers % 3 != 0");
  std::erase_if(params_, [](const Param& p) { return p.group == ParamGroup::kAdapter; });
  adapter_ = cfg;
  const int d = cfg_.model_dim;
  std::vector<Param> adapters;
  for (int l : adapted_layers()) {
    const std::string p = "layers." + std::to_string(l) + ".";
    for (const char* block : {"spatial.", "temporal."}) {
      for (const char* m : {"q", "k", "v", "o"}) {
        const std::string base = p + block + m;
        std::size_t n = static_cast<std::size_t>(cfg.rank) * d;
        adapters.push_back(Param{base + ".lora_a", {cfg.rank, d}, AlignedVector(n),
                                 ParamGroup::kAdapter, l});
        adapters.push_back(Param{base + ".lora_b", {d, cfg.rank}, AlignedVector(n),
                                 ParamGroup::kAdapter, l});
      }
    }
  }
  // Adapters sit between the backbone and the heads so flat orderings are
  // stable regardless of placement history.
  auto pos = std::find_if(params_.begin(), params_.end(),
                          [](const Param& q) { return q.group != ParamGroup::kBackbone; });
  params_.insert(pos, adapters.begin(), adapters.end());
  init_adapters(seed);
  trainable_mask_ = mask_of(ParamGroup::kAdapter);
  build_layout();
  apply_trainable();
}

std::vector<int> JudgeNet::adapted_layers() const {
  std::vector<int> layers;
  if (!adapter_) return layers;
  const int third = cfg_.num_layers / 3;
  int lo = 0, hi = cfg_.num_layers;
  switch (adapter_->placement) {
    case Placement::kInitialThird: hi = third; break;
    case Placement::kMiddleThird: lo = third; hi = 2 * third; break;
    case Placement::kLastThird: lo = 2 * third; break;
    case Placement::kAll: break;
  }
  for (int l = lo; l < hi; ++l) layers.push_back(l);
  return layers;
}

void JudgeNet::build_layout() {
  auto layout = std::make_shared<Layout>();
  for (std::size_t i = 0; i < params_.size(); ++i) {
    layout->by_name[params_[i].name] = static_cast<int>(i);
  }
  auto id = [&](const std::string& n) {
    auto it = layout->by_name.find(n);
    return it == layout->by_name.end() ? -1 : it->second;
  };
  layout->embed_w = id("embed.w");
  layout->embed_b = id("embed.b");
  layout->pos_time = id("pos.time");
  layout->pos_space = id("pos.space");
  layout->final_norm = id("final_norm.g");
  layout->pred_w = id("pred_head.w");
  layout->pred_b = id("pred_head.b");
  layout->e1w = id("energy_head.fc1.w");
  layout->e1b = id("energy_head.fc1.b");
  layout->e2w = id("energy_head.fc2.w");
  layout->e2b = id("energy_head.fc2.b");
  layout->a1w = id("aspect_head.fc1.w");
  layout->a1b = id("aspect_head.fc1.b");
  layout->a2w = id("aspect_head.fc2.w");
  layout->a2b = id("aspect_head.fc2.b");
  layout->rw = id("reward_head.w");
  layout->rb = id("reward_head.b");
  layout->lora_scale = adapter_ ? adapter_->alpha / adapter_->rank : 0.0;
  auto lin = [&](const std::string& base) {
    return Lin{id(base + ".w"), id(base + ".b"), id(base + ".lora_a"), id(base + ".lora_b")};
  };
  for (int l = 0; l < cfg_.num_layers; ++l) {
    const std::string p = "layers." + std::to_string(l) + ".";
    LayerIds ids;
    ids.norm1 = id(p + "norm1.g");
    ids.norm2 = id(p + "norm2.g");
    ids.norm3 = id(p + "norm3.g");
    ids.sq = lin(p + "spatial.q");
    ids.sk = lin(p + "spatial.k");
    ids.sv = lin(p + "spatial.v");
    ids.so = lin(p + "spatial.o");
    ids.tq = lin(p + "temporal.q");
    ids.tk = lin(p + "temporal.k");
    ids.tv = lin(p + "temporal.v");
    ids.to = lin(p + "temporal.o");
    ids.fc1 = lin(p + "mlp.fc1");
    ids.fc2 = lin(p + "mlp.fc2");
    layout->layers.push_back(ids);
  }
  layout_ = std::move(layout);
}

void JudgeNet::set_trainable(GroupMask groups) {
  trainable_mask_ = groups;
  apply_trainable();
}

void JudgeNet::apply_trainable() {
  trainable_.assign(params_.size(), false);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    trainable_[i] = (trainable_mask_ & static_cast<GroupMask>(params_[i].group)) != 0;
  }
}

const Param& JudgeNet::param(const std::string& name) const {
  return params_[param_index(name)];
}

Param& JudgeNet::mutable_param(const std::string& name) {
  return params_[param_index(name)];
}

std::size_t JudgeNet::param_index(const std::string& name) const {
  auto it = layout_->by_name.find(name);
  if (it == layout_->by_name.end()) fail(ErrorCode::kConfigError, "no parameter " + name);
  return static_cast<std::size_t>(it->second);
}

std::size_t JudgeNet::parameter_count(GroupMask groups) const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (groups & static_cast<GroupMask>(p.group)) n += p.value.size();
  }
  return n;
}

std::size_t JudgeNet::trainable_count() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (trainable_[i]) n += params_[i].value.size();
  }
  return n;
}

std::vector<double> JudgeNet::flat_trainable() const {
  std::vector<double> out;
  out.reserve(trainable_count());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (trainable_[i]) out.insert(out.end(), params_[i].value.begin(), params_[i].value.end());
  }
  return out;
}

void JudgeNet::set_flat_trainable(std::span<const double> values) {
  if (values.size() != trainable_count()) {
    fail(ErrorCode::kLengthMismatch, "flat parameter vector has wrong length");
  }
  std::size_t off = 0;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!trainable_[i]) continue;
    auto& v = params_[i].value;
    std::copy(values.begin() + static_cast<std::ptrdiff_t>(off),
              values.begin() + static_cast<std::ptrdiff_t>(off + v.size()), v.begin());
    off += v.size();
  }
}

std::vector<double> JudgeNet::flatten_gradients(const Gradients& grads) const {
  std::vector<double> out;
  out.reserve(trainable_count());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!trainable_[i]) continue;
    const auto& g = grads[i];
    if (g.empty()) {
      out.insert(out.end(), params_[i].value.size(), 0.0);
    } else {
      out.insert(out.end(), g.begin(), g.end());
    }
  }
  return out;
}

Gradients JudgeNet::zero_gradients() const {
  Gradients g(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (trainable_[i]) g[i].assign(params_[i].value.size(), 0.0);
  }
  return g;
}

std::uint64_t JudgeNet::checksum(GroupMask groups) const {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (const auto& p : params_) {
    if (!(groups & static_cast<GroupMask>(p.group))) continue;
    h = fnv1a(p.name.data(), p.name.size(), h);
    h = fnv1a(p.value.data(), p.value.size() * sizeof(double), h);
  }
  return h;
}

EnergyTrajectory JudgeNet::aggregate(std::vector<double> per_step) const {
  EnergyTrajectory e;
  double agg = 0.0;
  switch (cfg_.aggregation) {
    case EnergyAggregation::kMean:
      for (double x : per_step) agg += x;
      agg /= static_cast<double>(per_step.size());
      break;
    case EnergyAggregation::kSum:
      for (double x : per_step) agg += x;
      break;
    case EnergyAggregation::kLast:
      agg = per_step.back();
      break;
  }
  for (double x : per_step) {
    if (!std::isfinite(x)) fail(ErrorCode::kNonFinite, "non-finite energy");
  }
  e.per_step = std::move(per_step);
  e.aggregate = agg;
  return e;
}

std::vector<double> JudgeNet::aggregate_grad(int frames, double d_aggregate) const {
  std::vector<double> d(static_cast<std::size_t>(frames), 0.0);
  switch (cfg_.aggregation) {
    case EnergyAggregation::kMean:
      for (double& x : d) x = d_aggregate / frames;
      break;
    case EnergyAggregation::kSum:
      for (double& x : d) x = d_aggregate;
      break;
    case EnergyAggregation::kLast:
      d.back() = d_aggregate;
      break;
  }
  return d;
}

ForwardPass JudgeNet::forward(const LatentVideo& video, unsigned heads, bool record) const {
  validate(video, SpatialShape{cfg_.channels, cfg_.height, cfg_.width});
  const int frames = video.frames();
  if (frames > cfg_.max_frames) {
    fail(ErrorCode::kShapeMismatch, "video has " + std::to_string(frames) +
                                        " frames, model supports " +
                                        std::to_string(cfg_.max_frames));
  }
  const Layout& L = *layout_;
  const Kernels k(params_, trainable_, L.lora_scale);
  const int d = cfg_.model_dim;
  const int s = cfg_.height * cfg_.width;
  const int n = frames * s;

  auto tape = record ? std::make_shared<detail::Tape>() : nullptr;

  Mat input(n, cfg_.channels);
  for (int t = 0; t < frames; ++t) {
    for (int h = 0; h < cfg_.height; ++h) {
      for (int w = 0; w < cfg_.width; ++w) {
        for (int c = 0; c < cfg_.channels; ++c) {
          input(t * s + h * cfg_.width + w, c) = video.at(t, c, h, w);
        }
      }
    }
  }
  Mat x = input * k.mat(L.embed_w).transpose();
  x.rowwise() += k.row(L.embed_b);
  {
    const CMat pt = k.mat(L.pos_time);
    const CMat ps = k.mat(L.pos_space);
    for (int t = 0; t < frames; ++t) {
      x.middleRows(t * s, s) += ps;
      x.middleRows(t * s, s).rowwise() += pt.row(t);
    }
  }

  const Grouping spatial{frames, s, s, 1, false};
  const Grouping temporal{s, frames, 1, s, true};
  if (tape) tape->layers.resize(static_cast<std::size_t>(cfg_.num_layers));

  for (int l = 0; l < cfg_.num_layers; ++l) {
    const LayerIds& ids = L.layers[static_cast<std::size_t>(l)];
    LayerCache local;
    LayerCache& c = tape ? tape->layers[static_cast<std::size_t>(l)] : local;
    const bool keep = tape != nullptr;

    // Spatial block.
    ColVec rms1;
    Mat n1 = k.rmsnorm(x, ids.norm1, rms1);
    AttnCache& sa = c.spatial;
    sa.q = k.linear(n1, ids.sq, keep ? &sa.lq : nullptr);
    sa.k = k.linear(n1, ids.sk, keep ? &sa.lk : nullptr);
    sa.v = k.linear(n1, ids.sv, keep ? &sa.lv : nullptr);
    Kernels::attention(sa.q, sa.k, sa.v, cfg_.num_heads, spatial, sa.ctx,
                       keep ? &sa.probs : nullptr);
    Mat a = x + k.linear(sa.ctx, ids.so, keep ? &sa.lo : nullptr);

    // Temporal (causal) block.
    ColVec rms2;
    Mat n2 = k.rmsnorm(a, ids.norm2, rms2);
    AttnCache& ta = c.temporal;
    ta.q = k.linear(n2, ids.tq, keep ? &ta.lq : nullptr);
    ta.k = k.linear(n2, ids.tk, keep ? &ta.lk : nullptr);
    ta.v = k.linear(n2, ids.tv, keep ? &ta.lv : nullptr);
    Kernels::attention(ta.q, ta.k, ta.v, cfg_.num_heads, temporal, ta.ctx,
                       keep ? &ta.probs : nullptr);
    Mat b = a + k.linear(ta.ctx, ids.to, keep ? &ta.lo : nullptr);

    // Token MLP.
    ColVec rms3;
    Mat n3 = k.rmsnorm(b, ids.norm3, rms3);
    Mat h_pre = k.linear(n3, ids.fc1, keep ? &c.l1 : nullptr);
    Mat h_act = gelu(h_pre);
    Mat y = b + k.linear(h_act, ids.fc2, keep ? &c.l2 : nullptr);

    if (keep) {
      c.x_in = std::move(x);
      c.n1 = std::move(n1);
      c.rms1 = std::move(rms1);
      c.a = std::move(a);
      c.n2 = std::move(n2);
      c.rms2 = std::move(rms2);
      c.b = std::move(b);
      c.n3 = std::move(n3);
      c.rms3 = std::move(rms3);
      c.h_pre = std::move(h_pre);
      c.h_act = std::move(h_act);
    }
    x = std::move(y);
  }

  ColVec rms_final;
  Mat features = k.rmsnorm(x, L.final_norm, rms_final);

  ForwardPass pass;
  pass.frames = frames;

  if (heads & kEnergyOutput) {
    Mat pooled(frames, d);
    for (int t = 0; t < frames; ++t) {
      pooled.row(t) = features.middleRows(t * s, s).colwise().mean();
    }
    Mat e_pre = pooled * k.mat(L.e1w).transpose();
    e_pre.rowwise() += k.row(L.e1b);
    Mat e_act = gelu(e_pre);
    ColVec e = e_act * k.row(L.e2w).transpose();
    const double bias = k.row(L.e2b)(0);
    std::vector<double> per_step(static_cast<std::size_t>(frames));
    for (int t = 0; t < frames; ++t) per_step[static_cast<std::size_t>(t)] = e(t) + bias;
    pass.energy = aggregate(std::move(per_step));
    if (tape) {
      tape->pooled_t = std::move(pooled);
      tape->e_pre = std::move(e_pre);
      tape->e_act = std::move(e_act);
    }
  }

  if (heads & kAspectOutput) {
    RowVec pooled = features.colwise().mean();
    RowVec a_pre = pooled * k.mat(L.a1w).transpose() + k.row(L.a1b);
    RowVec a_act = gelu(a_pre);
    RowVec out = a_act * k.mat(L.a2w).transpose() + k.row(L.a2b);
    pass.aspects.assign(out.data(), out.data() + out.size());
    for (double v : pass.aspects) {
      if (!std::isfinite(v)) fail(ErrorCode::kNonFinite, "non-finite aspect score");
    }
    if (tape) {
      tape->pooled_all = std::move(pooled);
      tape->a_pre = std::move(a_pre);
      tape->a_act = std::move(a_act);
    }
  }

  if (heads & kPredictionOutput) {
    Mat pred = features * k.mat(L.pred_w).transpose();
    pred.rowwise() += k.row(L.pred_b);
    pass.prediction.assign(pred.data(), pred.data() + pred.size());
  }

  if (tape) {
    tape->frames = frames;
    tape->heads = heads;
    tape->input = std::move(input);
    tape->x_final = std::move(x);
    tape->rms_final = std::move(rms_final);
    tape->features = std::move(features);
    pass.tape = std::move(tape);
  }
  return pass;
}

void JudgeNet::backward(const ForwardPass& pass, const UpstreamGrads& up,
                        Gradients& grads) const {
  if (!pass.tape) fail(ErrorCode::kConfigError, "forward pass was not recorded");
  if (grads.size() != params_.size()) {
    fail(ErrorCode::kLengthMismatch, "gradient buffer does not match parameters");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (trainable_[i] && grads[i].size() != params_[i].value.size()) {
      grads[i].assign(params_[i].value.size(), 0.0);
    }
  }
  const detail::Tape& tp = *pass.tape;
  const Layout& L = *layout_;
  const Kernels k(params_, trainable_, L.lora_scale);
  const int frames = tp.frames;
  const int d = cfg_.model_dim;
  const int s = cfg_.height * cfg_.width;
  const int n = frames * s;

  // Lowest block that owns a trainable parameter; nothing below it needs a
  // backward pass.
  int floor_layer = cfg_.num_layers;
  bool stack_trains = false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!trainable_[i]) continue;
    const Param& p = params_[i];
    if (p.group != ParamGroup::kBackbone && p.group != ParamGroup::kAdapter) continue;
    stack_trains = true;
    if (p.layer >= 0) {
      floor_layer = std::min(floor_layer, p.layer);
    } else if (static_cast<int>(i) != L.final_norm) {
      floor_layer = -1;  // embeddings
    }
  }

  Mat df = Mat::Zero(n, d);

  if (!up.d_energy_per_step.empty()) {
    if (!(tp.heads & kEnergyOutput) ||
        up.d_energy_per_step.size() != static_cast<std::size_t>(frames)) {
      fail(ErrorCode::kLengthMismatch, "energy gradient does not match forward pass");
    }
    const ColVec de = Eigen::Map<const ColVec>(up.d_energy_per_step.data(), frames);
    if (k.trains(L.e2w)) k.grad_row(grads, L.e2w) += de.transpose() * tp.e_act;
    if (k.trains(L.e2b)) grads[static_cast<std::size_t>(L.e2b)][0] += de.sum();
    const Mat d_act = de * k.row(L.e2w);
    const Mat d_pre = d_act.cwiseProduct(gelu_grad(tp.e_pre));
    if (k.trains(L.e1w)) k.grad_mat(grads, L.e1w).noalias() += d_pre.transpose() * tp.pooled_t;
    if (k.trains(L.e1b)) k.grad_row(grads, L.e1b) += d_pre.colwise().sum();
    if (stack_trains) {
      const Mat d_pooled = (d_pre * k.mat(L.e1w)) / static_cast<double>(s);
      for (int t = 0; t < frames; ++t) df.middleRows(t * s, s).rowwise() += d_pooled.row(t);
    }
  }

  if (!up.d_aspects.empty()) {
    if (!(tp.heads & kAspectOutput) ||
        up.d_aspects.size() != static_cast<std::size_t>(cfg_.num_aspects)) {
      fail(ErrorCode::kLengthMismatch, "aspect gradient does not match forward pass");
    }
    const RowVec da = CRow(up.d_aspects.data(), cfg_.num_aspects);
    if (k.trains(L.a2w)) k.grad_mat(grads, L.a2w).noalias() += da.transpose() * tp.a_act;
    if (k.trains(L.a2b)) k.grad_row(grads, L.a2b) += da;
    const RowVec d_act = da * k.mat(L.a2w);
    const RowVec d_pre = d_act.cwiseProduct(gelu_grad(tp.a_pre));
    if (k.trains(L.a1w)) k.grad_mat(grads, L.a1w).noalias() += d_pre.transpose() * tp.pooled_all;
    if (k.trains(L.a1b)) k.grad_row(grads, L.a1b) += d_pre;
    if (stack_trains) {
      const RowVec d_pooled = (d_pre * k.mat(L.a1w)) / static_cast<double>(n);
      df.rowwise() += d_pooled;
    }
  }

  if (!up.d_prediction.empty()) {
    if (!(tp.heads & kPredictionOutput) ||
        up.d_prediction.size() != static_cast<std::size_t>(n) * cfg_.channels) {
      fail(ErrorCode::kLengthMismatch, "prediction gradient does not match forward pass");
    }
    const Mat dp = CMat(up.d_prediction.data(), n, cfg_.channels);
    if (k.trains(L.pred_w)) k.grad_mat(grads, L.pred_w).noalias() += dp.transpose() * tp.features;
    if (k.trains(L.pred_b)) k.grad_row(grads, L.pred_b) += dp.colwise().sum();
    if (stack_trains) df.noalias() += dp * k.mat(L.pred_w);
  }

  if (!stack_trains) return;

  Mat dx = k.rmsnorm_backward(df, tp.x_final, tp.rms_final, L.final_norm, grads);

  const Grouping spatial{frames, s, s, 1, false};
  const Grouping temporal{s, frames, 1, s, true};
  const int lowest = std::max(floor_layer, 0);
  for (int l = cfg_.num_layers - 1; l >= lowest; --l) {
    const LayerIds& ids = L.layers[static_cast<std::size_t>(l)];
    const LayerCache& c = tp.layers[static_cast<std::size_t>(l)];

    Mat d_b = dx;
    {
      const Mat d_hact = k.linear_backward(dx, c.h_act, ids.fc2, c.l2, grads);
      const Mat d_hpre = d_hact.cwiseProduct(gelu_grad(c.h_pre));
      const Mat d_n3 = k.linear_backward(d_hpre, c.n3, ids.fc1, c.l1, grads);
      d_b += k.rmsnorm_backward(d_n3, c.b, c.rms3, ids.norm3, grads);
    }
    Mat d_a = d_b;
    {
      const AttnCache& ta = c.temporal;
      const Mat d_ctx = k.linear_backward(d_b, ta.ctx, ids.to, ta.lo, grads);
      Mat dq, dk, dv;
      Kernels::attention_backward(ta, cfg_.num_heads, temporal, d_ctx, dq, dk, dv);
      Mat d_n2 = k.linear_backward(dq, c.n2, ids.tq, ta.lq, grads);
      d_n2 += k.linear_backward(dk, c.n2, ids.tk, ta.lk, grads);
      d_n2 += k.linear_backward(dv, c.n2, ids.tv, ta.lv, grads);
      d_a += k.rmsnorm_backward(d_n2, c.a, c.rms2, ids.norm2, grads);
    }
    Mat d_x = d_a;
    {
      const AttnCache& sa = c.spatial;
      const Mat d_ctx = k.linear_backward(d_a, sa.ctx, ids.so, sa.lo, grads);
      Mat dq, dk, dv;
      Kernels::attention_backward(sa, cfg_.num_heads, spatial, d_ctx, dq, dk, dv);
      Mat d_n1 = k.linear_backward(dq, c.n1, ids.sq, sa.lq, grads);
      d_n1 += k.linear_backward(dk, c.n1, ids.sk, sa.lk, grads);
      d_n1 += k.linear_backward(dv, c.n1, ids.sv, sa.lv, grads);
      d_x += k.rmsnorm_backward(d_n1, c.x_in, c.rms1, ids.norm1, grads);
    }
    dx = std::move(d_x);
  }

  if (floor_layer < 0) {
    if (k.trains(L.embed_w)) k.grad_mat(grads, L.embed_w).noalias() += dx.transpose() * tp.input;
    if (k.trains(L.embed_b)) k.grad_row(grads, L.embed_b) += dx.colwise().sum();
    if (k.trains(L.pos_time)) {
      MMat g = k.grad_mat(grads, L.pos_time);
      for (int t = 0; t < frames; ++t) g.row(t) += dx.middleRows(t * s, s).colwise().sum();
    }
    if (k.trains(L.pos_space)) {
      MMat g = k.grad_mat(grads, L.pos_space);
      for (int t = 0; t < frames; ++t) g += dx.middleRows(t * s, s);
    }
  }
}

std::vector<double> JudgeNet::reward_backward(std::span<const double> aspects,
                                              double d_reward, Gradients& grads) const {
  const Layout& L = *layout_;
  const auto& w = params_[static_cast<std::size_t>(L.rw)].value;
  if (aspects.size() != w.size()) {
    fail(ErrorCode::kLengthMismatch, "aspect vector does not match reward head");
  }
  if (trainable_[static_cast<std::size_t>(L.rw)]) {
    auto& g = grads[static_cast<std::size_t>(L.rw)];
    if (g.size() != w.size()) g.assign(w.size(), 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) g[i] += d_reward * aspects[i];
  }
  if (trainable_[static_cast<std::size_t>(L.rb)]) {
    auto& g = grads[static_cast<std::size_t>(L.rb)];
    if (g.size() != 1) g.assign(1, 0.0);
    g[0] += d_reward;
  }
  std::vector<double> d_aspects(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) d_aspects[i] = d_reward * w[i];
  return d_aspects;
}

EnergyTrajectory JudgeNet::forward_energy(const LatentVideo& video) const {
  return forward(video, kEnergyOutput, false).energy;
}

AspectScores JudgeNet::forward_aspects(const LatentVideo& video) const {
  return AspectScores{forward(video, kAspectOutput, false).aspects};
}

double JudgeNet::reward_from_aspects(const AspectScores& aspects) const {
  const Layout& L = *layout_;
  const auto& w = params_[static_cast<std::size_t>(L.rw)].value;
  if (aspects.scores.size() != w.size()) {
    fail(ErrorCode::kLengthMismatch, "aspect vector does not match reward head");
  }
  double r = params_[static_cast<std::size_t>(L.rb)].value[0];
  for (std::size_t i = 0; i < w.size(); ++i) r += w[i] * aspects.scores[i];
  return r;
}

double JudgeNet::forward_reward(const LatentVideo& video) const {
  return reward_from_aspects(forward_aspects(video));
}

}  // namespace svj
