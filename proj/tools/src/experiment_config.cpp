#include "experiment_config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"
#include "svj/rng.hpp"

namespace svj::cli {
namespace {

using nlohmann::ordered_json;
using json = nlohmann::json;

[[noreturn]] void parse_fail(const std::string& msg) { throw ConfigParseError(msg); }

// Reads the keys it is asked for and rejects whatever is left over.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) parse_fail(path_ + ": expected an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    auto it = j_.find(key);
    seen_.insert(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      parse_fail(where(key) + ": wrong type");
    }
  }

  template <class F>
  void with(const char* key, F&& fn) {
    auto it = j_.find(key);
    seen_.insert(key);
    if (it == j_.end()) return;
    fn(*it, where(key));
  }

  template <class E, class Parse>
  void get_enum(const char* key, E& out, Parse parse) {
    std::string text;
    auto it = j_.find(key);
    if (it == j_.end()) {
      seen_.insert(key);
      return;
    }
    get(key, text);
    try {
      out = parse(text);
    } catch (const Error&) {
      parse_fail(where(key) + ": unknown value '" + text + "'");
    }
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) parse_fail(where(it.key()) + ": unknown key");
    }
  }

  std::string where(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_shape(const json& j, const std::string& path, VideoShape& s) {
  Section sec(j, path);
  sec.get("frames", s.frames);
  sec.get("channels", s.channels);
  sec.get("height", s.height);
  sec.get("width", s.width);
  sec.finish();
}

void read_knobs(const json& j, const std::string& path, KnobDistribution& d) {
  Section sec(j, path);
  sec.get("rho_min", d.rho_min);
  sec.get("rho_max", d.rho_max);
  sec.get("jitter_min", d.jitter_min);
  sec.get("jitter_max", d.jitter_max);
  sec.get("discontinuities_max", d.discontinuities_max);
  sec.get("flicker_min", d.flicker_min);
  sec.get("flicker_max", d.flicker_max);
  sec.finish();
}

void read_data(const json& j, const std::string& path, DataConfig& d) {
  Section sec(j, path);
  sec.with("shape", [&](const json& v, const std::string& p) { read_shape(v, p, d.shape); });
  sec.get("num_aspects", d.num_aspects);
  sec.get("n_real", d.n_real);
  sec.get("n_generated", d.n_generated);
  sec.get("n_heldout", d.n_heldout);
  sec.get("n_aspect_train", d.n_aspect_train);
  sec.get("n_aspect_val", d.n_aspect_val);
  sec.get("n_pref_pool", d.n_pref_pool);
  sec.get("n_pref_pairs", d.n_pref_pairs);
  sec.get("n_calib_pool", d.n_calib_pool);
  sec.get("n_calib_pairs", d.n_calib_pairs);
  sec.get("n_test_pool", d.n_test_pool);
  sec.get("n_test_pairs", d.n_test_pairs);
  sec.get("tie_margin", d.tie_margin);
  sec.with("real", [&](const json& v, const std::string& p) { read_knobs(v, p, d.real); });
  sec.with("generated",
           [&](const json& v, const std::string& p) { read_knobs(v, p, d.generated); });
  sec.with("mixed", [&](const json& v, const std::string& p) { read_knobs(v, p, d.mixed); });
  sec.finish();
}

void read_backbone(const json& j, const std::string& path, BackboneConfig& c) {
  Section sec(j, path);
  sec.get("num_layers", c.num_layers);
  sec.get("model_dim", c.model_dim);
  sec.get("num_heads", c.num_heads);
  sec.get("mlp_ratio", c.mlp_ratio);
  sec.get("channels", c.channels);
  sec.get("height", c.height);
  sec.get("width", c.width);
  sec.get("max_frames", c.max_frames);
  sec.get("energy_hidden", c.energy_hidden);
  sec.get("num_aspects", c.num_aspects);
  sec.get("aspect_hidden", c.aspect_hidden);
  sec.get_enum("aggregation", c.aggregation, aggregation_from_string);
  sec.finish();
}

void read_adapter(const json& j, const std::string& path, AdapterConfig& a) {
  Section sec(j, path);
  sec.get("rank", a.rank);
  sec.get("alpha", a.alpha);
  sec.get_enum("placement", a.placement, placement_from_string);
  sec.finish();
}

void read_pretrain(const json& j, const std::string& path, PretrainConfig& p) {
  Section sec(j, path);
  sec.get("steps", p.steps);
  sec.get("batch_size", p.batch_size);
  sec.get("learning_rate", p.learning_rate);
  sec.get("adam", p.adam);
  sec.finish();
}

void read_probs(const json& j, const std::string& path, KindProbabilities& probs) {
  Section sec(j, path);
  probs.fill(0.0);
  for (PerturbationKind k : kAllPerturbations) {
    sec.get(to_string(k).c_str(), probs[static_cast<std::size_t>(k)]);
  }
  sec.finish();
}

void read_table(const json& j, const std::string& path, NegativeSamplingTable& t) {
  Section sec(j, path);
  sec.get("generated_reserved", t.generated_reserved);
  sec.with("real_perturb_probs",
           [&](const json& v, const std::string& p) { read_probs(v, p, t.real_perturb_probs); });
  sec.with("generated_perturb_probs", [&](const json& v, const std::string& p) {
    if (v.is_null()) {
      t.generated_perturb_probs.reset();
      return;
    }
    KindProbabilities g{};
    read_probs(v, p, g);
    t.generated_perturb_probs = g;
  });
  sec.finish();
}

void read_truncation(const json& j, const std::string& path, TruncationConfig& t) {
  Section sec(j, path);
  sec.get("probability", t.probability);
  sec.get("min_seconds", t.min_seconds);
  sec.get("max_seconds", t.max_seconds);
  sec.finish();
}

void read_train(const json& j, const std::string& path, TrainConfig& c) {
  Section sec(j, path);
  sec.get("steps", c.steps);
  sec.get("batch_size", c.batch_size);
  sec.get("learning_rate", c.learning_rate);
  sec.get_enum("optimizer", c.optimizer, optimizer_from_string);
  sec.with("truncation",
           [&](const json& v, const std::string& p) { read_truncation(v, p, c.truncation); });
  if (c.stage == Stage::kDiscriminative) {
    sec.get("beta", c.beta);
    sec.get("noise_sigma_fraction", c.noise_sigma_fraction);
    sec.get("region_min_fraction", c.region_min_fraction);
    sec.get("region_max_fraction", c.region_max_fraction);
    sec.get("bidirectional_patch_swap", c.bidirectional_patch_swap);
    sec.with("sampling_table",
             [&](const json& v, const std::string& p) { read_table(v, p, c.sampling_table); });
  }
  if (c.stage == Stage::kPreference) {
    sec.get_enum("loss", c.preference_loss, preference_loss_from_string);
    sec.get("gamma", c.gamma);
    sec.get("train_adapters", c.train_adapters);
  }
  sec.finish();
}

void read_calibration(const json& j, const std::string& path, DecaySettings& d) {
  Section sec(j, path);
  sec.get("steps", d.steps);
  sec.get("epsilon", d.decay.epsilon);
  sec.get_enum("epsilon_mode", d.decay.mode, [](const std::string& s) {
    if (s == "relative") return EpsilonMode::kRelativeToPeak;
    if (s == "absolute") return EpsilonMode::kAbsolute;
    fail(ErrorCode::kConfigError, s);
  });
  sec.get("smoothing_window", d.decay.smoothing_window);
  sec.get("generated_reserved", d.generated_reserved);
  sec.get_enum("weight_rule", d.rule, [](const std::string& s) {
    if (s == "decay_time") return WeightRule::kDecayTime;
    if (s == "inverse_grad_norm") return WeightRule::kInverseGradNorm;
    fail(ErrorCode::kConfigError, s);
  });
  sec.finish();
  d.decay.max_steps = d.steps;
}

void read_eval(const json& j, const std::string& path, EvalSettings& e) {
  Section sec(j, path);
  sec.with("delta", [&](const json& v, const std::string& p) {
    if (v.is_null()) {
      e.delta.reset();
    } else if (v.is_number()) {
      e.delta = v.get<double>();
    } else {
      parse_fail(p + ": expected a number or null");
    }
  });
  sec.finish();
}

ordered_json shape_json(const VideoShape& s) {
  return {{"frames", s.frames}, {"channels", s.channels}, {"height", s.height},
          {"width", s.width}};
}

ordered_json knobs_json(const KnobDistribution& d) {
  return {{"rho_min", d.rho_min},         {"rho_max", d.rho_max},
          {"jitter_min", d.jitter_min},   {"jitter_max", d.jitter_max},
          {"discontinuities_max", d.discontinuities_max},
          {"flicker_min", d.flicker_min}, {"flicker_max", d.flicker_max}};
}

ordered_json probs_json(const KindProbabilities& p) {
  ordered_json j;
  for (PerturbationKind k : kAllPerturbations) j[to_string(k)] = p[static_cast<std::size_t>(k)];
  return j;
}

ordered_json train_json(const TrainConfig& c) {
  ordered_json j;
  j["steps"] = c.steps;
  j["batch_size"] = c.batch_size;
  j["learning_rate"] = c.learning_rate;
  j["optimizer"] = to_string(c.optimizer);
  j["truncation"] = {{"probability", c.truncation.probability},
                     {"min_seconds", c.truncation.min_seconds},
                     {"max_seconds", c.truncation.max_seconds}};
  if (c.stage == Stage::kDiscriminative) {
    j["beta"] = c.beta;
    j["noise_sigma_fraction"] = c.noise_sigma_fraction;
    j["region_min_fraction"] = c.region_min_fraction;
    j["region_max_fraction"] = c.region_max_fraction;
    j["bidirectional_patch_swap"] = c.bidirectional_patch_swap;
    ordered_json t;
    t["generated_reserved"] = c.sampling_table.generated_reserved;
    t["real_perturb_probs"] = probs_json(c.sampling_table.real_perturb_probs);
    t["generated_perturb_probs"] = c.sampling_table.generated_perturb_probs
                                       ? probs_json(*c.sampling_table.generated_perturb_probs)
                                       : ordered_json(nullptr);
    j["sampling_table"] = t;
  }
  if (c.stage == Stage::kPreference) {
    j["loss"] = to_string(c.preference_loss);
    j["gamma"] = c.gamma;
    j["train_adapters"] = c.train_adapters;
  }
  return j;
}

void require(bool ok, const std::string& msg) {
  if (!ok) parse_fail(msg);
}

// Range checks that need the whole config; module checks are reused so the
// rules live in one place.
void validate(const ExperimentConfig& c) {
  auto module_check = [](const char* what, auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      parse_fail(std::string(what) + ": " + e.what());
    }
  };
  const DataConfig& d = c.data;
  require(d.shape.frames >= 1 && d.shape.channels >= 1 && d.shape.height >= 1 &&
              d.shape.width >= 1,
          "data.shape: every dimension must be >= 1");
  for (int n : {d.n_real, d.n_generated, d.n_heldout, d.n_aspect_train, d.n_aspect_val,
                d.n_pref_pool, d.n_pref_pairs, d.n_calib_pool, d.n_calib_pairs, d.n_test_pool,
                d.n_test_pairs}) {
    require(n >= 0, "data: counts must be >= 0");
  }
  require(d.tie_margin >= 0.0, "data.tie_margin must be >= 0");
  require(d.num_aspects == c.backbone.num_aspects,
          "data.num_aspects must equal backbone.num_aspects");
  require(d.shape.channels == c.backbone.channels && d.shape.height == c.backbone.height &&
              d.shape.width == c.backbone.width,
          "data.shape must match the backbone's channels, height and width");
  require(d.shape.frames <= c.backbone.max_frames, "data.shape.frames exceeds backbone.max_frames");
  module_check("data.real", [&] { check_distribution(d.real); });
  module_check("data.generated", [&] { check_distribution(d.generated); });
  module_check("data.mixed", [&] { check_distribution(d.mixed); });
  module_check("backbone", [&] { check_config(c.backbone); });
  require(c.adapter.rank >= 1, "adapter.rank must be >= 1");
  require(c.pretrain.steps >= 0 && c.pretrain.batch_size >= 1 && c.pretrain.learning_rate >= 0.0,
          "pretrain: need steps >= 0, batch_size >= 1, learning_rate >= 0");
  module_check("discriminative", [&] { check_train_config(c.discriminative); });
  module_check("aspects", [&] { check_train_config(c.aspects); });
  module_check("preference", [&] { check_train_config(c.preference); });
  require(c.calibration.steps >= 1, "calibration.steps must be >= 1");
  require(c.calibration.decay.epsilon >= 0.0, "calibration.epsilon must be >= 0");
  require(c.calibration.decay.smoothing_window >= 1, "calibration.smoothing_window must be >= 1");
  require(c.calibration.generated_reserved >= 0.0 && c.calibration.generated_reserved < 1.0,
          "calibration.generated_reserved must lie in [0, 1)");
  require(!c.eval.delta || *c.eval.delta >= 0.0, "eval.delta must be >= 0");
}

}  // namespace

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.backbone.num_layers = 6;
  c.backbone.model_dim = 16;
  c.backbone.num_heads = 2;
  c.backbone.mlp_ratio = 2;
  c.backbone.max_frames = 9;
  c.backbone.energy_hidden = 16;
  c.backbone.aspect_hidden = 32;
  c.adapter = AdapterConfig{4, 4.0, Placement::kLastThird};

  c.pretrain.steps = 300;
  c.pretrain.batch_size = 8;
  c.pretrain.learning_rate = 3e-3;
  c.pretrain.adam = true;

  c.discriminative = default_train_config(Stage::kDiscriminative);
  c.discriminative.steps = 1000;
  c.discriminative.batch_size = 8;
  c.discriminative.optimizer = OptimizerKind::kSgd;
  c.discriminative.learning_rate = 0.15;

  c.aspects = default_train_config(Stage::kAspectRegression);
  c.aspects.steps = 1200;
  c.aspects.batch_size = 8;
  c.aspects.optimizer = OptimizerKind::kAdam;
  c.aspects.learning_rate = 3e-3;

  c.preference = default_train_config(Stage::kPreference);
  c.preference.steps = 400;
  c.preference.batch_size = 16;
  c.preference.optimizer = OptimizerKind::kAdam;
  c.preference.learning_rate = 1e-2;

  c.calibration.steps = 200;
  c.calibration.decay.max_steps = 200;
  return c;
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    parse_fail(std::string("config is not valid JSON: ") + e.what());
  }
  ExperimentConfig c = desk_config();
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("out_dir", c.out_dir);
  root.with("data", [&](const json& v, const std::string& p) { read_data(v, p, c.data); });
  root.with("backbone",
            [&](const json& v, const std::string& p) { read_backbone(v, p, c.backbone); });
  root.with("adapter", [&](const json& v, const std::string& p) { read_adapter(v, p, c.adapter); });
  root.with("pretrain",
            [&](const json& v, const std::string& p) { read_pretrain(v, p, c.pretrain); });
  root.with("discriminative",
            [&](const json& v, const std::string& p) { read_train(v, p, c.discriminative); });
  root.with("calibration",
            [&](const json& v, const std::string& p) { read_calibration(v, p, c.calibration); });
  root.with("aspects", [&](const json& v, const std::string& p) { read_train(v, p, c.aspects); });
  root.with("preference",
            [&](const json& v, const std::string& p) { read_train(v, p, c.preference); });
  root.with("eval", [&](const json& v, const std::string& p) { read_eval(v, p, c.eval); });
  root.finish();
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) parse_fail("cannot read config " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return config_from_json(text.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  ordered_json j;
  j["seed"] = c.seed;
  const DataConfig& d = c.data;
  j["data"] = {{"shape", shape_json(d.shape)},
               {"num_aspects", d.num_aspects},
               {"n_real", d.n_real},
               {"n_generated", d.n_generated},
               {"n_heldout", d.n_heldout},
               {"n_aspect_train", d.n_aspect_train},
               {"n_aspect_val", d.n_aspect_val},
               {"n_pref_pool", d.n_pref_pool},
               {"n_pref_pairs", d.n_pref_pairs},
               {"n_calib_pool", d.n_calib_pool},
               {"n_calib_pairs", d.n_calib_pairs},
               {"n_test_pool", d.n_test_pool},
               {"n_test_pairs", d.n_test_pairs},
               {"tie_margin", d.tie_margin},
               {"real", knobs_json(d.real)},
               {"generated", knobs_json(d.generated)},
               {"mixed", knobs_json(d.mixed)}};
  const BackboneConfig& b = c.backbone;
  j["backbone"] = {{"num_layers", b.num_layers},       {"model_dim", b.model_dim},
                   {"num_heads", b.num_heads},         {"mlp_ratio", b.mlp_ratio},
                   {"channels", b.channels},           {"height", b.height},
                   {"width", b.width},                 {"max_frames", b.max_frames},
                   {"energy_hidden", b.energy_hidden}, {"num_aspects", b.num_aspects},
                   {"aspect_hidden", b.aspect_hidden}, {"aggregation", to_string(b.aggregation)}};
  j["adapter"] = {{"rank", c.adapter.rank},
                  {"alpha", c.adapter.alpha},
                  {"placement", to_string(c.adapter.placement)}};
  j["pretrain"] = {{"steps", c.pretrain.steps},
                   {"batch_size", c.pretrain.batch_size},
                   {"learning_rate", c.pretrain.learning_rate},
                   {"adam", c.pretrain.adam}};
  j["discriminative"] = train_json(c.discriminative);
  j["calibration"] = {
      {"steps", c.calibration.steps},
      {"epsilon", c.calibration.decay.epsilon},
      {"epsilon_mode",
       c.calibration.decay.mode == EpsilonMode::kAbsolute ? "absolute" : "relative"},
      {"smoothing_window", c.calibration.decay.smoothing_window},
      {"generated_reserved", c.calibration.generated_reserved},
      {"weight_rule",
       c.calibration.rule == WeightRule::kInverseGradNorm ? "inverse_grad_norm" : "decay_time"}};
  j["aspects"] = train_json(c.aspects);
  j["preference"] = train_json(c.preference);
  j["eval"] = {{"delta", c.eval.delta ? ordered_json(*c.eval.delta) : ordered_json(nullptr)}};
  return j.dump(2) + "\n";
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const ExperimentConfig& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(config_to_json(cfg))));
  return buf;
}

std::uint64_t stage_seed(const ExperimentConfig& cfg, StageStream stream) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(stream));
}

}  // namespace svj::cli
