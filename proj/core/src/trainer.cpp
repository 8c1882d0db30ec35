#include "svj/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "svj/error.hpp"
#include "svj/parallel.hpp"
#include "svj/rng.hpp"

namespace svj {
namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

// Sums per-item buffers in index order so the result is independent of how
// items were scheduled.
void reduce_into(Gradients& total, const std::vector<Gradients>& items) {
  for (const Gradients& g : items) {
    for (std::size_t p = 0; p < total.size(); ++p) {
      if (total[p].empty() || g[p].empty()) continue;
      for (std::size_t i = 0; i < total[p].size(); ++i) total[p][i] += g[p][i];
    }
  }
}

void check_finite_step(double loss, double norm, int step) {
  if (!std::isfinite(loss) || !std::isfinite(norm)) {
    fail(ErrorCode::kTrainingDiverged,
         "non-finite loss or gradient at step " + std::to_string(step));
  }
}

std::uint64_t step_seed(std::uint64_t seed, int step) {
  return derive_seed(seed, static_cast<std::uint64_t>(step));
}

// Window for a pair of clips; dropped when it does not fit the second clip.
std::optional<FrameWindow> fit(const std::optional<FrameWindow>& w, int frames) {
  if (w && w->start + w->count <= frames) return w;
  return std::nullopt;
}

}  // namespace

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kDiscriminative: return "discriminative";
    case Stage::kAspectRegression: return "aspects";
    case Stage::kPreference: return "preference";
  }
  return "discriminative";
}

std::string to_string(OptimizerKind kind) {
  return kind == OptimizerKind::kAdam ? "adam" : "sgd";
}

std::string to_string(PreferenceLoss loss) {
  return loss == PreferenceLoss::kBTT ? "btt" : "bt";
}

OptimizerKind optimizer_from_string(const std::string& text) {
  if (text == "sgd") return OptimizerKind::kSgd;
  if (text == "adam") return OptimizerKind::kAdam;
  fail(ErrorCode::kConfigError, "unknown optimizer: " + text);
}

PreferenceLoss preference_loss_from_string(const std::string& text) {
  if (text == "bt") return PreferenceLoss::kBT;
  if (text == "btt") return PreferenceLoss::kBTT;
  fail(ErrorCode::kConfigError, "unknown preference loss: " + text);
}

TrainConfig default_train_config(Stage stage) {
  TrainConfig cfg;
  cfg.stage = stage;
  switch (stage) {
    case Stage::kDiscriminative: cfg.truncation.probability = 0.25; break;
    case Stage::kAspectRegression: cfg.truncation.probability = 0.0; break;
    case Stage::kPreference: cfg.truncation.probability = 0.2; break;
  }
  return cfg;
}

void check_train_config(const TrainConfig& cfg) {
  auto bad = [](const std::string& m) { fail(ErrorCode::kConfigError, m); };
  if (cfg.steps < 0) bad("steps must be >= 0");
  if (cfg.batch_size < 1) bad("batch_size must be >= 1");
  if (!(cfg.learning_rate >= 0.0) || !std::isfinite(cfg.learning_rate)) {
    bad("learning_rate must be finite and >= 0");
  }
  if (!(cfg.beta >= 0.0)) bad("beta must be >= 0");
  if (!(cfg.gamma > 0.0)) bad("gamma must be > 0");
  if (cfg.truncation.probability < 0.0 || cfg.truncation.probability > 1.0) {
    bad("truncation probability must lie in [0, 1]");
  }
  if (cfg.truncation.min_seconds <= 0.0 ||
      cfg.truncation.max_seconds < cfg.truncation.min_seconds) {
    bad("truncation needs 0 < min_seconds <= max_seconds");
  }
  if (cfg.noise_sigma_fraction < 0.0) bad("noise_sigma_fraction must be >= 0");
  if (!(cfg.region_min_fraction > 0.0) || cfg.region_max_fraction > 1.0 ||
      cfg.region_min_fraction > cfg.region_max_fraction) {
    bad("region fractions need 0 < min <= max <= 1");
  }
  if (cfg.stage == Stage::kDiscriminative) {
    try {
      check_table(cfg.sampling_table);
    } catch (const Error& e) {
      bad(e.what());
    }
  }
}

// ---- TrainLog ----------------------------------------------------------------

std::vector<double> TrainLog::grad_norms() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.grad_norm);
  return out;
}

std::vector<double> TrainLog::losses() const {
  std::vector<double> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.loss);
  return out;
}

std::string TrainLog::to_csv(bool include_time) const {
  std::ostringstream out;
  out << "step,loss,grad_norm,ms\n";
  char buf[128];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.3f\n", r.step, r.loss, r.grad_norm,
                  include_time ? r.ms : 0.0);
    out << buf;
  }
  return out.str();
}

void TrainLog::write_csv(const std::filesystem::path& path, bool include_time) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIOError, "cannot write " + path.string());
  out << to_csv(include_time);
}

// ---- Optimizer ---------------------------------------------------------------

Optimizer::Optimizer(OptimizerKind kind, double learning_rate)
    : kind_(kind), lr_(learning_rate) {}

void Optimizer::step(JudgeNet& net, const Gradients& grads) {
  auto& params = net.mutable_params();
  if (grads.size() != params.size()) {
    fail(ErrorCode::kLengthMismatch, "gradient buffer does not match parameters");
  }
  ++t_;
  if (kind_ == OptimizerKind::kAdam && m_.size() != params.size()) {
    m_.assign(params.size(), {});
    v_.assign(params.size(), {});
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    if (!net.is_trainable(p) || grads[p].empty()) continue;
    auto& value = params[p].value;
    const auto& g = grads[p];
    if (kind_ == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < value.size(); ++i) value[i] -= lr_ * g[i];
      continue;
    }
    if (m_[p].size() != value.size()) {
      m_[p].assign(value.size(), 0.0);
      v_[p].assign(value.size(), 0.0);
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      m_[p][i] = b1 * m_[p][i] + (1.0 - b1) * g[i];
      v_[p][i] = b2 * v_[p][i] + (1.0 - b2) * g[i] * g[i];
      value[i] -= lr_ * (m_[p][i] / c1) / (std::sqrt(v_[p][i] / c2) + eps);
    }
  }
}

double gradient_norm(const JudgeNet& net, const Gradients& grads) {
  double sq = 0.0;
  for (std::size_t p = 0; p < grads.size(); ++p) {
    if (!net.is_trainable(p)) continue;
    for (double g : grads[p]) sq += g * g;
  }
  return std::sqrt(sq);
}

// ---- Stage 1 -----------------------------------------------------------------

ContrastBatch draw_contrast_batch(std::span<const LatentVideo> real,
                                  std::span<const LatentVideo> generated,
                                  const TrainConfig& cfg, int step, double noise_sigma) {
  if (real.empty()) fail(ErrorCode::kEmptyCorpus, "real corpus is empty");
  SpecSamplingConfig spec_cfg;
  spec_cfg.sigma = noise_sigma;
  spec_cfg.region_min_fraction = cfg.region_min_fraction;
  spec_cfg.region_max_fraction = cfg.region_max_fraction;
  spec_cfg.bidirectional_patch_swap = cfg.bidirectional_patch_swap;

  ContrastBatch batch;
  const std::uint64_t base = step_seed(cfg.seed, step);
  for (int i = 0; i < cfg.batch_size; ++i) {
    Rng rng(derive_seed(base, static_cast<std::uint64_t>(i)));
    const LatentVideo& r =
        real[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(real.size()) - 1))];
    const NegativeChoice choice = sample_negative_kind(cfg.sampling_table, rng);
    std::optional<FrameWindow> window =
        draw_truncation(r.frames(), r.meta().seconds_per_latent_frame, cfg.truncation, rng);
    const VideoShape& shape = r.shape();

    if (choice.generated) {
      if (generated.empty()) fail(ErrorCode::kEmptyCorpus, "generated corpus is empty");
      const LatentVideo& g = generated[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(generated.size()) - 1))];
      LatentVideo neg = apply_window(g, fit(window, g.frames()));
      if (cfg.sampling_table.generated_perturb_probs) {
        const PerturbationKind kind = sample_kind(*cfg.sampling_table.generated_perturb_probs, rng);
        if (neg.frames() >= min_frames_for(kind)) {
          neg = apply_perturbation(
              neg, sample_spec(kind, neg.frames(), shape.height, shape.width, rng, spec_cfg));
        }
      }
      batch.positives.push_back(apply_window(r, window));
      batch.negatives.push_back(std::move(neg));
    } else {
      if (window && window->count < min_frames_for(choice.kind)) window.reset();
      LatentVideo pos = apply_window(r, window);
      const PerturbationSpec spec =
          sample_spec(choice.kind, pos.frames(), shape.height, shape.width, rng, spec_cfg);
      batch.negatives.push_back(apply_perturbation(pos, spec));
      batch.positives.push_back(std::move(pos));
    }
    batch.choices.push_back(choice);
  }
  return batch;
}

BatchGradient contrast_batch_gradient(const JudgeNet& net, const ContrastBatch& batch,
                                      const ContrastConfig& loss_cfg) {
  const std::size_t n = batch.positives.size();
  if (n == 0 || batch.negatives.size() != n) {
    fail(ErrorCode::kEmptyBatch, "contrast batch needs matched positives and negatives");
  }
  // Items [0, n) are positives, [n, 2n) negatives.
  auto video = [&](std::size_t i) -> const LatentVideo& {
    return i < n ? batch.positives[i] : batch.negatives[i - n];
  };
  std::vector<ForwardPass> passes(2 * n);
  parallel_for(2 * n, [&](std::size_t i) { passes[i] = net.forward(video(i), kEnergyOutput); });

  std::vector<double> e_pos(n), e_neg(n);
  for (std::size_t i = 0; i < n; ++i) {
    e_pos[i] = passes[i].energy.aggregate;
    e_neg[i] = passes[n + i].energy.aggregate;
  }
  const ContrastGrad lg = contrast_loss_grad(e_pos, e_neg, loss_cfg);

  std::vector<Gradients> items(2 * n);
  parallel_for(2 * n, [&](std::size_t i) {
    const double d = i < n ? lg.d_pos[i] : lg.d_neg[i - n];
    UpstreamGrads up;
    up.d_energy_per_step = net.aggregate_grad(passes[i].frames, d);
    items[i] = net.zero_gradients();
    net.backward(passes[i], up, items[i]);
    passes[i].tape.reset();
  });

  BatchGradient out;
  out.loss = lg.loss;
  out.grads = net.zero_gradients();
  reduce_into(out.grads, items);
  out.norm = gradient_norm(net, out.grads);
  return out;
}

DiscriminativeSession::DiscriminativeSession(JudgeNet& net, std::span<const LatentVideo> real,
                                             std::span<const LatentVideo> generated,
                                             const TrainConfig& cfg)
    : net_(net),
      real_(real),
      generated_(generated),
      cfg_(cfg),
      opt_(cfg.optimizer, cfg.learning_rate),
      noise_sigma_(0.0) {
  check_train_config(cfg_);
  if (real_.empty()) fail(ErrorCode::kEmptyCorpus, "real corpus is empty");
  if (generated_.empty() && cfg_.sampling_table.generated_reserved > 0.0) {
    fail(ErrorCode::kEmptyCorpus, "generated corpus is empty but the table reserves mass for it");
  }
  if (!net_.adapter()) fail(ErrorCode::kConfigError, "discriminative training needs adapters");
  net_.set_trainable(ParamGroup::kAdapter | ParamGroup::kEnergyHead);
  noise_sigma_ = cfg_.noise_sigma_fraction * latent_std(real_);
}

StepRecord DiscriminativeSession::step() {
  const auto start = Clock::now();
  const ContrastBatch batch = draw_contrast_batch(real_, generated_, cfg_, step_, noise_sigma_);
  const BatchGradient g = contrast_batch_gradient(net_, batch, ContrastConfig{cfg_.beta});
  check_finite_step(g.loss, g.norm, step_);
  opt_.step(net_, g.grads);
  StepRecord rec{step_, g.loss, g.norm, elapsed_ms(start)};
  ++step_;
  return rec;
}

TrainLog train_discriminative(JudgeNet& net, std::span<const LatentVideo> real,
                              std::span<const LatentVideo> generated, const TrainConfig& cfg) {
  DiscriminativeSession session(net, real, generated, cfg);
  TrainLog log;
  for (int s = 0; s < cfg.steps; ++s) log.records.push_back(session.step());
  return log;
}

DecayProfile measure_perturbation_decay(const JudgeNet& net, std::span<const LatentVideo> real,
                                        PerturbationKind kind, const TrainConfig& cfg,
                                        const DecayConfig& decay) {
  JudgeNet copy = net;
  TrainConfig run = cfg;
  run.sampling_table = single_kind_table(kind);
  run.seed = derive_seed(cfg.seed, 0x5000u + static_cast<unsigned>(kind));
  DiscriminativeSession session(copy, real, {}, run);
  return measure_decay(kind, [&](int) { return session.step().grad_norm; }, decay);
}

// ---- Stage 2 -----------------------------------------------------------------

TrainLog train_aspects(JudgeNet& net, std::span<const LabeledVideo> train,
                       std::span<const LabeledVideo> validation, const TrainConfig& cfg) {
  check_train_config(cfg);
  if (train.empty()) fail(ErrorCode::kEmptyCorpus, "aspect training corpus is empty");
  const std::size_t q = static_cast<std::size_t>(net.config().num_aspects);
  for (const auto& item : train) {
    if (item.aspects.scores.size() != q) {
      fail(ErrorCode::kLengthMismatch, "aspect target length does not match the model");
    }
  }
  net.set_trainable(net.adapter() ? (ParamGroup::kAdapter | ParamGroup::kAspectHead)
                                  : mask_of(ParamGroup::kAspectHead));
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);

  TrainLog log;
  for (int s = 0; s < cfg.steps; ++s) {
    const auto start = Clock::now();
    const std::uint64_t base = step_seed(cfg.seed, s);
    std::vector<double> losses(b);
    std::vector<Gradients> items(b);
    parallel_for(b, [&](std::size_t i) {
      Rng rng(derive_seed(base, i));
      const LabeledVideo& item =
          train[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(train.size()) - 1))];
      const LatentVideo clip = truncate(item.video, cfg.truncation, rng);
      const ForwardPass pass = net.forward(clip, kAspectOutput);
      MseGrad mg = aspect_mse_grad(pass.aspects, item.aspects.scores);
      for (double& d : mg.d_pred) d /= static_cast<double>(b);
      losses[i] = mg.loss;
      items[i] = net.zero_gradients();
      UpstreamGrads up;
      up.d_aspects = std::move(mg.d_pred);
      net.backward(pass, up, items[i]);
    });
    Gradients grads = net.zero_gradients();
    reduce_into(grads, items);
    const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(b);
    const double norm = gradient_norm(net, grads);
    check_finite_step(loss, norm, s);
    opt.step(net, grads);
    log.records.push_back({s, loss, norm, elapsed_ms(start)});
  }
  log.final_validation_mse = validation.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                : evaluate_aspect_mse(net, validation);
  return log;
}

double evaluate_aspect_mse(const JudgeNet& net, std::span<const LabeledVideo> videos) {
  if (videos.empty()) fail(ErrorCode::kEmptyCorpus, "no videos to evaluate");
  std::vector<double> mse(videos.size());
  parallel_for(videos.size(), [&](std::size_t i) {
    mse[i] = aspect_mse(net.forward_aspects(videos[i].video).scores, videos[i].aspects.scores);
  });
  return std::accumulate(mse.begin(), mse.end(), 0.0) / static_cast<double>(mse.size());
}

double mean_predictor_mse(std::span<const LabeledVideo> train,
                          std::span<const LabeledVideo> validation) {
  if (train.empty() || validation.empty()) fail(ErrorCode::kEmptyCorpus, "empty corpus");
  std::vector<double> mean(train.front().aspects.scores.size(), 0.0);
  for (const auto& item : train) {
    if (item.aspects.scores.size() != mean.size()) {
      fail(ErrorCode::kLengthMismatch, "inconsistent aspect lengths");
    }
    for (std::size_t k = 0; k < mean.size(); ++k) mean[k] += item.aspects.scores[k];
  }
  for (double& m : mean) m /= static_cast<double>(train.size());
  double total = 0.0;
  for (const auto& item : validation) total += aspect_mse(mean, item.aspects.scores);
  return total / static_cast<double>(validation.size());
}

// ---- Stage 3 -----------------------------------------------------------------

std::string to_string(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::kFirstPreferred: return "first";
    case PreferenceLabel::kSecondPreferred: return "second";
    case PreferenceLabel::kTie: return "tie";
  }
  return "tie";
}

PreferenceLabel preference_label_from_string(const std::string& text) {
  if (text == "first") return PreferenceLabel::kFirstPreferred;
  if (text == "second") return PreferenceLabel::kSecondPreferred;
  if (text == "tie") return PreferenceLabel::kTie;
  fail(ErrorCode::kConfigError, "unknown preference label: " + text);
}

PreferenceLabel mirror(PreferenceLabel label) {
  switch (label) {
    case PreferenceLabel::kFirstPreferred: return PreferenceLabel::kSecondPreferred;
    case PreferenceLabel::kSecondPreferred: return PreferenceLabel::kFirstPreferred;
    case PreferenceLabel::kTie: return PreferenceLabel::kTie;
  }
  return label;
}

namespace {

struct CanonicalPair {
  const LatentVideo* preferred;
  const LatentVideo* other;
  bool tie;
};

}  // namespace

TrainLog train_preference(JudgeNet& net, std::span<const PreferencePair> pairs,
                          const TrainConfig& cfg) {
  check_train_config(cfg);
  std::vector<CanonicalPair> usable;
  for (const auto& p : pairs) {
    switch (p.label) {
      case PreferenceLabel::kFirstPreferred: usable.push_back({&p.first, &p.second, false}); break;
      case PreferenceLabel::kSecondPreferred: usable.push_back({&p.second, &p.first, false}); break;
      case PreferenceLabel::kTie:
        if (cfg.preference_loss == PreferenceLoss::kBTT) {
          usable.push_back({&p.first, &p.second, true});
        }
        break;
    }
  }
  if (usable.empty()) fail(ErrorCode::kNoPairs, "no trainable preference pairs");

  const bool adapters = cfg.train_adapters && net.adapter().has_value();
  net.set_trainable(adapters ? (ParamGroup::kRewardHead | ParamGroup::kAdapter)
                             : mask_of(ParamGroup::kRewardHead));
  Optimizer opt(cfg.optimizer, cfg.learning_rate);
  const BTTConfig btt{cfg.gamma};
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);

  TrainLog log;
  for (int s = 0; s < cfg.steps; ++s) {
    const auto start = Clock::now();
    const std::uint64_t base = step_seed(cfg.seed, s);
    std::vector<double> losses(b);
    std::vector<Gradients> items(b);
    parallel_for(b, [&](std::size_t i) {
      Rng rng(derive_seed(base, i));
      const CanonicalPair& cp = usable[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(usable.size()) - 1))];
      // One truncation decision per pair, applied to both clips.
      const auto window = draw_truncation(cp.preferred->frames(),
                                          cp.preferred->meta().seconds_per_latent_frame,
                                          cfg.truncation, rng);
      const auto shared = fit(window, cp.other->frames());
      const LatentVideo a = apply_window(*cp.preferred, shared);
      const LatentVideo o = apply_window(*cp.other, shared);
      const ForwardPass pa = net.forward(a, kAspectOutput, adapters);
      const ForwardPass po = net.forward(o, kAspectOutput, adapters);
      const double ra = net.reward_from_aspects({pa.aspects});
      const double ro = net.reward_from_aspects({po.aspects});
      PairGrad pg;
      if (cp.tie) {
        pg = btt_tie_loss_grad(ra, ro, btt);
      } else if (cfg.preference_loss == PreferenceLoss::kBTT) {
        pg = btt_loss_grad(ra, ro, btt);
      } else {
        pg = bt_loss_grad(ra, ro);
      }
      losses[i] = pg.loss;
      const double scale = 1.0 / static_cast<double>(b);
      items[i] = net.zero_gradients();
      const auto da = net.reward_backward(pa.aspects, pg.d_pos * scale, items[i]);
      const auto d_o = net.reward_backward(po.aspects, pg.d_neg * scale, items[i]);
      if (adapters) {
        net.backward(pa, UpstreamGrads{{}, da, {}}, items[i]);
        net.backward(po, UpstreamGrads{{}, d_o, {}}, items[i]);
      }
    });
    Gradients grads = net.zero_gradients();
    reduce_into(grads, items);
    const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(b);
    const double norm = gradient_norm(net, grads);
    check_finite_step(loss, norm, s);
    opt.step(net, grads);
    log.records.push_back({s, loss, norm, elapsed_ms(start)});
  }
  return log;
}

// ---- Backbone pretraining ----------------------------------------------------

namespace {

// Mean squared error of token t predicting frame t + 1, and its gradient.
double next_frame_loss(const JudgeNet& net, const LatentVideo& v, const ForwardPass& pass,
                       std::vector<double>* grad, double grad_scale) {
  const auto& c = net.config();
  const int s = c.height * c.width;
  const int frames = v.frames();
  const double count = static_cast<double>(frames - 1) * s * c.channels;
  if (grad) grad->assign(pass.prediction.size(), 0.0);
  double loss = 0.0;
  for (int t = 0; t + 1 < frames; ++t) {
    for (int h = 0; h < c.height; ++h) {
      for (int w = 0; w < c.width; ++w) {
        const std::size_t row = static_cast<std::size_t>(t * s + h * c.width + w);
        for (int ch = 0; ch < c.channels; ++ch) {
          const std::size_t k = row * static_cast<std::size_t>(c.channels) + static_cast<std::size_t>(ch);
          const double diff = pass.prediction[k] - v.at(t + 1, ch, h, w);
          loss += diff * diff;
          if (grad) (*grad)[k] = grad_scale * 2.0 * diff / count;
        }
      }
    }
  }
  return loss / count;
}

}  // namespace

double next_frame_mse(const JudgeNet& net, std::span<const LatentVideo> videos) {
  std::vector<double> mse(videos.size(), 0.0);
  std::vector<char> used(videos.size(), 0);
  parallel_for(videos.size(), [&](std::size_t i) {
    if (videos[i].frames() < 2) return;
    const ForwardPass pass = net.forward(videos[i], kPredictionOutput, false);
    mse[i] = next_frame_loss(net, videos[i], pass, nullptr, 1.0);
    used[i] = 1;
  });
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < mse.size(); ++i) {
    if (used[i]) {
      total += mse[i];
      ++n;
    }
  }
  if (n == 0) fail(ErrorCode::kEmptyCorpus, "no clips with at least two frames");
  return total / static_cast<double>(n);
}

PretrainLog pretrain_backbone(JudgeNet& net, std::span<const LatentVideo> corpus,
                              std::span<const LatentVideo> heldout, const PretrainConfig& cfg) {
  if (cfg.steps < 0 || cfg.batch_size < 1 || !(cfg.learning_rate >= 0.0)) {
    fail(ErrorCode::kConfigError, "invalid pretraining config");
  }
  PretrainLog log;
  if (cfg.steps == 0) return log;
  if (corpus.empty()) fail(ErrorCode::kEmptyCorpus, "pretraining corpus is empty");
  const GroupMask previous = net.trainable_groups();
  net.set_trainable(ParamGroup::kBackbone | ParamGroup::kPredictionHead);
  if (!heldout.empty()) log.initial_heldout_mse = next_frame_mse(net, heldout);

  Optimizer opt(cfg.adam ? OptimizerKind::kAdam : OptimizerKind::kSgd, cfg.learning_rate);
  const std::size_t b = static_cast<std::size_t>(cfg.batch_size);
  for (int s = 0; s < cfg.steps; ++s) {
    const std::uint64_t base = step_seed(cfg.seed, s);
    std::vector<double> losses(b);
    std::vector<Gradients> items(b);
    parallel_for(b, [&](std::size_t i) {
      Rng rng(derive_seed(base, i));
      const LatentVideo& v = corpus[static_cast<std::size_t>(
          uniform_int(rng, 0, static_cast<int>(corpus.size()) - 1))];
      if (v.frames() < 2) fail(ErrorCode::kShapeMismatch, "pretraining clips need >= 2 frames");
      const ForwardPass pass = net.forward(v, kPredictionOutput);
      UpstreamGrads up;
      losses[i] = next_frame_loss(net, v, pass, &up.d_prediction, 1.0 / static_cast<double>(b));
      items[i] = net.zero_gradients();
      net.backward(pass, up, items[i]);
    });
    Gradients grads = net.zero_gradients();
    reduce_into(grads, items);
    const double loss = std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(b);
    check_finite_step(loss, gradient_norm(net, grads), s);
    opt.step(net, grads);
    log.losses.push_back(loss);
  }
  if (!heldout.empty()) log.final_heldout_mse = next_frame_mse(net, heldout);
  net.set_trainable(previous);
  return log;
}

}  // namespace svj
