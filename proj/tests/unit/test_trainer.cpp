#include <doctest.h>

#include <cmath>
#include <functional>

#include "helpers.hpp"
#include "svj/error.hpp"
#include "svj/synthworld.hpp"
#include "svj/trainer.hpp"

using namespace svj;

namespace {

ErrorCode code_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("expected svj::Error");
  return ErrorCode::kConfigError;
}

const VideoShape kShape{6, 2, 4, 4};
constexpr int kAspects = 5;

struct World {
  std::vector<LatentVideo> real, generated, heldout_real;
  std::vector<CorpusItem> items;
};

const World& world() {
  static const World w = [] {
    World out;
    CorpusConfig cc;
    cc.shape = kShape;
    cc.num_aspects = kAspects;
    out.items = gen_corpus(48, 32, cc, 1);
    for (const auto& it : out.items) {
      (is_real_style(it.truth.knobs) ? out.real : out.generated).push_back(it.video);
    }
    out.heldout_real = videos_of(gen_corpus(16, 0, cc, 2));
    return out;
  }();
  return w;
}

JudgeNet adapted_net(std::uint64_t seed = 3) {
  JudgeNet net(test::tiny_config(), seed);
  net.set_placement({4, 4.0, Placement::kLastThird}, seed + 1);
  return net;
}

TrainConfig stage1(int steps) {
  TrainConfig c = default_train_config(Stage::kDiscriminative);
  c.steps = steps;
  c.batch_size = 4;
  c.learning_rate = 0.05;
  c.truncation.min_seconds = 1.0;
  c.truncation.max_seconds = 4.0;
  c.seed = 11;
  return c;
}

double l2(std::span<const double> g) {
  double s = 0.0;
  for (double x : g) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST_CASE("stage defaults and config validation") {
  CHECK(default_train_config(Stage::kDiscriminative).truncation.probability == 0.25);
  CHECK(default_train_config(Stage::kAspectRegression).truncation.probability == 0.0);
  CHECK(default_train_config(Stage::kPreference).truncation.probability == 0.2);
  CHECK(default_train_config(Stage::kDiscriminative).beta == 0.2);
  CHECK(default_train_config(Stage::kDiscriminative).optimizer == OptimizerKind::kSgd);
  auto c = stage1(1);
  c.batch_size = 0;
  CHECK(code_of([&] { check_train_config(c); }) == ErrorCode::kConfigError);
  c = stage1(1);
  c.learning_rate = -1.0;
  CHECK(code_of([&] { check_train_config(c); }) == ErrorCode::kConfigError);
  c = stage1(-1);
  CHECK(code_of([&] { check_train_config(c); }) == ErrorCode::kConfigError);
  c = stage1(1);
  c.gamma = 0.0;
  CHECK(code_of([&] { check_train_config(c); }) == ErrorCode::kConfigError);
  CHECK(optimizer_from_string("adam") == OptimizerKind::kAdam);
  CHECK(preference_loss_from_string(to_string(PreferenceLoss::kBTT)) == PreferenceLoss::kBTT);
  CHECK(preference_label_from_string("tie") == PreferenceLabel::kTie);
  CHECK(mirror(PreferenceLabel::kFirstPreferred) == PreferenceLabel::kSecondPreferred);
}

TEST_CASE("stage 1 preconditions") {
  JudgeNet bare(test::tiny_config());
  CHECK(code_of([&] { train_discriminative(bare, world().real, world().generated, stage1(1)); }) ==
        ErrorCode::kConfigError);
  JudgeNet net = adapted_net();
  CHECK(code_of([&] { train_discriminative(net, {}, world().generated, stage1(1)); }) ==
        ErrorCode::kEmptyCorpus);
  CHECK(code_of([&] { train_discriminative(net, world().real, {}, stage1(1)); }) ==
        ErrorCode::kEmptyCorpus);
  auto c = stage1(1);
  c.sampling_table = single_kind_table(PerturbationKind::kFrameDrop);
  CHECK_NOTHROW(train_discriminative(net, world().real, {}, c));
}

TEST_CASE("zero learning rate leaves every stage's parameters bit-equal") {
  JudgeNet net = adapted_net();
  const auto before = net.checksum(kAllGroups);
  auto c = stage1(3);
  c.learning_rate = 0.0;
  const auto log = train_discriminative(net, world().real, world().generated, c);
  CHECK(log.records.size() == 3);
  CHECK(net.checksum(kAllGroups) == before);

  auto c2 = default_train_config(Stage::kAspectRegression);
  c2.steps = 3;
  c2.learning_rate = 0.0;
  train_aspects(net, labeled_of(world().items), {}, c2);
  CHECK(net.checksum(kAllGroups) == before);

  auto c3 = default_train_config(Stage::kPreference);
  c3.steps = 0;
  const auto pairs = materialize(world().items, sample_pairs(world().items, 20, 0.1, 4));
  train_preference(net, pairs, c3);
  CHECK(net.checksum(kAllGroups) == before);
}

TEST_CASE("stage 1 trains only adapters and the energy head") {
  JudgeNet net = adapted_net();
  const GroupMask frozen = ParamGroup::kBackbone | ParamGroup::kPredictionHead |
                           ParamGroup::kAspectHead | ParamGroup::kRewardHead;
  const auto frozen_before = net.checksum(frozen);
  const auto adapters_before = net.checksum(mask_of(ParamGroup::kAdapter));
  train_discriminative(net, world().real, world().generated, stage1(5));
  CHECK(net.checksum(frozen) == frozen_before);
  CHECK(net.checksum(mask_of(ParamGroup::kAdapter)) != adapters_before);
  CHECK(net.trainable_groups() == (ParamGroup::kAdapter | ParamGroup::kEnergyHead));
}

TEST_CASE("seeded runs are identical") {
  JudgeNet a = adapted_net(), b = adapted_net();
  const auto la = train_discriminative(a, world().real, world().generated, stage1(8));
  const auto lb = train_discriminative(b, world().real, world().generated, stage1(8));
  CHECK(la.to_csv(false) == lb.to_csv(false));
  CHECK(a.checksum(kAllGroups) == b.checksum(kAllGroups));
  for (const auto& r : la.records) {
    CHECK(std::isfinite(r.loss));
    CHECK(std::isfinite(r.grad_norm));
  }
  CHECK(la.to_csv(false).rfind("step,loss,grad_norm,ms\n", 0) == 0);

  auto c2 = default_train_config(Stage::kAspectRegression);
  c2.steps = 6;
  c2.batch_size = 4;
  c2.seed = 5;
  const auto items = labeled_of(world().items);
  CHECK(train_aspects(a, items, {}, c2).to_csv(false) == train_aspects(b, items, {}, c2).to_csv(false));
  CHECK(a.checksum(kAllGroups) == b.checksum(kAllGroups));
}

TEST_CASE("logged gradient norm matches an independent recomputation") {
  const int k = 4;
  const auto cfg = stage1(k);
  JudgeNet ref = adapted_net();
  train_discriminative(ref, world().real, world().generated, cfg);
  // Batch k as the trainer would draw it, on the parameters after k steps.
  const double sigma = cfg.noise_sigma_fraction * latent_std(world().real);
  const auto batch = draw_contrast_batch(world().real, world().generated, cfg, k, sigma);
  const auto bg = contrast_batch_gradient(ref, batch, {cfg.beta});
  const double independent = l2(ref.flatten_gradients(bg.grads));

  JudgeNet run = adapted_net();
  const auto log = train_discriminative(run, world().real, world().generated, stage1(k + 1));
  REQUIRE(log.records.size() == static_cast<std::size_t>(k + 1));
  const double logged = log.records[static_cast<std::size_t>(k)].grad_norm;
  CHECK(std::abs(logged - independent) <= 1e-6 * independent);
  CHECK(gradient_norm(ref, bg.grads) == doctest::Approx(independent).epsilon(1e-12));
}

TEST_CASE("contrast batches follow the table and share truncation windows") {
  auto c = stage1(1);
  c.truncation.probability = 1.0;
  c.sampling_table = single_kind_table(PerturbationKind::kNoisySegment);
  for (int step = 0; step < 10; ++step) {
    const auto batch = draw_contrast_batch(world().real, world().generated, c, step, 0.3);
    REQUIRE(batch.positives.size() == 4);
    for (std::size_t i = 0; i < batch.positives.size(); ++i) {
      CHECK(batch.positives[i].frames() == batch.negatives[i].frames());
      CHECK(batch.positives[i].frames() <= kShape.frames);
      CHECK_FALSE(batch.choices[i].generated);
      CHECK(batch.negatives[i].meta().source_kind == SourceKind::kPerturbed);
      CHECK(batch.positives[i].meta().source_kind == SourceKind::kReal);
    }
  }
  c.sampling_table = generated_only_table();
  c.truncation.probability = 0.0;
  const auto gen = draw_contrast_batch(world().real, world().generated, c, 0, 0.3);
  for (std::size_t i = 0; i < gen.negatives.size(); ++i) {
    CHECK(gen.choices[i].generated);
    CHECK(gen.negatives[i].meta().source_kind == SourceKind::kGenerated);
  }
  const auto again = draw_contrast_batch(world().real, world().generated, c, 0, 0.3);
  CHECK(again.negatives == gen.negatives);
}

TEST_CASE("trained energy separates real from perturbed clips") {
  JudgeNet net = adapted_net(6);
  auto c = stage1(400);
  train_discriminative(net, world().real, world().generated, c);
  Rng rng(7);
  double real = 0.0, pert = 0.0;
  const double sigma = c.noise_sigma_fraction * latent_std(world().real);
  int n = 0;
  for (const auto& v : world().heldout_real) {
    for (PerturbationKind kind : kAllPerturbations) {
      SpecSamplingConfig sc;
      sc.sigma = sigma;
      const auto spec = sample_spec(kind, v.frames(), kShape.height, kShape.width, rng, sc);
      pert += net.forward_energy(apply_perturbation(v, spec)).aggregate;
      real += net.forward_energy(v).aggregate;
      ++n;
    }
  }
  MESSAGE("mean energy real " << real / n << " perturbed " << pert / n);
  CHECK(real / n < pert / n);
}

TEST_CASE("decay study trains a copy on one perturbation kind") {
  const JudgeNet net = adapted_net(8);
  const auto before = net.checksum(kAllGroups);
  DecayConfig dc;
  dc.max_steps = 30;
  dc.epsilon = 0.0;
  auto c = stage1(0);
  const auto a = measure_perturbation_decay(net, world().real, PerturbationKind::kPatchSwap, c, dc);
  const auto b = measure_perturbation_decay(net, world().real, PerturbationKind::kPatchSwap, c, dc);
  CHECK(net.checksum(kAllGroups) == before);
  CHECK(a.kind == PerturbationKind::kPatchSwap);
  CHECK(a.grad_norms.size() == 30);
  CHECK_FALSE(a.tau.has_value());
  CHECK(a.grad_norms == b.grad_norms);
  for (double g : a.grad_norms) CHECK((std::isfinite(g) && g > 0.0));
  const auto other = measure_perturbation_decay(net, world().real, PerturbationKind::kFrameDrop, c, dc);
  CHECK(other.grad_norms != a.grad_norms);
}

TEST_CASE("constant aspect targets are learned") {
  JudgeNet net(test::tiny_config(), 9);
  std::vector<LabeledVideo> train, val;
  for (std::size_t i = 0; i < world().items.size(); ++i) {
    LabeledVideo lv{world().items[i].video, AspectScores{std::vector<double>(kAspects, 3.5)}};
    (i % 4 == 0 ? val : train).push_back(lv);
  }
  auto c = default_train_config(Stage::kAspectRegression);
  c.steps = 600;
  c.batch_size = 4;
  c.learning_rate = 0.05;
  const auto log = train_aspects(net, train, val, c);
  MESSAGE("constant-target validation MSE " << log.final_validation_mse);
  CHECK(log.final_validation_mse < 1e-3);
  CHECK(net.trainable_groups() == mask_of(ParamGroup::kAspectHead));
  CHECK(std::isnan(train_aspects(net, train, {}, c).final_validation_mse));
  std::vector<LabeledVideo> bad = {LabeledVideo{train[0].video, AspectScores{{1.0}}}};
  CHECK(code_of([&] { train_aspects(net, bad, {}, c); }) == ErrorCode::kLengthMismatch);
}

TEST_CASE("stage 2 beats the mean predictor and keeps the backbone frozen") {
  JudgeNet net = adapted_net(10);
  const auto backbone = net.checksum(mask_of(ParamGroup::kBackbone));
  const auto all = labeled_of(world().items);
  std::vector<LabeledVideo> train(all.begin(), all.begin() + 60), val(all.begin() + 60, all.end());
  auto c = default_train_config(Stage::kAspectRegression);
  c.steps = 300;
  c.batch_size = 4;
  c.learning_rate = 0.02;
  const auto log = train_aspects(net, train, val, c);
  const double baseline = mean_predictor_mse(train, val);
  MESSAGE("validation MSE " << log.final_validation_mse << " vs mean predictor " << baseline);
  CHECK(log.final_validation_mse < baseline);
  CHECK(net.checksum(mask_of(ParamGroup::kBackbone)) == backbone);
}

TEST_CASE("stage 3 on separable pairs") {
  JudgeNet net = adapted_net(12);
  const auto all = labeled_of(world().items);
  auto c2 = default_train_config(Stage::kAspectRegression);
  c2.steps = 300;
  c2.batch_size = 4;
  c2.learning_rate = 0.02;
  train_aspects(net, all, {}, c2);
  const auto aspect_head = net.checksum(mask_of(ParamGroup::kAspectHead));
  const auto backbone = net.checksum(ParamGroup::kBackbone | ParamGroup::kAdapter);

  // Keep pairs whose quality gap is large so the first clip is strictly better.
  std::vector<PreferencePair> pairs;
  const auto idx = sample_pairs(world().items, 400, 0.0, 13);
  for (const auto& p : idx) {
    const auto& a = world().items[p.first];
    const auto& b = world().items[p.second];
    if (a.truth.quality - b.truth.quality > 0.5) pairs.push_back({a.video, b.video, PreferenceLabel::kFirstPreferred});
    if (pairs.size() == 60) break;
  }
  REQUIRE(pairs.size() >= 30);
  auto c3 = default_train_config(Stage::kPreference);
  c3.steps = 600;
  c3.batch_size = 4;
  c3.learning_rate = 0.05;

  // Default mode moves only the reward head.
  JudgeNet head_only = net;
  c3.steps = 50;
  train_preference(head_only, pairs, c3);
  CHECK(head_only.checksum(mask_of(ParamGroup::kAspectHead)) == aspect_head);
  CHECK(head_only.checksum(ParamGroup::kBackbone | ParamGroup::kAdapter) == backbone);

  // At convergence, with adapters unfrozen, the pairs are fitted.
  c3.steps = 600;
  c3.train_adapters = true;
  const auto log = train_preference(net, pairs, c3);
  CHECK(net.checksum(mask_of(ParamGroup::kAspectHead)) == aspect_head);
  CHECK(net.checksum(mask_of(ParamGroup::kBackbone)) ==
        head_only.checksum(mask_of(ParamGroup::kBackbone)));
  int correct = 0;
  for (const auto& p : pairs) correct += net.forward_reward(p.first) > net.forward_reward(p.second);
  const double acc = static_cast<double>(correct) / static_cast<double>(pairs.size());
  MESSAGE("separable training accuracy " << acc);
  CHECK(acc > 0.95);
  CHECK(log.losses().back() < log.losses().front());
}

TEST_CASE("mirrored pairs give the same BT trajectory") {
  JudgeNet base = adapted_net(14);
  const auto idx = sample_pairs(world().items, 40, 0.1, 15);
  const auto pairs = materialize(world().items, idx);
  std::vector<PreferencePair> mirrored;
  for (const auto& p : pairs) mirrored.push_back({p.second, p.first, mirror(p.label)});
  auto c = default_train_config(Stage::kPreference);
  c.steps = 20;
  c.batch_size = 4;
  c.seed = 16;
  for (PreferenceLoss loss : {PreferenceLoss::kBT, PreferenceLoss::kBTT}) {
    c.preference_loss = loss;
    JudgeNet a = base, b = base;
    const auto la = train_preference(a, pairs, c);
    const auto lb = train_preference(b, mirrored, c);
    if (loss == PreferenceLoss::kBT) CHECK(la.losses() == lb.losses());
    CHECK(la.records.size() == 20);
  }
  // Ties carry no BT signal; they are dropped.
  std::vector<PreferencePair> ties = {{pairs[0].first, pairs[0].second, PreferenceLabel::kTie}};
  c.preference_loss = PreferenceLoss::kBT;
  CHECK(code_of([&] { train_preference(base, ties, c); }) == ErrorCode::kNoPairs);
  c.preference_loss = PreferenceLoss::kBTT;
  CHECK_NOTHROW(train_preference(base, ties, c));
  // Labels are never rewritten by augmentation.
  CHECK(pairs[0].label == idx[0].label);
}

TEST_CASE("optional adapter training in stage 3") {
  JudgeNet net = adapted_net(17);
  const auto pairs = materialize(world().items, sample_pairs(world().items, 20, 0.1, 18));
  auto c = default_train_config(Stage::kPreference);
  c.steps = 3;
  c.batch_size = 2;
  c.train_adapters = true;
  test::randomize_adapters(net, 19, 0.05);
  const auto adapters = net.checksum(mask_of(ParamGroup::kAdapter));
  const auto aspect = net.checksum(mask_of(ParamGroup::kAspectHead));
  train_preference(net, pairs, c);
  CHECK(net.checksum(mask_of(ParamGroup::kAdapter)) != adapters);
  CHECK(net.checksum(mask_of(ParamGroup::kAspectHead)) == aspect);
}

TEST_CASE("Adam only touches the trainable set") {
  JudgeNet net = adapted_net(20);
  auto c = stage1(4);
  c.optimizer = OptimizerKind::kAdam;
  c.learning_rate = 1e-3;
  const auto frozen = net.checksum(ParamGroup::kBackbone | ParamGroup::kAspectHead);
  train_discriminative(net, world().real, world().generated, c);
  CHECK(net.checksum(ParamGroup::kBackbone | ParamGroup::kAspectHead) == frozen);
}
