#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <functional>

#include "helpers.hpp"
#include "svj/error.hpp"
#include "svj/judge_net.hpp"
#include "svj/losses.hpp"
#include "svj/synthworld.hpp"

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

VideoShape shape_for(const BackboneConfig& c, int frames) {
  return {frames, c.channels, c.height, c.width};
}

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = standard_normal(rng);
  return v;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Linear probe of one head output, so d loss / d output is the fixed vector c.
struct Probe {
  unsigned head;
  std::vector<double> c;

  double loss(const JudgeNet& net, const LatentVideo& v) const {
    const auto pass = net.forward(v, head, false);
    if (head == kEnergyOutput) return dot(c, pass.energy.per_step);
    if (head == kAspectOutput) return dot(c, pass.aspects);
    return dot(c, pass.prediction);
  }

  std::vector<double> gradient(const JudgeNet& net, const LatentVideo& v) const {
    const auto pass = net.forward(v, head, true);
    UpstreamGrads up;
    if (head == kEnergyOutput) up.d_energy_per_step = c;
    if (head == kAspectOutput) up.d_aspects = c;
    if (head == kPredictionOutput) up.d_prediction = c;
    Gradients g = net.zero_gradients();
    net.backward(pass, up, g);
    return net.flatten_gradients(g);
  }
};

GradCheckReport check_probe(const JudgeNet& net, const LatentVideo& v, const Probe& probe,
                            std::size_t samples, std::uint64_t seed) {
  const auto point = net.flat_trainable();
  const auto analytic = probe.gradient(net, v);
  REQUIRE(analytic.size() == point.size());
  JudgeNet scratch = net;
  GradCheckConfig cfg;
  cfg.step = 1e-5;
  cfg.tolerance = 1e-5;
  cfg.abs_floor = 1e-6;
  cfg.samples = samples;
  cfg.seed = seed;
  return grad_check(
      [&](std::span<const double> x) {
        scratch.set_flat_trainable(x);
        return probe.loss(scratch, v);
      },
      point, analytic, cfg);
}

}  // namespace

TEST_CASE("config validation") {
  auto c = test::tiny_config();
  CHECK_NOTHROW(check_config(c));
  c.num_layers = 4;
  CHECK(code_of([&] { check_config(c); }) == ErrorCode::kConfigError);
  c = test::tiny_config();
  c.model_dim = 9;
  CHECK(code_of([&] { check_config(c); }) == ErrorCode::kConfigError);
  JudgeNet net(test::tiny_config());
  CHECK(code_of([&] { net.set_placement({0, 8.0, Placement::kLastThird}); }) ==
        ErrorCode::kConfigError);
  CHECK(placement_from_string(to_string(Placement::kMiddleThird)) == Placement::kMiddleThird);
  CHECK(aggregation_from_string(to_string(EnergyAggregation::kLast)) == EnergyAggregation::kLast);
}

TEST_CASE("input validation") {
  const JudgeNet net(test::tiny_config());
  CHECK(code_of([&] { net.forward_energy(test::random_video({3, 2, 4, 5}, 1)); }) ==
        ErrorCode::kShapeMismatch);
  CHECK(code_of([&] { net.forward_energy(test::random_video({13, 2, 4, 4}, 1)); }) ==
        ErrorCode::kShapeMismatch);
  auto data = std::vector<float>(VideoShape{3, 2, 4, 4}.size(), 0.0f);
  data[5] = INFINITY;
  CHECK(code_of([&] { net.forward_energy(LatentVideo({3, 2, 4, 4}, data, {})); }) ==
        ErrorCode::kNonFinite);
}

TEST_CASE("energy is causal over time") {
  JudgeNet net(test::tiny_config(), 3);
  net.set_placement({8, 8.0, Placement::kAll}, 4);
  test::randomize_adapters(net, 5);
  Rng rng(6);
  for (int trial = 0; trial < 10; ++trial) {
    const int frames = 7;
    const auto v = test::random_video(test::small_shape(frames), 100 + trial);
    const int t = uniform_int(rng, 0, frames - 1);
    std::vector<float> data(v.data().begin(), v.data().end());
    const std::size_t fs = v.shape().frame_size();
    for (std::size_t i = static_cast<std::size_t>(t) * fs; i < data.size(); ++i) {
      data[i] += static_cast<float>(standard_normal(rng));
    }
    const auto a = net.forward_energy(v).per_step;
    const auto b = net.forward_energy(v.with_data(data)).per_step;
    for (int s = 0; s < t; ++s) CHECK(a[static_cast<std::size_t>(s)] == b[static_cast<std::size_t>(s)]);
    CHECK(a[static_cast<std::size_t>(t)] != b[static_cast<std::size_t>(t)]);
  }
}

TEST_CASE("energy aggregate is the mean and scoring is deterministic") {
  const JudgeNet net(test::tiny_config(), 7);
  const auto v = test::random_video(test::small_shape(6), 8);
  const auto e = net.forward_energy(v);
  REQUIRE(e.per_step.size() == 6);
  double mean = 0.0;
  for (double x : e.per_step) mean += x / 6.0;
  CHECK(e.aggregate == doctest::Approx(mean).epsilon(1e-14));
  const auto again = net.forward_energy(v);
  CHECK(again.per_step == e.per_step);
  CHECK(net.forward_aspects(v).scores == net.forward_aspects(v).scores);
  CHECK(net.forward_aspects(v).scores.size() == 5);
  CHECK(JudgeNet(BackboneConfig{}).forward_aspects(test::random_video({2, 4, 8, 8}, 1))
            .scores.size() == 21);
}

TEST_CASE("other energy aggregations") {
  auto c = test::tiny_config();
  c.aggregation = EnergyAggregation::kSum;
  const auto v = test::random_video(test::small_shape(4), 9);
  const auto sum = JudgeNet(c, 1).forward_energy(v);
  double s = 0.0;
  for (double x : sum.per_step) s += x;
  CHECK(sum.aggregate == doctest::Approx(s));
  c.aggregation = EnergyAggregation::kLast;
  const auto last = JudgeNet(c, 1).forward_energy(v);
  CHECK(last.aggregate == last.per_step.back());
}

TEST_CASE("fresh adapters leave every output unchanged") {
  const JudgeNet base(test::tiny_config(), 10);
  JudgeNet adapted = base;
  adapted.set_placement({8, 8.0, Placement::kAll}, 11);
  const auto v = test::random_video(test::small_shape(5), 12);
  CHECK(adapted.forward_energy(v).per_step == base.forward_energy(v).per_step);
  CHECK(adapted.forward_aspects(v).scores == base.forward_aspects(v).scores);
  CHECK(adapted.forward(v, kPredictionOutput, false).prediction ==
        base.forward(v, kPredictionOutput, false).prediction);
  test::randomize_adapters(adapted, 13);
  CHECK(adapted.forward_energy(v).per_step != base.forward_energy(v).per_step);
}

TEST_CASE("placement selects one third of the stack") {
  auto c = test::tiny_config();
  c.num_layers = 6;
  JudgeNet net(c);
  net.set_placement({8, 8.0, Placement::kLastThird});
  CHECK(net.adapted_layers() == std::vector<int>{4, 5});
  net.set_placement({8, 8.0, Placement::kInitialThird});
  CHECK(net.adapted_layers() == std::vector<int>{0, 1});
  net.set_placement({8, 8.0, Placement::kMiddleThird});
  CHECK(net.adapted_layers() == std::vector<int>{2, 3});
  for (const auto& p : net.params()) {
    if (p.group == ParamGroup::kAdapter) CHECK((p.layer == 2 || p.layer == 3));
  }
  CHECK(net.trainable_groups() == mask_of(ParamGroup::kAdapter));
  const std::size_t third = net.parameter_count(mask_of(ParamGroup::kAdapter));
  CHECK(net.trainable_count() == third);
  net.set_placement({8, 8.0, Placement::kAll});
  CHECK(net.adapted_layers().size() == 6);
  CHECK(net.parameter_count(mask_of(ParamGroup::kAdapter)) == 3 * third);
  // Per adapted layer: eight projections, each with A (r x d) and B (d x r).
  CHECK(third == 2 * 8 * 2 * 8 * static_cast<std::size_t>(c.model_dim));
}

TEST_CASE("trainable and frozen sets are disjoint") {
  JudgeNet net(test::tiny_config());
  net.set_placement({4, 4.0, Placement::kLastThird});
  net.set_trainable(ParamGroup::kAdapter | ParamGroup::kEnergyHead);
  std::size_t n = 0;
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto g = net.params()[i].group;
    const bool expect = g == ParamGroup::kAdapter || g == ParamGroup::kEnergyHead;
    CHECK(net.is_trainable(i) == expect);
    if (expect) n += net.params()[i].value.size();
  }
  CHECK(net.trainable_count() == n);
  const auto grads = net.zero_gradients();
  for (std::size_t i = 0; i < grads.size(); ++i) {
    CHECK(grads[i].empty() == !net.is_trainable(i));
  }
}

TEST_CASE("reward head is affine in the aspect scores") {
  JudgeNet net(test::tiny_config(), 14);
  const auto v = test::random_video(test::small_shape(4), 15);
  auto& w = net.mutable_param("reward_head.w").value;
  auto& b = net.mutable_param("reward_head.b").value;
  std::fill(w.begin(), w.end(), 0.0);
  b[0] = 1.75;
  CHECK(net.forward_reward(v) == 1.75);
  CHECK(net.forward_reward(test::random_video(test::small_shape(3), 16)) == 1.75);

  const auto fresh = random_vec(w.size(), 17);
  w.assign(fresh.begin(), fresh.end());
  const AspectScores a{random_vec(5, 18)}, c{random_vec(5, 19)};
  AspectScores twice = a;
  for (double& x : twice.scores) x *= 2.0;
  CHECK(net.reward_from_aspects(twice) - b[0] ==
        doctest::Approx(2.0 * (net.reward_from_aspects(a) - b[0])));
  std::vector<double> diff(5);
  for (std::size_t i = 0; i < 5; ++i) diff[i] = a.scores[i] - c.scores[i];
  CHECK(net.reward_from_aspects(a) - net.reward_from_aspects(c) ==
        doctest::Approx(dot(w, diff)).epsilon(1e-13));
  CHECK(net.forward_reward(v) == net.reward_from_aspects(net.forward_aspects(v)));
}

TEST_CASE("adapter gradients match finite differences for every head") {
  JudgeNet net(test::tiny_config(), 20);
  net.set_placement({4, 4.0, Placement::kLastThird}, 21);
  test::randomize_adapters(net, 22);
  const auto v = test::random_video(test::small_shape(5), 23);

  SUBCASE("energy") {
    net.set_trainable(ParamGroup::kAdapter | ParamGroup::kEnergyHead);
    const auto r = check_probe(net, v, {kEnergyOutput, random_vec(5, 24)}, 40, 1);
    CHECK(r.max_rel_error <= 1e-5);
    CHECK(r.coords_checked == 40);
  }
  SUBCASE("aspects") {
    net.set_trainable(ParamGroup::kAdapter | ParamGroup::kAspectHead);
    const auto r = check_probe(net, v, {kAspectOutput, random_vec(5, 25)}, 40, 2);
    CHECK(r.max_rel_error <= 1e-5);
  }
  SUBCASE("each aspect score separately") {
    net.set_trainable(mask_of(ParamGroup::kAdapter));
    for (std::size_t q = 0; q < 5; ++q) {
      std::vector<double> c(5, 0.0);
      c[q] = 1.0;
      CHECK(check_probe(net, v, {kAspectOutput, c}, 20, q).max_rel_error <= 1e-5);
    }
  }
  SUBCASE("prediction") {
    net.set_trainable(ParamGroup::kAdapter | ParamGroup::kPredictionHead);
    const auto r = check_probe(net, v, {kPredictionOutput, random_vec(5 * 16 * 2, 26)}, 40, 3);
    CHECK(r.max_rel_error <= 1e-5);
  }
}

TEST_CASE("full backbone gradients match finite differences") {
  JudgeNet net(test::tiny_config(), 27);
  net.set_placement({2, 4.0, Placement::kMiddleThird}, 28);
  test::randomize_adapters(net, 29);
  net.set_trainable(kAllGroups);
  const auto v = test::random_video(test::small_shape(4), 30);
  const auto r = check_probe(net, v, {kEnergyOutput, random_vec(4, 31)}, 60, 4);
  CHECK(r.max_rel_error <= 1e-5);
  const auto r2 = check_probe(net, v, {kAspectOutput, random_vec(5, 32)}, 60, 5);
  CHECK(r2.max_rel_error <= 1e-5);
  const auto r3 = check_probe(net, v, {kPredictionOutput, random_vec(4 * 16 * 2, 33)}, 60, 6);
  CHECK(r3.max_rel_error <= 1e-5);
}

TEST_CASE("contrast loss through forward_energy passes the gradient check") {
  JudgeNet net(test::tiny_config(), 34);
  net.set_placement({4, 4.0, Placement::kLastThird}, 35);
  test::randomize_adapters(net, 36);
  net.set_trainable(ParamGroup::kAdapter | ParamGroup::kEnergyHead);
  const std::vector<LatentVideo> pos = {test::random_video(test::small_shape(5), 37),
                                        test::random_video(test::small_shape(3), 38)};
  const std::vector<LatentVideo> neg = {test::random_video(test::small_shape(5), 39),
                                        test::random_video(test::small_shape(4), 40)};
  auto loss_of = [&](const JudgeNet& m) {
    std::vector<double> ep, en;
    for (const auto& v : pos) ep.push_back(m.forward_energy(v).aggregate);
    for (const auto& v : neg) en.push_back(m.forward_energy(v).aggregate);
    return contrast_loss(ep, en);
  };
  std::vector<double> ep, en;
  for (const auto& v : pos) ep.push_back(net.forward_energy(v).aggregate);
  for (const auto& v : neg) en.push_back(net.forward_energy(v).aggregate);
  const auto cg = contrast_loss_grad(ep, en);
  Gradients g = net.zero_gradients();
  auto accumulate = [&](const LatentVideo& v, double d) {
    const auto pass = net.forward(v, kEnergyOutput);
    UpstreamGrads up;
    up.d_energy_per_step = net.aggregate_grad(v.frames(), d);
    net.backward(pass, up, g);
  };
  for (std::size_t i = 0; i < pos.size(); ++i) accumulate(pos[i], cg.d_pos[i]);
  for (std::size_t i = 0; i < neg.size(); ++i) accumulate(neg[i], cg.d_neg[i]);
  JudgeNet scratch = net;
  const auto r = grad_check(
      [&](std::span<const double> x) {
        scratch.set_flat_trainable(x);
        return loss_of(scratch);
      },
      net.flat_trainable(), net.flatten_gradients(g), {1e-5, 1e-5, 1e-6, 40, 7});
  CHECK(r.max_rel_error <= 1e-5);
}

TEST_CASE("checkpoint round trip") {
  JudgeNet net(test::tiny_config(), 41);
  net.set_placement({4, 2.0, Placement::kMiddleThird}, 42);
  test::randomize_adapters(net, 43);
  net.set_trainable(ParamGroup::kAdapter | ParamGroup::kAspectHead);
  const auto path = std::filesystem::temp_directory_path() / "svj_judge_net_roundtrip.svjm";
  net.save(path);
  const JudgeNet back = JudgeNet::load(path);
  CHECK(back.config() == net.config());
  CHECK(back.adapter() == net.adapter());
  CHECK(back.trainable_groups() == net.trainable_groups());
  REQUIRE(back.params().size() == net.params().size());
  for (std::size_t i = 0; i < net.params().size(); ++i) {
    const auto& a = net.params()[i];
    const auto& b = back.params()[i];
    CHECK(a.name == b.name);
    for (std::size_t k = 0; k < a.value.size(); ++k) {
      CHECK(b.value[k] == static_cast<double>(static_cast<float>(a.value[k])));
    }
  }
  const auto v = test::random_video(test::small_shape(4), 44);
  const auto ea = net.forward_energy(v).per_step;
  const auto eb = back.forward_energy(v).per_step;
  for (std::size_t t = 0; t < ea.size(); ++t) CHECK(eb[t] == doctest::Approx(ea[t]).epsilon(1e-5));
  // Saving the loaded net again is byte-for-byte stable.
  const auto path2 = std::filesystem::temp_directory_path() / "svj_judge_net_roundtrip2.svjm";
  back.save(path2);
  CHECK(JudgeNet::load(path2).checksum(kAllGroups) == back.checksum(kAllGroups));
  CHECK(code_of([] { JudgeNet::load("/nonexistent/model.svjm"); }) == ErrorCode::kIOError);
}

TEST_CASE("reinit_group only touches that group") {
  JudgeNet net(test::tiny_config(), 45);
  const auto backbone = net.checksum(mask_of(ParamGroup::kBackbone));
  const auto aspect = net.checksum(mask_of(ParamGroup::kAspectHead));
  net.reinit_group(ParamGroup::kAspectHead, 99);
  CHECK(net.checksum(mask_of(ParamGroup::kBackbone)) == backbone);
  CHECK(net.checksum(mask_of(ParamGroup::kAspectHead)) != aspect);
}

TEST_CASE("pretraining lowers held-out next-frame error") {
  auto c = test::tiny_config();
  std::vector<LatentVideo> corpus, heldout;
  Rng rng(46);
  for (int i = 0; i < 40; ++i) {
    QualityKnobs k;
    k.rho = 0.9 + 0.09 * uniform01(rng);
    auto [v, truth] = gen_video(k, shape_for(c, 6), derive_seed(47, static_cast<std::uint64_t>(i)), 5);
    (i < 32 ? corpus : heldout).push_back(v);
  }
  PretrainConfig pc;
  pc.steps = 0;
  JudgeNet net(c, 48);
  const auto before = net.checksum(kAllGroups);
  pretrain_backbone(net, corpus, heldout, pc);
  CHECK(net.checksum(kAllGroups) == before);

  pc.steps = 500;
  pc.learning_rate = 3e-3;
  pc.seed = 49;
  const auto log = pretrain_backbone(net, corpus, heldout, pc);
  CHECK(log.losses.size() == 500);
  CHECK(log.final_heldout_mse < log.initial_heldout_mse);
  MESSAGE("held-out next-frame MSE " << log.initial_heldout_mse << " -> " << log.final_heldout_mse);

  JudgeNet again(c, 48);
  pretrain_backbone(again, corpus, heldout, pc);
  CHECK(again.checksum(kAllGroups) == net.checksum(kAllGroups));
}
