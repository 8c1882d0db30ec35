#include "commands.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"
#include "svj/eval.hpp"
#include "svj/perturb.hpp"
#include "svj/sampler.hpp"
#include "svj/synthworld.hpp"
#include "svj/trainer.hpp"

namespace svj::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kModelFile = "model.svjm";

template <class T>
const T& need(const std::optional<T>& v, const char* flag, const std::string& command) {
  if (!v) fail(ErrorCode::kIOError, command + " needs " + flag);
  return *v;
}

std::string fmt(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<LatentVideo> concat(std::vector<LatentVideo> a, std::vector<LatentVideo> b) {
  for (auto& v : b) a.push_back(std::move(v));
  return a;
}

fs::path split_file(const fs::path& dir, const char* name) {
  return dir / (std::string(name) + ".svjl");
}

struct Context {
  const Options& opts;
  const ExperimentConfig& cfg;
  RunDir& run;

  JudgeNet load_model() {
    const fs::path& p = need(opts.checkpoint, "--checkpoint", opts.command);
    run.add_input(p);
    return JudgeNet::load(p);
  }

  const fs::path& data_dir() { return need(opts.data, "--data", opts.command); }

  std::vector<LatentVideo> videos(const char* split) {
    run.add_input(split_file(data_dir(), split));
    return load_videos(data_dir(), split);
  }

  std::vector<CorpusItem> items(const char* split) {
    run.add_input(split_file(data_dir(), split));
    return load_split(data_dir(), split);
  }

  std::vector<PairIndex> pairs(const char* file, std::span<const CorpusItem> pool) {
    const fs::path p = data_dir() / file;
    run.add_input(p);
    return pairs_from_jsonl(pool, read_text(p));
  }

  void save_model(const JudgeNet& net) {
    net.save(run.file(kModelFile));
    run.add_output(kModelFile);
  }

  void write_log(const TrainLog& log) {
    // Timing goes to the manifest only; the log itself must rerun bit-exact.
    run.write_text("train_log.csv", log.to_csv(false));
  }

  AdapterConfig adapter_config() const {
    AdapterConfig a = cfg.adapter;
    if (opts.placement) a.placement = *opts.placement;
    return a;
  }

  std::uint64_t adapter_seed() const { return derive_seed(stage_seed(cfg, StageStream::kInit), 1); }

  // Keeps adapters already in the checkpoint unless a different placement is
  // requested.
  void ensure_adapters(JudgeNet& net) const {
    const bool moved = opts.placement && net.adapter() && net.adapter()->placement != *opts.placement;
    if (!net.adapter() || moved) net.set_placement(adapter_config(), adapter_seed());
  }
};

// ---- commands -------------------------------------------------------------------

void gen_data(Context& ctx) {
  const DataConfig& d = ctx.cfg.data;
  const std::uint64_t base = stage_seed(ctx.cfg, StageStream::kData);
  auto seed = [&](std::uint64_t k) { return derive_seed(base, k); };
  const fs::path& dir = ctx.run.path();
  auto save = [&](std::span<const CorpusItem> items, const char* name) {
    save_split(items, dir, name);
    ctx.run.add_output(std::string(name) + ".svjl");
    ctx.run.add_output(std::string(name) + ".truth.json");
  };
  auto save_pairs = [&](std::span<const CorpusItem> pool, int n, std::uint64_t s,
                        const char* file) {
    const auto pairs = n > 0 ? sample_pairs(pool, n, d.tie_margin, s) : std::vector<PairIndex>{};
    ctx.run.write_text(file, pairs_to_jsonl(pool, pairs));
  };

  CorpusConfig cc;
  cc.shape = d.shape;
  cc.real = d.real;
  cc.generated = d.generated;
  cc.num_aspects = d.num_aspects;
  {
    auto corpus = gen_corpus(d.n_real, d.n_generated, cc, seed(0));
    const auto mid = corpus.begin() + d.n_real;
    save(std::vector<CorpusItem>(corpus.begin(), mid), kRealSplit);
    save(std::vector<CorpusItem>(mid, corpus.end()), kGeneratedSplit);
  }
  {
    auto held = gen_corpus(d.n_heldout, d.n_heldout, cc, seed(1));
    const auto mid = held.begin() + d.n_heldout;
    save(std::vector<CorpusItem>(held.begin(), mid), kHeldoutRealSplit);
    save(std::vector<CorpusItem>(mid, held.end()), kHeldoutGeneratedSplit);
  }
  save(gen_pool(d.n_aspect_train, d.mixed, d.shape, seed(2), d.num_aspects, "aspect"),
       kAspectTrainSplit);
  save(gen_pool(d.n_aspect_val, d.mixed, d.shape, seed(3), d.num_aspects, "aspect_val"),
       kAspectValSplit);
  const auto pref = gen_pool(d.n_pref_pool, d.mixed, d.shape, seed(4), d.num_aspects, "pref");
  save(pref, kPrefPoolSplit);
  save_pairs(pref, d.n_pref_pairs, seed(5), "pairs_pref.jsonl");
  const auto calib = gen_pool(d.n_calib_pool, d.mixed, d.shape, seed(6), d.num_aspects, "calib");
  save(calib, kCalibPoolSplit);
  save_pairs(calib, d.n_calib_pairs, seed(7), "pairs_calib.jsonl");
  const auto test = gen_pool(d.n_test_pool, d.mixed, d.shape, seed(8), d.num_aspects, "test");
  save(test, kTestPoolSplit);
  save_pairs(test, d.n_test_pairs, seed(9), "pairs_test.jsonl");
}

void perturb_cmd(Context& ctx) {
  std::vector<LatentVideo> videos;
  if (ctx.opts.input) {
    ctx.run.add_input(*ctx.opts.input);
    videos = load_dataset(*ctx.opts.input);
  } else {
    videos = ctx.videos(kRealSplit);
  }
  if (videos.empty()) fail(ErrorCode::kEmptyCorpus, "nothing to perturb");
  const TrainConfig& tc = ctx.cfg.discriminative;
  SpecSamplingConfig sc;
  sc.sigma = tc.noise_sigma_fraction * latent_std(videos);
  sc.region_min_fraction = tc.region_min_fraction;
  sc.region_max_fraction = tc.region_max_fraction;
  sc.bidirectional_patch_swap = tc.bidirectional_patch_swap;
  std::optional<PerturbationKind> fixed;
  if (ctx.opts.kind) fixed = perturbation_kind_from_string(*ctx.opts.kind);

  const std::uint64_t base = stage_seed(ctx.cfg, StageStream::kPerturb);
  std::vector<LatentVideo> out;
  std::string specs;
  for (std::size_t i = 0; i < videos.size(); ++i) {
    Rng rng(derive_seed(base, i));
    const PerturbationKind kind = fixed ? *fixed : sample_kind(tc.sampling_table.real_perturb_probs, rng);
    const LatentVideo& v = videos[i];
    const PerturbationSpec spec = sample_spec(kind, v.frames(), v.shape().height, v.shape().width, rng, sc);
    out.push_back(apply_perturbation(v, spec));
    ordered_json line = {{"video_id", v.meta().origin_id},
                         {"spec", nlohmann::json::parse(spec_to_json(spec))}};
    specs += line.dump() + "\n";
  }
  save_dataset(out, ctx.run.file("perturbed.svjl"));
  ctx.run.add_output("perturbed.svjl");
  ctx.run.write_text("specs.jsonl", specs);
}

void pretrain_cmd(Context& ctx) {
  const auto real = ctx.videos(kRealSplit);
  auto held = ctx.videos(kHeldoutRealSplit);
  if (held.size() > 100) held.erase(held.begin() + 100, held.end());
  JudgeNet net(ctx.cfg.backbone, stage_seed(ctx.cfg, StageStream::kInit));
  PretrainConfig pc = ctx.cfg.pretrain;
  pc.seed = stage_seed(ctx.cfg, StageStream::kPretrain);
  if (ctx.opts.steps) pc.steps = *ctx.opts.steps;
  const PretrainLog log = pretrain_backbone(net, real, held, pc);
  ctx.save_model(net);
  std::string csv = "step,loss\n";
  for (std::size_t s = 0; s < log.losses.size(); ++s) {
    csv += std::to_string(s) + "," + fmt(log.losses[s]) + "\n";
  }
  ctx.run.write_text("pretrain_log.csv", csv);
  ordered_json summary = {{"steps", pc.steps},
                          {"initial_heldout_mse", log.initial_heldout_mse},
                          {"final_heldout_mse", log.final_heldout_mse}};
  ctx.run.write_text("summary.json", summary.dump(2) + "\n");
}

void train_dm(Context& ctx) {
  JudgeNet net = ctx.load_model();
  ctx.ensure_adapters(net);
  const auto real = ctx.videos(kRealSplit);
  const auto generated = ctx.videos(kGeneratedSplit);
  TrainConfig tc = ctx.cfg.discriminative;
  tc.seed = stage_seed(ctx.cfg, StageStream::kDiscriminative);
  if (ctx.opts.steps) tc.steps = *ctx.opts.steps;
  if (ctx.opts.table) {
    ctx.run.add_input(*ctx.opts.table);
    tc.sampling_table = table_from_json(read_text(*ctx.opts.table));
  }
  const TrainLog log = train_discriminative(net, real, generated, tc);
  ctx.save_model(net);
  ctx.write_log(log);

  ordered_json summary = {{"steps", tc.steps}, {"sampling_table",
                                                nlohmann::json::parse(table_to_json(tc.sampling_table))}};
  const fs::path& dir = ctx.data_dir();
  if (fs::exists(split_file(dir, kHeldoutRealSplit)) &&
      fs::exists(split_file(dir, kHeldoutGeneratedSplit))) {
    const auto hr = ctx.videos(kHeldoutRealSplit);
    const auto hg = ctx.videos(kHeldoutGeneratedSplit);
    if (!hr.empty() && !hg.empty()) {
      auto energies = [&](const std::vector<LatentVideo>& vs) {
        std::vector<double> e(vs.size());
        for (std::size_t i = 0; i < vs.size(); ++i) e[i] = net.forward_energy(vs[i]).aggregate;
        return e;
      };
      const auto er = energies(hr), eg = energies(hg);
      auto mean = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
      };
      summary["heldout_mean_energy_real"] = mean(er);
      summary["heldout_mean_energy_generated"] = mean(eg);
      summary["heldout_auc"] = auc(er, eg);
    }
  }
  ctx.run.write_text("summary.json", summary.dump(2) + "\n");
}

void calibrate_sampler(Context& ctx) {
  JudgeNet net = ctx.load_model();
  ctx.ensure_adapters(net);
  const auto real = ctx.videos(kRealSplit);
  TrainConfig tc = ctx.cfg.discriminative;
  tc.seed = stage_seed(ctx.cfg, StageStream::kCalibration);
  DecayConfig dc = ctx.cfg.calibration.decay;
  dc.max_steps = ctx.opts.steps ? *ctx.opts.steps : ctx.cfg.calibration.steps;
  if (dc.max_steps < 1) fail(ErrorCode::kConfigError, "calibration needs at least one step");

  std::vector<DecayProfile> profiles;
  std::string csv = "kind,step,grad_norm\n";
  ordered_json taus = ordered_json::array();
  for (PerturbationKind kind : kAllPerturbations) {
    DecayProfile p = measure_perturbation_decay(net, real, kind, tc, dc);
    for (std::size_t s = 0; s < p.grad_norms.size(); ++s) {
      csv += to_string(kind) + "," + std::to_string(s) + "," + fmt(p.grad_norms[s]) + "\n";
    }
    taus.push_back({{"kind", to_string(kind)},
                    {"tau", p.tau ? ordered_json(*p.tau) : ordered_json(nullptr)},
                    {"epsilon", p.epsilon}});
    profiles.push_back(std::move(p));
  }
  const NegativeSamplingTable table =
      calibrate(profiles, ctx.cfg.calibration.generated_reserved, ctx.cfg.calibration.rule);
  ctx.run.write_text("decay.csv", csv);
  ctx.run.write_text("taus.json", taus.dump(2) + "\n");
  ctx.run.write_text("table.json", table_to_json(table) + "\n");
}

void train_aspects_cmd(Context& ctx) {
  JudgeNet net = ctx.load_model();
  if (ctx.opts.fresh_adapters) {
    net.set_placement(ctx.adapter_config(), ctx.adapter_seed());
  } else {
    ctx.ensure_adapters(net);
  }
  // A new aspect head on top of whatever the checkpoint carries.
  net.reinit_group(ParamGroup::kAspectHead, derive_seed(stage_seed(ctx.cfg, StageStream::kInit), 2));
  const auto train = labeled_of(ctx.items(kAspectTrainSplit));
  const auto val = labeled_of(ctx.items(kAspectValSplit));
  TrainConfig ac = ctx.cfg.aspects;
  ac.seed = stage_seed(ctx.cfg, StageStream::kAspects);
  if (ctx.opts.steps) ac.steps = *ctx.opts.steps;
  const TrainLog log = train_aspects(net, train, val, ac);
  ctx.save_model(net);
  ctx.write_log(log);
  ordered_json summary = {{"steps", ac.steps}};
  if (!val.empty()) {
    summary["final_validation_mse"] = log.final_validation_mse;
    summary["mean_predictor_mse"] = mean_predictor_mse(train, val);
  }
  ctx.run.write_text("summary.json", summary.dump(2) + "\n");
}

void train_pref_cmd(Context& ctx) {
  JudgeNet net = ctx.load_model();
  const auto pool = ctx.items(kPrefPoolSplit);
  const auto pairs = materialize(pool, ctx.pairs("pairs_pref.jsonl", pool));
  TrainConfig pc = ctx.cfg.preference;
  pc.seed = stage_seed(ctx.cfg, StageStream::kPreference);
  if (ctx.opts.steps) pc.steps = *ctx.opts.steps;
  const TrainLog log = train_preference(net, pairs, pc);
  ctx.save_model(net);
  ctx.write_log(log);

  ordered_json tie;
  if (ctx.opts.delta || ctx.cfg.eval.delta) {
    tie = {{"delta", ctx.opts.delta ? *ctx.opts.delta : *ctx.cfg.eval.delta}, {"source", "config"}};
  } else {
    const auto calib = ctx.items(kCalibPoolSplit);
    const auto cp = materialize(calib, ctx.pairs("pairs_calib.jsonl", calib));
    tie = {{"delta", calibrate_delta(net, cp).delta}, {"source", "calibrated"}};
  }
  ctx.run.write_text("tie_threshold.json", tie.dump(2) + "\n");
}

void eval_cmd(Context& ctx) {
  std::optional<double> delta = ctx.opts.delta ? ctx.opts.delta : ctx.cfg.eval.delta;
  std::vector<ScoredPair> scored;
  if (ctx.opts.scores) {
    ctx.run.add_input(*ctx.opts.scores);
    scored = scores_from_csv(read_text(*ctx.opts.scores));
    if (!delta) fail(ErrorCode::kConfigError, "eval --scores needs --delta or eval.delta");
  } else {
    const JudgeNet net = ctx.load_model();
    const auto test = ctx.items(kTestPoolSplit);
    scored = score_pairs(net, materialize(test, ctx.pairs("pairs_test.jsonl", test)));
    if (!delta) {
      const auto calib = ctx.items(kCalibPoolSplit);
      delta = calibrate_delta(net, materialize(calib, ctx.pairs("pairs_calib.jsonl", calib))).delta;
    }
    ctx.run.write_text("scores.csv", scores_to_csv(scored));
  }
  ctx.run.write_text("report.json", evaluate_scored(scored, *delta).to_json());
}

std::pair<std::vector<std::string>, std::vector<EnergyTrajectory>> trajectories(Context& ctx) {
  const JudgeNet net = ctx.load_model();
  std::vector<LatentVideo> videos;
  if (ctx.opts.input) {
    ctx.run.add_input(*ctx.opts.input);
    videos = load_dataset(*ctx.opts.input);
  } else {
    videos = concat(ctx.videos(kHeldoutRealSplit), ctx.videos(kHeldoutGeneratedSplit));
  }
  std::vector<std::string> ids;
  std::vector<EnergyTrajectory> traj(videos.size());
  for (std::size_t i = 0; i < videos.size(); ++i) {
    ids.push_back(videos[i].meta().origin_id.empty() ? "video-" + std::to_string(i)
                                                      : videos[i].meta().origin_id);
    traj[i] = net.forward_energy(videos[i]);
  }
  return {ids, traj};
}

void export_trajectory(Context& ctx) {
  const auto [ids, traj] = trajectories(ctx);
  std::vector<TrajectoryStats> stats;
  for (const auto& t : traj) stats.push_back(trajectory_stats(t.per_step));
  ctx.run.write_text("trajectories.csv", trajectories_csv(ids, traj));
  ctx.run.write_text("trajectory_stats.csv", trajectory_stats_csv(ids, stats));
}

void plot_energy(Context& ctx) {
  std::string csv;
  if (ctx.opts.trajectories) {
    ctx.run.add_input(*ctx.opts.trajectories);
    csv = read_text(*ctx.opts.trajectories);
  } else {
    const auto [ids, traj] = trajectories(ctx);
    csv = trajectories_csv(ids, traj);
  }
  ctx.run.write_text("energy.svg", energy_svg(csv));
}

using Handler = void (*)(Context&);

const std::map<std::string, Handler>& handlers() {
  static const std::map<std::string, Handler> table = {
      {"gen-data", gen_data},
      {"perturb", perturb_cmd},
      {"pretrain", pretrain_cmd},
      {"train-dm", train_dm},
      {"calibrate-sampler", calibrate_sampler},
      {"train-aspects", train_aspects_cmd},
      {"train-pref", train_pref_cmd},
      {"eval", eval_cmd},
      {"export-trajectory", export_trajectory},
      {"plot-energy", plot_energy},
  };
  return table;
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {
      "gen-data",      "perturb", "pretrain",          "train-dm",   "calibrate-sampler",
      "train-aspects", "train-pref", "eval", "export-trajectory", "plot-energy"};
  return names;
}

ExperimentConfig resolve_config(const Options& opts) {
  ExperimentConfig cfg = opts.config ? load_config(*opts.config) : desk_config();
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.out) cfg.out_dir = opts.out->string();
  if (opts.steps && *opts.steps < 0) throw ConfigParseError("--steps must be >= 0");
  if (opts.delta && !(*opts.delta >= 0.0)) throw ConfigParseError("--delta must be >= 0");
  return cfg;
}

fs::path run_command(const Options& opts) {
  auto it = handlers().find(opts.command);
  if (it == handlers().end()) fail(ErrorCode::kConfigError, "unknown command " + opts.command);
  const ExperimentConfig cfg = resolve_config(opts);
  RunDir run(cfg.out_dir, opts.command, cfg, opts.argv);
  if (opts.config) run.add_input(*opts.config);
  Context ctx{opts, cfg, run};
  it->second(ctx);
  run.finish();
  return run.path();
}

std::string scores_to_csv(std::span<const ScoredPair> scored) {
  std::string out = "difference,truth\n";
  for (const auto& s : scored) out += fmt(s.difference) + "," + to_string(s.truth) + "\n";
  return out;
}

std::vector<ScoredPair> scores_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<ScoredPair> out;
  bool header = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (header) {
      header = false;
      if (line != "difference,truth") fail(ErrorCode::kFormatError, "scores need a difference,truth header");
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorCode::kFormatError, "bad scores line: " + line);
    ScoredPair s;
    try {
      std::size_t used = 0;
      s.difference = std::stod(line.substr(0, comma), &used);
      if (used != comma) throw std::invalid_argument(line);
    } catch (const std::exception&) {
      fail(ErrorCode::kFormatError, "bad score value: " + line);
    }
    s.truth = preference_label_from_string(line.substr(comma + 1));
    out.push_back(s);
  }
  return out;
}

std::string energy_svg(const std::string& csv) {
  // Series keep first-appearance order; colour follows the id prefix (the
  // text before the first '-'), so real and generated clips separate.
  std::vector<std::string> order;
  std::map<std::string, std::vector<std::pair<double, double>>> series;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  if (line != "video_id,t,energy") fail(ErrorCode::kFormatError, "not a trajectory CSV");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto a = line.find(',');
    const auto b = line.find(',', a + 1);
    if (a == std::string::npos || b == std::string::npos) {
      fail(ErrorCode::kFormatError, "bad trajectory line: " + line);
    }
    const std::string id = line.substr(0, a);
    double t = 0.0, e = 0.0;
    try {
      t = std::stod(line.substr(a + 1, b - a - 1));
      e = std::stod(line.substr(b + 1));
    } catch (const std::exception&) {
      fail(ErrorCode::kFormatError, "bad trajectory line: " + line);
    }
    if (!series.count(id)) order.push_back(id);
    series[id].emplace_back(t, e);
  }
  if (order.empty()) fail(ErrorCode::kEmptyBatch, "no trajectories to plot");

  double t_max = 1.0, e_min = series[order[0]][0].second, e_max = e_min;
  for (const auto& [id, pts] : series) {
    for (const auto& [t, e] : pts) {
      t_max = std::max(t_max, t);
      e_min = std::min(e_min, e);
      e_max = std::max(e_max, e);
    }
  }
  if (e_max == e_min) e_max = e_min + 1.0;
  constexpr double W = 720, H = 400, L = 70, R = 150, T = 20, B = 40;
  auto x = [&](double t) { return L + (W - L - R) * t / t_max; };
  auto y = [&](double e) { return T + (H - T - B) * (e_max - e) / (e_max - e_min); };
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::map<std::string, const char*> colour;

  std::ostringstream svg;
  char buf[160];
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L,
                H - B, W - R, H - B);
  svg << buf;
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"black\"/>\n", L, T,
                L, H - B);
  svg << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n",
                L - 4, T + 4, e_max);
  svg << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n",
                L - 4, H - B, e_min);
  svg << buf;
  std::snprintf(buf, sizeof buf,
                "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">latent step t (0..%g)</text>\n",
                (L + W - R) / 2, H - 10, t_max);
  svg << buf;
  for (const std::string& id : order) {
    const std::string group = id.substr(0, id.find('-'));
    if (!colour.count(group)) colour[group] = palette[colour.size() % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke-opacity=\"0.5\" stroke=\"" << colour[group]
        << "\" points=\"";
    for (const auto& [t, e] : series[id]) {
      std::snprintf(buf, sizeof buf, "%.2f,%.2f ", x(t), y(e));
      svg << buf;
    }
    svg << "\"><title>" << id << "</title></polyline>\n";
  }
  double ly = T + 10;
  for (const auto& [group, c] : colour) {
    std::snprintf(buf, sizeof buf,
                  "<rect x=\"%.1f\" y=\"%.1f\" width=\"10\" height=\"10\" fill=\"%s\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\">",
                  W - R + 10, ly - 9, c, W - R + 26, ly);
    svg << buf << group << "</text>\n";
    ly += 16;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace svj::cli
