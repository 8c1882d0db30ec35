#include "cli.hpp"

#include <CLI11.hpp>
#include <map>

#include "commands.hpp"
#include "svj/error.hpp"

namespace svj::cli {
namespace {

void add_common(CLI::App& sub, Options& o) {
  sub.add_option("--config", o.config, "Experiment config (JSON); desk defaults when absent")
      ->check(CLI::ExistingFile);
  sub.add_option("--seed", o.seed, "Overrides the config seed");
  sub.add_option("--out", o.out, "Parent directory for run directories");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Latent video judge: data, training, calibration and evaluation", "svj"};
  app.require_subcommand(1);
  Options o;
  std::string placement;
  static const std::map<std::string, std::string> about = {
      {"gen-data", "Generate the synthetic latent corpus and preference pairs"},
      {"perturb", "Apply one perturbation to every video of a dataset"},
      {"pretrain", "Pretrain the backbone stand-in by next-frame prediction"},
      {"train-dm", "Stage 1: train adapters and energy head on perturbed negatives"},
      {"calibrate-sampler", "Measure per-perturbation decay times and write a sampling table"},
      {"train-aspects", "Stage 2: regress the 21 aspect scores"},
      {"train-pref", "Stage 3: train the reward head on preference pairs"},
      {"eval", "Pairwise accuracy with and without ties on the test pairs"},
      {"export-trajectory", "Write per-frame energy trajectories as CSV"},
      {"plot-energy", "Render energy trajectories as SVG"}};
  for (const std::string& name : command_names()) {
    CLI::App* sub = app.add_subcommand(name, about.at(name));
    add_common(*sub, o);
    if (name != "gen-data") {
      sub->add_option("--data", o.data, "Directory written by gen-data");
    }
    if (name == "pretrain" || name == "train-dm" || name == "calibrate-sampler" ||
        name == "train-aspects" || name == "train-pref") {
      sub->add_option("--steps", o.steps, "Overrides the stage's step budget");
    }
    if (name == "train-dm" || name == "calibrate-sampler" || name == "train-aspects" ||
        name == "train-pref" || name == "eval" || name == "export-trajectory" ||
        name == "plot-energy") {
      sub->add_option("--checkpoint", o.checkpoint, "Input model checkpoint");
    }
    if (name == "train-dm" || name == "calibrate-sampler" || name == "train-aspects") {
      sub->add_option("--placement", placement, "Adapter placement")
          ->check(CLI::IsMember({"initial", "middle", "last", "all"}));
    }
    if (name == "train-pref" || name == "eval") {
      sub->add_option("--delta", o.delta, "Tie threshold");
    }
    if (name == "perturb" || name == "export-trajectory" || name == "plot-energy") {
      sub->add_option("--input", o.input, "Latent dataset (.svjl)");
    }
    if (name == "perturb") sub->add_option("--kind", o.kind, "Perturbation kind");
    if (name == "train-dm") sub->add_option("--table", o.table, "Sampling table from calibrate-sampler");
    if (name == "train-aspects") {
      sub->add_flag("--fresh-adapters", o.fresh_adapters, "Discard checkpoint adapters");
    }
    if (name == "eval") sub->add_option("--scores", o.scores, "Scored pairs CSV (difference,truth)");
    if (name == "plot-energy") sub->add_option("--trajectories", o.trajectories, "Trajectory CSV");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  if (!reversed.empty()) reversed.pop_back();  // program name
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "svj: " << e.what() << "\n";
    return kExitConfigError;
  }

  o.command = app.get_subcommands().front()->get_name();
  o.argv = args;
  try {
    if (!placement.empty()) {
      o.placement = placement_from_string(placement);
    }
    out << run_command(o).string() << "\n";
    return kExitOk;
  } catch (const ConfigParseError& e) {
    err << "svj " << o.command << ": config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const Error& e) {
    err << "svj " << o.command << ": " << to_string(e.code()) << ": " << e.what() << "\n";
    return kExitModuleError;
  } catch (const std::exception& e) {
    err << "svj " << o.command << ": " << e.what() << "\n";
    return kExitModuleError;
  }
}

}  // namespace svj::cli
