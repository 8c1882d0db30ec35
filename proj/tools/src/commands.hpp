#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "experiment_config.hpp"
#include "svj/eval.hpp"
#include "workspace.hpp"

namespace svj::cli {

// Parsed flags. Which inputs are required depends on the command.
struct Options {
  std::string command;
  std::vector<std::string> argv;
  std::optional<std::filesystem::path> config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
  std::optional<int> steps;
  std::optional<double> delta;
  std::optional<Placement> placement;
  std::optional<std::filesystem::path> data;
  std::optional<std::filesystem::path> checkpoint;
  std::optional<std::filesystem::path> input;
  std::optional<std::filesystem::path> scores;
  std::optional<std::filesystem::path> table;
  std::optional<std::filesystem::path> trajectories;
  std::optional<std::string> kind;
  bool fresh_adapters = false;
};

// Config file (or desk defaults) with --seed applied. Throws ConfigParseError.
ExperimentConfig resolve_config(const Options& opts);

// Runs one command; returns the run directory. Throws Error or
// ConfigParseError.
std::filesystem::path run_command(const Options& opts);

const std::vector<std::string>& command_names();

// "first" | "second" | "tie" per pair, with the first-minus-second reward
// difference; the input format of `eval --scores`.
std::string scores_to_csv(std::span<const ScoredPair> scored);
std::vector<ScoredPair> scores_from_csv(const std::string& text);

// Minimal SVG line chart of per-step energies, one polyline per video.
std::string energy_svg(const std::string& trajectories_csv);

}  // namespace svj::cli
