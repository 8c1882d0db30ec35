#pragma once

#include <chrono>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "experiment_config.hpp"
#include "svj/synthworld.hpp"

namespace svj::cli {

// One directory per invocation: <out>/<command>-<config hash>-<UTC time>,
// suffixed -1, -2, ... if that name is taken. Inputs are only ever read.
class RunDir {
 public:
  RunDir(const std::filesystem::path& out_root, const std::string& command,
         const ExperimentConfig& cfg, std::vector<std::string> argv);

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path file(const std::string& name) const { return path_ / name; }

  void add_input(const std::filesystem::path& p);
  // Records an artifact already written under path().
  void add_output(const std::string& name);
  void write_text(const std::string& name, const std::string& text);

  // Writes manifest.json: command, argv, config hash, seed, versions,
  // timestamps and FNV-1a digests of every input and output.
  void finish();

 private:
  std::filesystem::path path_;
  std::string command_;
  std::string hash_;
  std::uint64_t seed_;
  std::vector<std::string> argv_;
  std::vector<std::filesystem::path> inputs_;
  std::vector<std::string> outputs_;
  std::string started_utc_;
  std::chrono::steady_clock::time_point started_;
};

std::string utc_timestamp();
std::string file_digest(const std::filesystem::path& p);
std::string read_text(const std::filesystem::path& p);
void write_text(const std::filesystem::path& p, const std::string& text);

// A latent dataset plus its ground-truth sidecar <name>.truth.json.
void save_split(std::span<const CorpusItem> items, const std::filesystem::path& dir,
                const std::string& name);
std::vector<CorpusItem> load_split(const std::filesystem::path& dir, const std::string& name);
std::vector<LatentVideo> load_videos(const std::filesystem::path& dir, const std::string& name);

// JSON lines {"first_id", "second_id", "label"}; ids refer to one split.
std::string pairs_to_jsonl(std::span<const CorpusItem> items, std::span<const PairIndex> pairs);
std::vector<PairIndex> pairs_from_jsonl(std::span<const CorpusItem> items, const std::string& text);

// Split names written by gen-data.
inline constexpr const char* kRealSplit = "real";
inline constexpr const char* kGeneratedSplit = "generated";
inline constexpr const char* kHeldoutRealSplit = "heldout_real";
inline constexpr const char* kHeldoutGeneratedSplit = "heldout_generated";
inline constexpr const char* kAspectTrainSplit = "aspects_train";
inline constexpr const char* kAspectValSplit = "aspects_val";
inline constexpr const char* kPrefPoolSplit = "pref_pool";
inline constexpr const char* kCalibPoolSplit = "calib_pool";
inline constexpr const char* kTestPoolSplit = "test_pool";

}  // namespace svj::cli
