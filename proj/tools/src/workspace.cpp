#include "workspace.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "svj/error.hpp"
#include "svj/version.hpp"

namespace svj::cli {
namespace fs = std::filesystem;
using nlohmann::ordered_json;

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorCode::kIOError, "cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIOError, "cannot write " + p.string());
  out << text;
  if (!out) fail(ErrorCode::kIOError, "short write to " + p.string());
}

std::string file_digest(const fs::path& p) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(read_text(p))));
  return buf;
}

RunDir::RunDir(const fs::path& out_root, const std::string& command, const ExperimentConfig& cfg,
               std::vector<std::string> argv)
    : command_(command),
      hash_(config_hash(cfg)),
      seed_(cfg.seed),
      argv_(std::move(argv)),
      started_utc_(utc_timestamp()),
      started_(std::chrono::steady_clock::now()) {
  std::error_code ec;
  fs::create_directories(out_root, ec);
  if (ec) fail(ErrorCode::kIOError, "cannot create " + out_root.string() + ": " + ec.message());
  const std::string base = command + "-" + hash_ + "-" + started_utc_;
  for (int k = 0;; ++k) {
    fs::path candidate = out_root / (k == 0 ? base : base + "-" + std::to_string(k));
    // create_directory reports false when the name is taken, so two runs
    // started in the same second never share a directory.
    if (fs::create_directory(candidate, ec)) {
      path_ = candidate;
      break;
    }
    if (ec) fail(ErrorCode::kIOError, "cannot create " + candidate.string() + ": " + ec.message());
  }
  write_text("config.json", config_to_json(cfg));
}

void RunDir::add_input(const fs::path& p) { inputs_.push_back(p); }

void RunDir::add_output(const std::string& name) { outputs_.push_back(name); }

void RunDir::write_text(const std::string& name, const std::string& text) {
  cli::write_text(file(name), text);
  add_output(name);
}

void RunDir::finish() {
  const BuildInfo info = build_info();
  ordered_json j;
  j["command"] = command_;
  j["argv"] = argv_;
  j["config_hash"] = hash_;
  j["seed"] = seed_;
  j["versions"] = {{"svj", info.svj},
                   {"eigen", info.eigen},
                   {"nlohmann_json", info.nlohmann_json},
                   {"compiler", info.compiler}};
  j["started_utc"] = started_utc_;
  j["finished_utc"] = utc_timestamp();
  j["wall_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started_).count();
  ordered_json in = ordered_json::array();
  for (const auto& p : inputs_) in.push_back({{"path", p.string()}, {"fnv1a64", file_digest(p)}});
  j["inputs"] = in;
  ordered_json out = ordered_json::array();
  for (const auto& name : outputs_) {
    out.push_back({{"file", name}, {"fnv1a64", file_digest(file(name))}});
  }
  j["outputs"] = out;
  cli::write_text(file("manifest.json"), j.dump(2) + "\n");
}

// ---- splits -------------------------------------------------------------------

namespace {

fs::path truth_path(const fs::path& dir, const std::string& name) {
  return dir / (name + ".truth.json");
}

fs::path dataset_path(const fs::path& dir, const std::string& name) {
  return dir / (name + ".svjl");
}

}  // namespace

void save_split(std::span<const CorpusItem> items, const fs::path& dir, const std::string& name) {
  std::vector<LatentVideo> videos;
  videos.reserve(items.size());
  ordered_json truth = ordered_json::array();
  for (const auto& item : items) {
    videos.push_back(item.video);
    const QualityKnobs& k = item.truth.knobs;
    truth.push_back({{"id", item.video.meta().origin_id},
                     {"knobs",
                      {{"rho", k.rho},
                       {"jitter", k.jitter},
                       {"discontinuities", k.discontinuities},
                       {"flicker", k.flicker}}},
                     {"quality", item.truth.quality},
                     {"aspects", item.truth.aspects.scores}});
  }
  save_dataset(videos, dataset_path(dir, name));
  cli::write_text(truth_path(dir, name), truth.dump(1) + "\n");
}

std::vector<CorpusItem> load_split(const fs::path& dir, const std::string& name) {
  std::vector<LatentVideo> videos = load_dataset(dataset_path(dir, name));
  nlohmann::json truth;
  try {
    truth = nlohmann::json::parse(read_text(truth_path(dir, name)));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, "bad ground truth for " + name + ": " + e.what());
  }
  if (!truth.is_array() || truth.size() != videos.size()) {
    fail(ErrorCode::kLengthMismatch, "ground truth for " + name + " does not match its dataset");
  }
  std::vector<CorpusItem> items;
  items.reserve(videos.size());
  try {
    for (std::size_t i = 0; i < videos.size(); ++i) {
      const auto& t = truth[i];
      if (t.at("id").get<std::string>() != videos[i].meta().origin_id) {
        fail(ErrorCode::kFormatError, "ground truth id mismatch in " + name);
      }
      GroundTruth g;
      const auto& k = t.at("knobs");
      g.knobs = QualityKnobs{k.at("rho").get<double>(), k.at("jitter").get<double>(),
                             k.at("discontinuities").get<int>(), k.at("flicker").get<double>()};
      g.quality = t.at("quality").get<double>();
      g.aspects.scores = t.at("aspects").get<std::vector<double>>();
      items.push_back({std::move(videos[i]), std::move(g)});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kFormatError, "bad ground truth for " + name + ": " + e.what());
  }
  return items;
}

std::vector<LatentVideo> load_videos(const fs::path& dir, const std::string& name) {
  return load_dataset(dataset_path(dir, name));
}

std::string pairs_to_jsonl(std::span<const CorpusItem> items, std::span<const PairIndex> pairs) {
  std::string out;
  for (const auto& p : pairs) {
    ordered_json j = {{"first_id", items[p.first].video.meta().origin_id},
                      {"second_id", items[p.second].video.meta().origin_id},
                      {"label", to_string(p.label)}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<PairIndex> pairs_from_jsonl(std::span<const CorpusItem> items, const std::string& text) {
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < items.size(); ++i) index[items[i].video.meta().origin_id] = i;
  std::vector<PairIndex> pairs;
  std::istringstream in(text);
  std::string line;
  auto lookup = [&](const std::string& id) {
    auto it = index.find(id);
    if (it == index.end()) fail(ErrorCode::kFormatError, "pair refers to unknown id " + id);
    return it->second;
  };
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      pairs.push_back({lookup(j.at("first_id").get<std::string>()),
                       lookup(j.at("second_id").get<std::string>()),
                       preference_label_from_string(j.at("label").get<std::string>())});
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::kFormatError, std::string("bad pair line: ") + e.what());
    }
  }
  return pairs;
}

}  // namespace svj::cli
