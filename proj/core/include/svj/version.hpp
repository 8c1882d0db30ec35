#pragma once

#include <string>

namespace svj {

struct BuildInfo {
  std::string svj;
  std::string eigen;
  std::string nlohmann_json;
  std::string compiler;
};

// Versions baked in at compile time; recorded in every run manifest.
BuildInfo build_info();

}  // namespace svj
