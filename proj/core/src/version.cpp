#include "svj/version.hpp"

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#ifndef SVJ_VERSION
#define SVJ_VERSION "unknown"
#endif

namespace svj {

BuildInfo build_info() {
  auto dotted = [](int a, int b, int c) {
    return std::to_string(a) + "." + std::to_string(b) + "." + std::to_string(c);
  };
  BuildInfo info;
  info.svj = SVJ_VERSION;
  info.eigen = dotted(EIGEN_WORLD_VERSION, EIGEN_MAJOR_VERSION, EIGEN_MINOR_VERSION);
  info.nlohmann_json = dotted(NLOHMANN_JSON_VERSION_MAJOR, NLOHMANN_JSON_VERSION_MINOR,
                              NLOHMANN_JSON_VERSION_PATCH);
#if defined(__clang__)
  info.compiler = "clang " __clang_version__;
#elif defined(__GNUC__)
  info.compiler = "gcc " __VERSION__;
#else
  info.compiler = "unknown";
#endif
  return info;
}

}  // namespace svj
