#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace ecg {

inline constexpr const char* kToolVersion = "0.1.0";

/// Everything needed to replay a CLI run: the subcommand, every resolved
/// flag value, the seed, and the involved paths. No timestamps, so repeated
/// identical runs produce identical manifests.
struct RunManifest {
  std::string subcommand;
  std::uint64_t seed = 0;
  std::vector<std::string> argv;
  std::map<std::string, std::string> config;  // flag -> resolved value
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string host;
  std::string version = kToolVersion;
};

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path);

}  // namespace ecg
