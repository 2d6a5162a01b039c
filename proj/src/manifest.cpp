#include "ecg/manifest.hpp"

#include <fstream>
#include <json.hpp>

#include "ecg/errors.hpp"

namespace ecg {

void write_manifest(const RunManifest& manifest,
                    const std::filesystem::path& path) {
  nlohmann::json doc;
  doc["subcommand"] = manifest.subcommand;
  doc["version"] = manifest.version;
  doc["seed"] = manifest.seed;
  doc["host"] = manifest.host;
  doc["argv"] = manifest.argv;
  doc["config"] = manifest.config;
  doc["inputs"] = manifest.inputs;
  doc["outputs"] = manifest.outputs;

  std::ofstream out(path);
  if (!out) throw IoFailure("cannot open " + path.string() + " for writing");
  out << doc.dump(2) << "\n";
  if (!out) throw IoFailure("write failed for " + path.string());
}

}  // namespace ecg
