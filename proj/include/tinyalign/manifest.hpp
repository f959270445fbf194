#pragma once

// Run manifests: a JSON record of the resolved command line, input file
// digests and produced outputs, written alongside every file a command
// produces. Re-running the recorded argv against unchanged inputs
// reproduces the outputs byte for byte; the `replay` subcommand does
// exactly that.

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tinyalign/core.hpp"

namespace tinyalign {

// FNV-1a 64 digest of the file bytes, hex encoded.
inline std::string file_digest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  const std::string bytes = buffer.str();
  char hex[32];
  std::snprintf(hex, sizeof(hex), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return hex;
}

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;  // everything after the program name
  std::map<std::string, std::string> inputs;  // path -> digest
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["tool"] = "tinyalign";
    j["version"] = std::string(kVersion);
    j["command"] = command;
    j["argv"] = argv;
    j["inputs"] = inputs;
    j["outputs"] = outputs;
    j["seed"] = seed;
    return j;
  }

  static RunManifest from_json(const nlohmann::json& j) {
    RunManifest manifest;
    manifest.command = j.at("command").get<std::string>();
    manifest.argv = j.at("argv").get<std::vector<std::string>>();
    if (j.contains("inputs")) {
      manifest.inputs = j.at("inputs").get<std::map<std::string,
                                                    std::string>>();
    }
    if (j.contains("outputs")) {
      manifest.outputs = j.at("outputs").get<std::vector<std::string>>();
    }
    if (j.contains("seed")) manifest.seed = j.at("seed").get<std::uint64_t>();
    return manifest;
  }
};

inline void write_manifest(const std::filesystem::path& path,
                           const RunManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest.to_json().dump(2) << '\n';
}

inline RunManifest read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  try {
    return RunManifest::from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace tinyalign
