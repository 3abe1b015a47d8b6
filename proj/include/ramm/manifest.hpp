#pragma once

#include <map>
#include <string>
#include <vector>

namespace ramm {

inline constexpr const char* kArtifactVersion = "ramm-0.1.0";

std::string fnv1a64_hex(const std::string& data);
std::string file_hash_hex(const std::string& path);

// Every CLI run writes one of these next to its primary output so any
// artifact can be traced back to the exact command, config and inputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::string config_json;
  std::string config_hash;
  uint64_t seed = 0;
  std::map<std::string, std::string> input_hashes;   // path -> hash
  std::vector<std::string> outputs;
};

void write_manifest(const std::string& path, const RunManifest& m);

}  // namespace ramm
