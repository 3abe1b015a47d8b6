#include "ramm/manifest.hpp"

#include <chrono>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace ramm {

std::string fnv1a64_hex(const std::string& data) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot hash missing file: " + path);
  std::string data((std::istreambuf_iterator<char>(f)),
                   std::istreambuf_iterator<char>());
  return fnv1a64_hex(data);
}

void write_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["version"] = kArtifactVersion;
  j["command"] = m.command;
  j["argv"] = m.argv;
  j["config"] = nlohmann::json::parse(m.config_json.empty() ? "{}"
                                                            : m.config_json);
  j["config_hash"] = m.config_hash;
  j["seed"] = m.seed;
  j["inputs"] = m.input_hashes;
  j["outputs"] = m.outputs;
  j["timestamp_unix_ms"] =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::system_clock::now().time_since_epoch())
          .count();
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write manifest: " + path);
  f << j.dump(2) << '\n';
}

}  // namespace ramm
