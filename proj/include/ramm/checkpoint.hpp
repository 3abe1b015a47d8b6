#pragma once

#include <functional>
#include <map>
#include <string>

#include "ramm/binary_io.hpp"

namespace ramm {

// Versioned checkpoint container: magic "RMCK", version, then tagged
// sections {tag[4], u64 byte length, payload}. Unknown sections are
// skippable; the encoder and generator share this container with distinct
// tags.
class CheckpointFile {
 public:
  void set(const std::string& tag,
           const std::function<void(BinWriter&)>& write_payload);
  void save(const std::string& path) const;

  static CheckpointFile load(const std::string& path);
  bool has(const std::string& tag) const { return sections_.count(tag) > 0; }
  BinReader reader(const std::string& tag) const;
  std::vector<std::string> tags() const;

 private:
  std::map<std::string, std::string> sections_;  // tag -> payload bytes
};

}  // namespace ramm
