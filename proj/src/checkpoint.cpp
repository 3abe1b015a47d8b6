#include "ramm/checkpoint.hpp"

#include <stdexcept>

namespace ramm {

namespace {
constexpr char kCheckpointMagic[4] = {'R', 'M', 'C', 'K'};
}

void CheckpointFile::set(
    const std::string& tag,
    const std::function<void(BinWriter&)>& write_payload) {
  if (tag.size() != 4)
    throw std::invalid_argument("checkpoint section tag must be 4 bytes");
  std::string payload;
  BinWriter w(&payload);
  write_payload(w);
  sections_[tag] = std::move(payload);
}

void CheckpointFile::save(const std::string& path) const {
  BinWriter w(path);
  write_magic(w, kCheckpointMagic, 1);
  for (const auto& [tag, payload] : sections_) {
    w.bytes(tag.data(), 4);
    w.u64(payload.size());
    w.bytes(payload.data(), payload.size());
  }
  w.close();
}

CheckpointFile CheckpointFile::load(const std::string& path) {
  BinReader r(path);
  expect_magic(r, kCheckpointMagic, 1, "checkpoint");
  CheckpointFile ck;
  while (!r.eof()) {
    char tag[4];
    r.bytes(tag, 4);
    uint64_t len = r.u64();
    std::string payload(len, '\0');
    r.bytes(payload.data(), len);
    ck.sections_[std::string(tag, 4)] = std::move(payload);
  }
  return ck;
}

BinReader CheckpointFile::reader(const std::string& tag) const {
  auto it = sections_.find(tag);
  if (it == sections_.end())
    throw std::runtime_error("checkpoint has no '" + tag + "' section");
  return BinReader(it->second.data(), it->second.size());
}

std::vector<std::string> CheckpointFile::tags() const {
  std::vector<std::string> out;
  for (const auto& [tag, _] : sections_) out.push_back(tag);
  return out;
}

}  // namespace ramm
