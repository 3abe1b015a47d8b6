#pragma once

#include <map>
#include <string>
#include <vector>

#include "ramm/document.hpp"

namespace ramm {

// Reserved structural ids. Content tokens start at kNumReservedIds.
enum SpecialToken : int {
  kPadId = 0,
  kImgAltId = 1,  // "<img alt="
  kSrcId = 2,     // "src="
  kImgEndId = 3,  // ">"
  kMaskId = 4,    // "<mask>"
  kInfillId = 5,  // "<infill>"
  kEosId = 6,     // document boundary / terminator
  kLabelXId = 7,  // fresh non-semantic class labels, never produced by
  kLabelYId = 8,  // serialization; used by k-shot classification
  kNumReservedIds = 16,
};

const char* special_token_name(int id);

// Whitespace word-level vocabulary. Content ids are contiguous from
// kNumReservedIds in lexicographic word order. No UNK: out-of-vocabulary
// words are a hard error.
class TextVocab {
 public:
  TextVocab() = default;

  static TextVocab fit(const std::vector<Document>& corpus);

  std::vector<int> encode(const std::string& text) const;
  std::string decode(const std::vector<int>& ids) const;

  int id_of(const std::string& word) const;  // throws on unknown word
  const std::string& word_of(int id) const;  // throws on out-of-range id
  bool contains(const std::string& word) const {
    return word_to_id_.count(word) > 0;
  }

  // Number of content words (reserved ids excluded).
  int size() const { return static_cast<int>(words_.size()); }
  int first_id() const { return kNumReservedIds; }
  int end_id() const { return kNumReservedIds + size(); }
  const std::vector<std::string>& words() const { return words_; }

  void save(const std::string& path) const;
  static TextVocab load(const std::string& path);
  std::string dump_json() const;

  bool operator==(const TextVocab&) const = default;

 private:
  std::vector<std::string> words_;          // index = id - kNumReservedIds
  std::map<std::string, int> word_to_id_;   // word -> absolute id
};

std::vector<std::string> split_words(const std::string& text);

}  // namespace ramm
