#include "ramm/text_vocab.hpp"

#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ramm/binary_io.hpp"

namespace ramm {

const char* special_token_name(int id) {
  switch (id) {
    case kPadId: return "<pad>";
    case kImgAltId: return "<img alt=";
    case kSrcId: return "src=";
    case kImgEndId: return ">";
    case kMaskId: return "<mask>";
    case kInfillId: return "<infill>";
    case kEosId: return "<eos>";
    case kLabelXId: return "<label-x>";
    case kLabelYId: return "<label-y>";
    default: return "<reserved>";
  }
}

std::vector<std::string> split_words(const std::string& text) {
  std::vector<std::string> words;
  std::istringstream is(text);
  std::string w;
  while (is >> w) words.push_back(w);
  return words;
}

TextVocab TextVocab::fit(const std::vector<Document>& corpus) {
  if (corpus.empty())
    throw std::invalid_argument("TextVocab::fit: empty corpus");
  std::set<std::string> unique;
  for (const Document& doc : corpus)
    for (const Segment& seg : doc.segments)
      if (seg.kind == SegmentKind::text)
        for (auto& w : split_words(seg.text)) unique.insert(std::move(w));
  TextVocab tv;
  tv.words_.assign(unique.begin(), unique.end());  // already lexicographic
  for (size_t i = 0; i < tv.words_.size(); ++i)
    tv.word_to_id_[tv.words_[i]] = kNumReservedIds + static_cast<int>(i);
  return tv;
}

int TextVocab::id_of(const std::string& word) const {
  auto it = word_to_id_.find(word);
  if (it == word_to_id_.end())
    throw std::invalid_argument("word not in vocabulary: '" + word + "'");
  return it->second;
}

const std::string& TextVocab::word_of(int id) const {
  int idx = id - kNumReservedIds;
  if (idx < 0 || idx >= size())
    throw std::invalid_argument("not a text token id: " + std::to_string(id));
  return words_[static_cast<size_t>(idx)];
}

std::vector<int> TextVocab::encode(const std::string& text) const {
  std::vector<int> ids;
  for (const auto& w : split_words(text)) ids.push_back(id_of(w));
  return ids;
}

std::string TextVocab::decode(const std::vector<int>& ids) const {
  std::string out;
  for (size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ' ';
    out += word_of(ids[i]);
  }
  return out;
}

namespace {
constexpr char kVocabMagic[4] = {'R', 'M', 'T', 'V'};
}

void TextVocab::save(const std::string& path) const {
  BinWriter w(path);
  write_magic(w, kVocabMagic, 1);
  w.u64(words_.size());
  for (const auto& word : words_) w.str(word);
  w.close();
}

TextVocab TextVocab::load(const std::string& path) {
  BinReader r(path);
  expect_magic(r, kVocabMagic, 1, "text vocab");
  uint64_t n = r.u64();
  TextVocab tv;
  tv.words_.reserve(n);
  for (uint64_t i = 0; i < n; ++i) tv.words_.push_back(r.str());
  for (size_t i = 0; i < tv.words_.size(); ++i)
    tv.word_to_id_[tv.words_[i]] = kNumReservedIds + static_cast<int>(i);
  return tv;
}

std::string TextVocab::dump_json() const {
  nlohmann::json j;
  j["reserved"] = nlohmann::json::object();
  for (int id = 0; id < kNumReservedIds; ++id)
    j["reserved"][std::to_string(id)] = special_token_name(id);
  j["first_content_id"] = first_id();
  j["words"] = words_;
  return j.dump(2);
}

}  // namespace ramm
