#include "ramm/stream.hpp"

#include <stdexcept>

namespace ramm {

void validate_stream(const TokenStream& s) {
  if (s.tokens.size() != s.roles.size())
    throw std::invalid_argument("stream: tokens/roles length mismatch");
  int first_main = s.size();
  for (int i = 0; i < s.size(); ++i) {
    if (s.roles[i] == Role::main) {
      first_main = i;
      break;
    }
  }
  for (int i = first_main; i < s.size(); ++i)
    if (s.roles[i] != Role::main)
      throw std::invalid_argument(
          "stream: roles must be a retrieved prefix followed by a main "
          "suffix");
  if (s.main_begin != first_main && !(first_main == s.size() && s.main_begin >= s.size()))
    throw std::invalid_argument("stream: main_begin inconsistent with roles");
}

TokenStream serialize_document(const Document& doc, const TextVocab& tv,
                               const Codebook& cb) {
  validate_document(doc);
  TokenStream out;
  auto push_text = [&](const std::string& text) {
    for (int id : tv.encode(text)) out.push(id, Role::main);
  };
  auto push_image = [&](const Image& img) {
    const VocabLayout layout = VocabLayout::from(tv, cb);
    for (int code : cb.tokenize(img))
      out.push(layout.image_id(code), Role::main);
  };

  const auto& segs = doc.segments;
  for (size_t i = 0; i < segs.size(); ++i) {
    if (segs[i].kind == SegmentKind::text && i + 1 < segs.size() &&
        segs[i + 1].kind == SegmentKind::image) {
      out.push(kImgAltId, Role::main);
      push_text(segs[i].text);
      out.push(kSrcId, Role::main);
      push_image(segs[i + 1].pixels);
      out.push(kImgEndId, Role::main);
      ++i;
    } else if (segs[i].kind == SegmentKind::text) {
      push_text(segs[i].text);
    } else {
      out.push(kImgAltId, Role::main);
      out.push(kSrcId, Role::main);
      push_image(segs[i].pixels);
      out.push(kImgEndId, Role::main);
    }
  }
  out.main_begin = 0;
  return out;
}

Document deserialize_document(const std::vector<int>& tokens,
                              const TextVocab& tv, const Codebook& cb,
                              int image_size) {
  const VocabLayout layout = VocabLayout::from(tv, cb);
  const int tpi = cb.tokens_per_image(image_size);
  Document doc;
  size_t i = 0;
  auto fail = [&](const std::string& why) -> std::invalid_argument {
    return std::invalid_argument("deserialize at token " + std::to_string(i) +
                                 ": " + why);
  };
  while (i < tokens.size()) {
    if (tokens[i] == kImgAltId) {
      ++i;
      std::vector<int> text_ids;
      while (i < tokens.size() && layout.is_text(tokens[i]))
        text_ids.push_back(tokens[i++]);
      if (i >= tokens.size() || tokens[i] != kSrcId)
        throw fail("expected src= after alt text");
      ++i;
      std::vector<int> codes;
      for (int t = 0; t < tpi; ++t, ++i) {
        if (i >= tokens.size() || !layout.is_image(tokens[i]))
          throw fail("expected " + std::to_string(tpi) + " image tokens");
        codes.push_back(layout.image_code(tokens[i]));
      }
      if (i >= tokens.size() || tokens[i] != kImgEndId)
        throw fail("expected > after image tokens");
      ++i;
      if (!text_ids.empty())
        doc.segments.push_back(Segment::make_text(tv.decode(text_ids)));
      doc.segments.push_back(
          Segment::make_image(cb.detokenize(codes, image_size)));
    } else if (layout.is_text(tokens[i])) {
      std::vector<int> text_ids;
      while (i < tokens.size() && layout.is_text(tokens[i]))
        text_ids.push_back(tokens[i++]);
      doc.segments.push_back(Segment::make_text(tv.decode(text_ids)));
    } else {
      throw fail("unexpected token id " + std::to_string(tokens[i]));
    }
  }
  if (doc.segments.empty()) throw fail("empty stream");
  return doc;
}

TokenStream build_training_sequence(const std::vector<TokenStream>& retrieved,
                                    const TokenStream& main,
                                    int max_seq_len) {
  size_t total = main.tokens.size();
  for (const auto& r : retrieved) total += r.tokens.size() + 1;
  if (total > static_cast<size_t>(max_seq_len))
    throw std::length_error("sequence of " + std::to_string(total) +
                            " tokens exceeds max_seq_len=" +
                            std::to_string(max_seq_len));
  TokenStream out;
  out.tokens.reserve(total);
  out.roles.reserve(total);
  for (const auto& r : retrieved) {
    int begin = out.size();
    for (int t : r.tokens) out.push(t, Role::retrieved);
    out.doc_boundaries.emplace_back(begin, out.size());
    out.push(kEosId, Role::retrieved);
  }
  out.main_begin = out.size();
  for (size_t i = 0; i < main.tokens.size(); ++i)
    out.push(main.tokens[i], Role::main);
  return out;
}

}  // namespace ramm
