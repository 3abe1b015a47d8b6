#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "ramm/codebook.hpp"
#include "ramm/document.hpp"
#include "ramm/text_vocab.hpp"

namespace ramm {

// Unified token id space: reserved structural ids, then text words, then
// image codes.
struct VocabLayout {
  int text_size = 0;
  int codebook_size = 0;

  int text_base() const { return kNumReservedIds; }
  int image_base() const { return kNumReservedIds + text_size; }
  int total() const { return image_base() + codebook_size; }

  bool is_structural(int id) const { return id >= 0 && id < kNumReservedIds; }
  bool is_text(int id) const { return id >= text_base() && id < image_base(); }
  bool is_image(int id) const { return id >= image_base() && id < total(); }
  bool is_content(int id) const { return is_text(id) || is_image(id); }

  int image_code(int id) const { return id - image_base(); }
  int image_id(int code) const { return image_base() + code; }

  static VocabLayout from(const TextVocab& tv, const Codebook& cb) {
    return VocabLayout{tv.size(), cb.k()};
  }
};

enum class Role : uint8_t { retrieved, main };

// The generator's wire format: a flat id sequence plus role metadata and
// the spans of the prepended documents.
struct TokenStream {
  std::vector<int> tokens;
  std::vector<Role> roles;
  // [begin, end) token spans of the prepended retrieved documents, in
  // context order (separators excluded).
  std::vector<std::pair<int, int>> doc_boundaries;
  int main_begin = 0;

  int size() const { return static_cast<int>(tokens.size()); }
  void push(int token, Role role) {
    tokens.push_back(token);
    roles.push_back(role);
  }
  bool operator==(const TokenStream&) const = default;
};

// Throws std::invalid_argument if lengths mismatch, roles are not a
// retrieved-prefix/main-suffix partition, or main_begin is inconsistent.
void validate_stream(const TokenStream& s);

// HTML-like layout: a text segment immediately followed by an image segment
// becomes `<img alt=` [text] `src=` [image] `>`; a lone text segment is its
// bare word tokens; a lone image segment is an `<img ...>` block with empty
// alt. All roles are `main`.
TokenStream serialize_document(const Document& doc, const TextVocab& tv,
                               const Codebook& cb);

// Inverse of serialize_document up to codebook quantization of images.
Document deserialize_document(const std::vector<int>& tokens,
                              const TextVocab& tv, const Codebook& cb,
                              int image_size);

// Concatenates retrieved streams and the main stream with an <eos> boundary
// token after each retrieved document. Prepended tokens get Role::retrieved.
// Throws on overflow of max_seq_len.
TokenStream build_training_sequence(const std::vector<TokenStream>& retrieved,
                                    const TokenStream& main,
                                    int max_seq_len);

}  // namespace ramm
