#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ramm {

struct Image {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> rgb;  // row-major, 3 bytes per pixel

  bool empty() const { return rgb.empty(); }
  size_t pixel_count() const { return static_cast<size_t>(width) * height; }
  uint8_t* at(int x, int y) { return rgb.data() + 3 * (y * width + x); }
  const uint8_t* at(int x, int y) const {
    return rgb.data() + 3 * (y * width + x);
  }
  bool operator==(const Image&) const = default;
};

enum class SegmentKind { text, image };

struct Segment {
  SegmentKind kind = SegmentKind::text;
  std::string text;  // kind == text
  Image pixels;      // kind == image

  // Patch indices surviving query dropout; empty means "all patches".
  // Only meaningful on transient retrieval-query documents, never persisted.
  std::vector<int> kept_patches;

  static Segment make_text(std::string t) {
    Segment s;
    s.kind = SegmentKind::text;
    s.text = std::move(t);
    return s;
  }
  static Segment make_image(Image img) {
    Segment s;
    s.kind = SegmentKind::image;
    s.pixels = std::move(img);
    return s;
  }
  bool operator==(const Segment&) const = default;
};

enum class Split { train, memory, heldout };

std::string split_name(Split s);
Split split_from_name(const std::string& name);

struct Document {
  std::string id;
  std::vector<Segment> segments;
  Split split = Split::train;

  bool operator==(const Document&) const = default;
};

// Throws std::invalid_argument on violation of the document invariants:
// non-empty segment list, non-empty text segments, square non-empty images.
void validate_document(const Document& doc);

// Concatenated text of all text segments (single space between segments),
// or nullopt if the document has no text part.
std::optional<std::string> text_part(const Document& doc);

// True if the document has at least one image segment.
bool has_image_part(const Document& doc);

// Document views used as retrieval queries (text part / image part only).
Document text_part_doc(const Document& doc);
Document image_part_doc(const Document& doc);

}  // namespace ramm
