#include "ramm/document.hpp"

#include <stdexcept>

namespace ramm {

std::string split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::memory: return "memory";
    case Split::heldout: return "heldout";
  }
  throw std::logic_error("split_name: bad enum");
}

Split split_from_name(const std::string& name) {
  if (name == "train") return Split::train;
  if (name == "memory") return Split::memory;
  if (name == "heldout") return Split::heldout;
  throw std::invalid_argument("unknown split name: " + name);
}

void validate_document(const Document& doc) {
  if (doc.segments.empty())
    throw std::invalid_argument("document " + doc.id + ": no segments");
  for (const Segment& seg : doc.segments) {
    if (seg.kind == SegmentKind::text) {
      if (seg.text.empty())
        throw std::invalid_argument("document " + doc.id +
                                    ": empty text segment");
    } else {
      if (seg.pixels.width <= 0 || seg.pixels.height <= 0 ||
          seg.pixels.rgb.size() != seg.pixels.pixel_count() * 3)
        throw std::invalid_argument("document " + doc.id +
                                    ": malformed image segment");
      if (seg.pixels.width != seg.pixels.height)
        throw std::invalid_argument("document " + doc.id +
                                    ": image segment is not square");
    }
  }
}

std::optional<std::string> text_part(const Document& doc) {
  std::string out;
  bool found = false;
  for (const Segment& seg : doc.segments) {
    if (seg.kind != SegmentKind::text) continue;
    if (found) out += ' ';
    out += seg.text;
    found = true;
  }
  if (!found) return std::nullopt;
  return out;
}

bool has_image_part(const Document& doc) {
  for (const Segment& seg : doc.segments)
    if (seg.kind == SegmentKind::image) return true;
  return false;
}

Document text_part_doc(const Document& doc) {
  Document out;
  out.id = doc.id;
  out.split = doc.split;
  auto text = text_part(doc);
  if (!text) throw std::invalid_argument("text_part_doc: no text segment");
  out.segments.push_back(Segment::make_text(*text));
  return out;
}

Document image_part_doc(const Document& doc) {
  Document out;
  out.id = doc.id;
  out.split = doc.split;
  for (const Segment& seg : doc.segments)
    if (seg.kind == SegmentKind::image) out.segments.push_back(seg);
  if (out.segments.empty())
    throw std::invalid_argument("image_part_doc: no image segment");
  return out;
}

}  // namespace ramm
