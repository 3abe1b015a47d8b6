#include "ramm/corpus_io.hpp"

#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "ramm/image_io.hpp"

namespace ramm {

using nlohmann::json;

std::string document_to_json_line(const Document& doc) {
  json segs = json::array();
  for (const Segment& seg : doc.segments) {
    if (seg.kind == SegmentKind::text) {
      segs.push_back({{"kind", "text"}, {"text", seg.text}});
    } else {
      segs.push_back({{"kind", "image"},
                      {"image_b64", base64_encode(seg.pixels.rgb.data(),
                                                  seg.pixels.rgb.size())},
                      {"w", seg.pixels.width},
                      {"h", seg.pixels.height}});
    }
  }
  json j = {{"id", doc.id}, {"split", split_name(doc.split)},
            {"segments", segs}};
  return j.dump();
}

Document document_from_json_line(const std::string& line, size_t line_no) {
  auto fail = [line_no](const std::string& why) -> std::runtime_error {
    return std::runtime_error("corpus line " + std::to_string(line_no) + ": " +
                              why);
  };
  json j;
  try {
    j = json::parse(line);
  } catch (const json::exception& e) {
    throw fail(std::string("invalid JSON (") + e.what() + ")");
  }
  Document doc;
  try {
    doc.id = j.at("id").get<std::string>();
    doc.split = split_from_name(j.at("split").get<std::string>());
    for (const auto& s : j.at("segments")) {
      const std::string kind = s.at("kind").get<std::string>();
      if (kind == "text") {
        doc.segments.push_back(Segment::make_text(s.at("text")));
      } else if (kind == "image") {
        if (!s.contains("image_b64")) throw fail("image segment missing image_b64");
        Image img;
        img.width = s.at("w").get<int>();
        img.height = s.at("h").get<int>();
        img.rgb = base64_decode(s.at("image_b64").get<std::string>());
        if (img.rgb.size() != img.pixel_count() * 3)
          throw fail("image byte count does not match w*h*3");
        doc.segments.push_back(Segment::make_image(std::move(img)));
      } else {
        throw fail("unknown segment kind: " + kind);
      }
    }
  } catch (const json::exception& e) {
    throw fail(std::string("missing or mistyped field (") + e.what() + ")");
  }
  try {
    validate_document(doc);
  } catch (const std::invalid_argument& e) {
    throw fail(e.what());
  }
  return doc;
}

void save_corpus(const std::vector<Document>& docs, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("save_corpus: cannot open " + path);
  for (const Document& doc : docs) f << document_to_json_line(doc) << '\n';
  if (!f) throw std::runtime_error("save_corpus: write failed: " + path);
}

std::vector<Document> load_corpus(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_corpus: cannot open " + path);
  std::vector<Document> docs;
  std::string line;
  size_t line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    docs.push_back(document_from_json_line(line, line_no));
  }
  return docs;
}

}  // namespace ramm
