#pragma once

#include <string>
#include <vector>

#include "ramm/document.hpp"

namespace ramm {

// Line-delimited JSON corpus:
//   {"id": ..., "split": ..., "segments": [{"kind":"text","text":...} |
//    {"kind":"image","image_b64":...,"w":...,"h":...}]}
// Round trip is lossless. Malformed records raise with the line number.
void save_corpus(const std::vector<Document>& docs, const std::string& path);
std::vector<Document> load_corpus(const std::string& path);

std::string document_to_json_line(const Document& doc);
Document document_from_json_line(const std::string& line, size_t line_no);

}  // namespace ramm
