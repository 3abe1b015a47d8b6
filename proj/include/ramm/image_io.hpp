#pragma once

#include <string>

#include "ramm/document.hpp"

namespace ramm {

// Minimal PNG support: 8-bit RGB written, 8-bit RGB/RGBA (non-interlaced)
// read. Enough for corpus inspection and round-tripping our own outputs.
void write_png(const std::string& path, const Image& img);
Image read_png(const std::string& path);

std::string base64_encode(const uint8_t* data, size_t len);
std::vector<uint8_t> base64_decode(const std::string& text);

}  // namespace ramm
