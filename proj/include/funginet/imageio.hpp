#pragma once

#include <string>

#include "funginet/image.hpp"

namespace funginet {

// Decoding boundary: file parsing is delegated to a standard decoder; the
// numerical pipeline only ever sees RGB ImageBuffers.

// Throws std::runtime_error when the file is missing or not decodable.
ImageBuffer decode_image_file(const std::string& path);

bool try_decode_image_file(const std::string& path, ImageBuffer& out);

// Writes a PNG (used by tooling and test fixtures).
void encode_png(const std::string& path, const ImageBuffer& img);

}  // namespace funginet
