#pragma once

#include <string>

#include "composer/raster.hpp"

namespace composer::gen {

// Binary PPM (P6, 8-bit), value = round(255 * v). Bit-exact goldens.
std::string encode_ppm(const ImageGrid& img);
ImageGrid decode_ppm(const std::string& bytes);

void write_ppm(const std::string& path, const ImageGrid& img);
ImageGrid read_ppm(const std::string& path);

}  // namespace composer::gen
