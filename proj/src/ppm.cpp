#include "composer/ppm.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace composer::gen {

std::string encode_ppm(const ImageGrid& img) {
  std::string out = "P6\n64 64\n255\n";
  out.reserve(out.size() + img.data.size());
  for (double v : img.data) {
    long q = std::lround(255.0 * v);
    q = std::clamp(q, 0L, 255L);
    out.push_back(static_cast<char>(static_cast<unsigned char>(q)));
  }
  return out;
}

ImageGrid decode_ppm(const std::string& bytes) {
  std::istringstream in(bytes);
  std::string magic;
  int w = 0, h = 0, maxv = 0;
  in >> magic >> w >> h >> maxv;
  if (magic != "P6" || w != ImageGrid::kSize || h != ImageGrid::kSize || maxv != 255)
    throw std::runtime_error("decode_ppm: unsupported header");
  in.get();  // single whitespace after maxval
  ImageGrid img;
  for (double& v : img.data) {
    int c = in.get();
    if (c == EOF) throw std::runtime_error("decode_ppm: truncated pixel data");
    v = static_cast<double>(c) / 255.0;
  }
  return img;
}

void write_ppm(const std::string& path, const ImageGrid& img) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("write_ppm: cannot open " + tmp);
    std::string bytes = encode_ppm(img);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("write_ppm: cannot rename to " + path);
}

ImageGrid read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_ppm: cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return decode_ppm(ss.str());
}

}  // namespace composer::gen
