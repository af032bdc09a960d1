#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "midfea/image.hpp"

namespace midfea {

class PnmError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Decoded portable graymap / pixmap (P2, P3, P5, P6).
struct PnmImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 1;  // 1 for graymaps, 3 for pixmaps
  std::uint32_t maxval = 255;
  std::vector<std::uint16_t> samples;  // row-major, channels interleaved
};

PnmImage decode_pnm(const std::string& bytes);
/// Errors carry the file path.
PnmImage read_pnm(const std::filesystem::path& path);

/// Intensities scaled to [0,1]; colour converted with 0.299 R + 0.587 G + 0.114 B.
GrayImage to_gray(const PnmImage& img);
GrayImage load_gray(const std::filesystem::path& path);

/// Binary 8-bit graymap (P5). Values are clamped to [0,255] and rounded.
std::string encode_pgm(const Matrix& values);
void write_pgm(const std::filesystem::path& path, const Matrix& values);

}  // namespace midfea
