#include "midfea/image.hpp"

#include <stdexcept>

namespace midfea {

GrayImage::GrayImage(Matrix pixels) : pixels_(std::move(pixels)) {
  for (double v : pixels_.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("GrayImage: intensity outside [0,1]");
  }
}

GrayImage::GrayImage(std::size_t height, std::size_t width, std::vector<double> pixels)
    : GrayImage(Matrix(height, width, std::move(pixels))) {}

}  // namespace midfea
