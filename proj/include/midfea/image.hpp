#pragma once

#include <cstddef>
#include <vector>

#include "midfea/matrix.hpp"

namespace midfea {

/// Grayscale image with intensities in [0, 1].
class GrayImage {
 public:
  GrayImage() = default;
  /// Throws std::invalid_argument if any pixel falls outside [0, 1].
  explicit GrayImage(Matrix pixels);
  GrayImage(std::size_t height, std::size_t width, std::vector<double> pixels);

  std::size_t height() const { return pixels_.rows(); }
  std::size_t width() const { return pixels_.cols(); }
  double operator()(std::size_t y, std::size_t x) const { return pixels_(y, x); }
  const Matrix& pixels() const { return pixels_; }

 private:
  Matrix pixels_;
};

}  // namespace midfea
