#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "midfea/image.hpp"
#include "midfea/matrix.hpp"
#include "midfea/rng.hpp"

namespace midfea {

/// Per-location vectors with norm below this are treated as zero.
inline constexpr double kNormEpsilon = 1e-12;

/// Square low-level filters, one flattened (row-major) patch per column.
class FilterBank {
 public:
  FilterBank() = default;
  /// `filters` is side*side x count; count must be at least 2.
  FilterBank(std::size_t side, Matrix filters);

  std::size_t side() const { return side_; }
  std::size_t count() const { return filters_.cols(); }
  const Matrix& filters() const { return filters_; }

  /// Writes `<stem>.mat` and the `<stem>.txt` sidecar ("<side> <count>").
  void save(const std::filesystem::path& stem) const;
  static FilterBank load(const std::filesystem::path& stem);

 private:
  std::size_t side_ = 0;
  Matrix filters_;
};

/// Samples random patches, removes each patch's mean, scales it to unit
/// norm (dropping flat patches) and clusters them with k-means.
FilterBank learn_filters(std::span<const GrayImage> images, std::size_t side, std::size_t count,
                         std::size_t patches_per_image, SeededRng& rng,
                         std::size_t kmeans_iters = 100);

/// Intermediate maps of the soft convolution, in pipeline order.
struct SoftConvStages {
  Tensor3 raw;          // valid correlation responses
  Tensor3 normalized;   // rectified, unit norm along depth
  Tensor3 thresholded;  // entries below the depth mean zeroed
  Tensor3 final_maps;   // renormalized along depth
};

/// Soft convolution: valid correlation with every filter, half-wave
/// rectification, per-location L2 normalization across maps, mean-map
/// thresholding, and a second per-location normalization. Output is
/// (h-side+1) x (w-side+1) x count with entries in [0, 1].
///
/// Accepts any finite intensity grid, not only [0,1] images, so scaled
/// inputs can be fed directly.
Tensor3 soft_convolve(const Matrix& intensities, const FilterBank& bank);
Tensor3 soft_convolve(const GrayImage& img, const FilterBank& bank);
SoftConvStages soft_convolve_stages(const Matrix& intensities, const FilterBank& bank);

/// Max over 2x2 spatial blocks spanning each unordered pair (i<j) of maps.
/// Output depth C(depth,2) in lexicographic pair order; odd trailing
/// rows/columns are dropped.
Tensor3 max_pool_3d(const Tensor3& stack);

/// Index of pair (i, j), i < j, in the lexicographic order used by max_pool_3d.
std::size_t pair_index(std::size_t i, std::size_t j, std::size_t depth);

/// Grid of local descriptors; descriptor (r, c) has dim() entries.
class DescriptorField {
 public:
  DescriptorField() = default;
  explicit DescriptorField(Tensor3 values) : values_(std::move(values)) {}

  std::size_t height() const { return values_.height(); }
  std::size_t width() const { return values_.width(); }
  std::size_t dim() const { return values_.depth(); }
  std::size_t count() const { return height() * width(); }
  std::span<const double> descriptor(std::size_t r, std::size_t c) const { return values_.fiber(r, c); }
  const Tensor3& values() const { return values_; }

 private:
  Tensor3 values_;
};

/// Concatenates, for every map, the overlapping 2x2 neighbourhood
/// (r,c), (r,c+1), (r+1,c), (r+1,c+1). Grid (h-1) x (w-1), dim 4*depth.
DescriptorField assemble_descriptors(const Tensor3& pooled);

}  // namespace midfea
