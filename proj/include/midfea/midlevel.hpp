#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "midfea/image.hpp"
#include "midfea/lowlevel.hpp"
#include "midfea/matrix.hpp"
#include "midfea/rng.hpp"

namespace midfea {

/// VQ dictionary, one codeword per column.
class Codebook {
 public:
  Codebook() = default;
  explicit Codebook(Matrix words);

  std::size_t size() const { return words_.cols(); }
  std::size_t dim() const { return words_.rows(); }
  const Matrix& words() const { return words_; }
  /// Codeword j as a contiguous span.
  std::span<const double> word(std::size_t j) const { return rows_.row(j); }

 private:
  Matrix words_;
  Matrix rows_;  // transpose of words_
};

Codebook learn_codebook(std::span<const DescriptorField> fields, std::size_t m,
                        std::size_t sample_cap, SeededRng& rng, std::size_t kmeans_iters = 100);

/// Codeword indices of descriptors sampled on a regular grid.
struct CodeMap {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t stride = 1;  // descriptor-grid step between codes
  std::vector<std::uint32_t> codes;

  std::uint32_t at(std::size_t r, std::size_t c) const { return codes[r * cols + c]; }
  /// Image pixels between neighbouring codes (each descriptor step spans
  /// two pixels after 3D pooling).
  std::size_t pixel_step() const { return 2 * stride; }
};

/// Index of the nearest codeword (squared Euclidean; ties to the lowest index).
std::uint32_t nearest_codeword(std::span<const double> descriptor, const Codebook& cb);

/// Hard VQ of descriptors (r*stride, c*stride).
CodeMap vq_encode(const DescriptorField& field, const Codebook& cb, std::size_t stride = 1);

/// Pooling regions over a code map.
struct PartitionSpec {
  enum class Kind { Pyramid, Grid, Overlap };
  Kind kind = Kind::Pyramid;
  std::size_t levels = 3;         // pyramid
  std::size_t grid_rows = 1;      // grid
  std::size_t grid_cols = 1;
  std::size_t cell_pixels = 8;    // overlap
  std::size_t stride_pixels = 8;

  static PartitionSpec pyramid(std::size_t levels);
  static PartitionSpec grid(std::size_t rows, std::size_t cols);
  static PartitionSpec overlap(std::size_t cell_pixels, std::size_t stride_pixels);

  /// "pyramid:L", "grid:RxC" or "overlap:CELL,STRIDE".
  static PartitionSpec parse(const std::string& text);
  std::string to_string() const;

  friend bool operator==(const PartitionSpec&, const PartitionSpec&) = default;
};

/// Half-open range of code-map rows and columns.
struct Region {
  std::size_t row_begin, row_end, col_begin, col_end;
  bool empty() const { return row_begin >= row_end || col_begin >= col_end; }
};

/// Regions in concatenation order: pyramid coarse level first, row-major
/// within a level; overlap windows row-major. Overlap windows are laid out
/// in image pixels and mapped onto codes through CodeMap::pixel_step().
std::vector<Region> partition_regions(const PartitionSpec& part, std::size_t rows, std::size_t cols,
                                      std::size_t pixel_step);

/// Max-pooled one-hot codes: entry (region, word) is 1 when the word occurs
/// in the region. Empty regions give zero blocks.
std::vector<double> spatial_pool(const CodeMap& codes, std::size_t cb_size, const PartitionSpec& part);

/// out_dim x in_dim matrix of i.i.d. N(0, 1/out_dim) entries.
Matrix projection_matrix(std::size_t in_dim, std::size_t out_dim, SeededRng& rng);

/// Unit-length projected feature (all-zero for degenerate input).
struct MidFeature {
  std::vector<double> values;
  std::size_t dim() const { return values.size(); }
};

MidFeature project_normalize(std::span<const double> v, const Matrix& projection);

/// Everything needed to turn an image into a MidFeature.
struct PipelineModel {
  FilterBank filters;
  Codebook codebook;
  PartitionSpec partition;
  Matrix projection;
  std::size_t vq_stride = 1;

  /// Writes filters.{mat,txt}, codebook.mat, projection.mat and pipeline.txt.
  void save(const std::filesystem::path& dir) const;
  static PipelineModel load(const std::filesystem::path& dir);
};

MidFeature extract_midfeature(const Matrix& intensities, const PipelineModel& model);
MidFeature extract_midfeature(const GrayImage& img, const PipelineModel& model);

}  // namespace midfea
