#include "midfea/lowlevel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <string>

#include "midfea/kmeans.hpp"
#include "midfea/matrix_io.hpp"

namespace midfea {

FilterBank::FilterBank(std::size_t side, Matrix filters) : side_(side), filters_(std::move(filters)) {
  if (side_ == 0) throw std::invalid_argument("FilterBank: side must be positive");
  if (filters_.rows() != side_ * side_) {
    throw std::invalid_argument("FilterBank: filter length " + std::to_string(filters_.rows()) +
                                " does not match side " + std::to_string(side_));
  }
  if (filters_.cols() < 2) throw std::invalid_argument("FilterBank: need at least 2 filters");
}

void FilterBank::save(const std::filesystem::path& stem) const {
  write_matrix(std::filesystem::path(stem).concat(".mat"), filters_);
  std::ofstream meta(std::filesystem::path(stem).concat(".txt"));
  if (!meta) throw std::runtime_error("cannot write " + stem.string() + ".txt");
  meta << side_ << ' ' << count() << '\n';
}

FilterBank FilterBank::load(const std::filesystem::path& stem) {
  const auto meta_path = std::filesystem::path(stem).concat(".txt");
  std::ifstream meta(meta_path);
  if (!meta) throw std::runtime_error("cannot open " + meta_path.string());
  std::size_t side = 0, count = 0;
  if (!(meta >> side >> count)) throw std::runtime_error(meta_path.string() + ": malformed sidecar");
  Matrix filters = read_matrix(std::filesystem::path(stem).concat(".mat"));
  if (filters.cols() != count) {
    throw std::runtime_error(meta_path.string() + ": filter count disagrees with matrix file");
  }
  return FilterBank(side, std::move(filters));
}

FilterBank learn_filters(std::span<const GrayImage> images, std::size_t side, std::size_t count,
                         std::size_t patches_per_image, SeededRng& rng, std::size_t kmeans_iters) {
  if (count < 2) throw std::invalid_argument("learn_filters: count must be at least 2");
  if (side == 0) throw std::invalid_argument("learn_filters: side must be positive");
  const std::size_t len = side * side;
  std::vector<std::vector<double>> patches;
  std::vector<double> patch(len);

  for (const auto& img : images) {
    if (img.height() < side || img.width() < side) {
      throw std::invalid_argument("learn_filters: image smaller than filter side");
    }
    for (std::size_t s = 0; s < patches_per_image; ++s) {
      const std::size_t y0 = rng.below(img.height() - side + 1);
      const std::size_t x0 = rng.below(img.width() - side + 1);
      double mean = 0.0;
      for (std::size_t u = 0; u < side; ++u)
        for (std::size_t v = 0; v < side; ++v) {
          patch[u * side + v] = img(y0 + u, x0 + v);
          mean += patch[u * side + v];
        }
      mean /= static_cast<double>(len);
      for (double& p : patch) p -= mean;
      const double n = euclidean_norm(patch);
      // A flat patch leaves only rounding residue after mean removal.
      if (n < 1e-8) continue;
      for (double& p : patch) p /= n;
      patches.push_back(patch);
    }
  }
  if (patches.size() < count) {
    throw std::invalid_argument("learn_filters: only " + std::to_string(patches.size()) +
                                " non-flat patches for " + std::to_string(count) + " filters");
  }
  return FilterBank(side, kmeans(Matrix::from_columns(patches), count, rng, kmeans_iters));
}

namespace {

void normalize_fibers(Tensor3& t) {
  for (std::size_t y = 0; y < t.height(); ++y)
    for (std::size_t x = 0; x < t.width(); ++x) {
      auto f = t.fiber(y, x);
      const double n = euclidean_norm(f);
      if (n < kNormEpsilon) {
        std::fill(f.begin(), f.end(), 0.0);
      } else {
        for (double& v : f) v /= n;
      }
    }
}

void threshold_at_mean(Tensor3& t) {
  const double depth = static_cast<double>(t.depth());
  for (std::size_t y = 0; y < t.height(); ++y)
    for (std::size_t x = 0; x < t.width(); ++x) {
      auto f = t.fiber(y, x);
      double sum = 0.0;
      for (double v : f) sum += v;
      const double mean = sum / depth;
      for (double& v : f)
        if (v < mean) v = 0.0;
    }
}

Tensor3 correlate(const Matrix& img, const FilterBank& bank) {
  const std::size_t side = bank.side();
  if (img.rows() < side || img.cols() < side) {
    throw std::invalid_argument("soft_convolve: image " + std::to_string(img.rows()) + "x" +
                                std::to_string(img.cols()) + " smaller than filter side " +
                                std::to_string(side));
  }
  const std::size_t oh = img.rows() - side + 1;
  const std::size_t ow = img.cols() - side + 1;
  const std::size_t k = bank.count();
  // Filters transposed to one contiguous row per filter.
  const Matrix ft = bank.filters().transpose();
  Tensor3 out(oh, ow, k);
  std::vector<double> window(side * side);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      for (std::size_t u = 0; u < side; ++u) {
        auto src = img.row(y + u).subspan(x, side);
        std::copy(src.begin(), src.end(), window.begin() + static_cast<std::ptrdiff_t>(u * side));
      }
      auto f = out.fiber(y, x);
      for (std::size_t j = 0; j < k; ++j) f[j] = dot(ft.row(j), window);
    }
  return out;
}

void rectify(Tensor3& t) {
  for (double& v : t.data())
    if (v < 0.0) v = 0.0;
}

}  // namespace

Tensor3 soft_convolve(const Matrix& intensities, const FilterBank& bank) {
  Tensor3 t = correlate(intensities, bank);
  rectify(t);
  normalize_fibers(t);
  threshold_at_mean(t);
  normalize_fibers(t);
  return t;
}

Tensor3 soft_convolve(const GrayImage& img, const FilterBank& bank) {
  return soft_convolve(img.pixels(), bank);
}

SoftConvStages soft_convolve_stages(const Matrix& intensities, const FilterBank& bank) {
  SoftConvStages s;
  s.raw = correlate(intensities, bank);
  s.normalized = s.raw;
  rectify(s.normalized);
  normalize_fibers(s.normalized);
  s.thresholded = s.normalized;
  threshold_at_mean(s.thresholded);
  s.final_maps = s.thresholded;
  normalize_fibers(s.final_maps);
  return s;
}

std::size_t pair_index(std::size_t i, std::size_t j, std::size_t depth) {
  // Pairs (0,1)..(0,depth-1) come first, then (1,2)..., and so on.
  return i * depth - i * (i + 1) / 2 + (j - i - 1);
}

Tensor3 max_pool_3d(const Tensor3& stack) {
  const std::size_t d = stack.depth();
  if (d < 2) throw std::invalid_argument("max_pool_3d: depth must be at least 2");
  const std::size_t oh = stack.height() / 2;
  const std::size_t ow = stack.width() / 2;
  const std::size_t od = d * (d - 1) / 2;
  Tensor3 out(oh, ow, od);
  std::vector<double> local(d);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      // Spatial max per map first; the pair max is the max of two of those.
      for (std::size_t k = 0; k < d; ++k) {
        local[k] = std::max(std::max(stack(2 * y, 2 * x, k), stack(2 * y, 2 * x + 1, k)),
                            std::max(stack(2 * y + 1, 2 * x, k), stack(2 * y + 1, 2 * x + 1, k)));
      }
      auto f = out.fiber(y, x);
      std::size_t p = 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) f[p++] = std::max(local[i], local[j]);
    }
  return out;
}

DescriptorField assemble_descriptors(const Tensor3& pooled) {
  if (pooled.height() < 2 || pooled.width() < 2) {
    throw std::invalid_argument("assemble_descriptors: pooled maps must be at least 2x2");
  }
  const std::size_t gh = pooled.height() - 1;
  const std::size_t gw = pooled.width() - 1;
  const std::size_t d = pooled.depth();
  Tensor3 out(gh, gw, 4 * d);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c) {
      auto f = out.fiber(r, c);
      for (std::size_t m = 0; m < d; ++m) {
        f[4 * m + 0] = pooled(r, c, m);
        f[4 * m + 1] = pooled(r, c + 1, m);
        f[4 * m + 2] = pooled(r + 1, c, m);
        f[4 * m + 3] = pooled(r + 1, c + 1, m);
      }
    }
  return DescriptorField(std::move(out));
}

}  // namespace midfea
