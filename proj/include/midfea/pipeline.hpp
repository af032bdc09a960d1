#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "midfea/config.hpp"
#include "midfea/image.hpp"
#include "midfea/midlevel.hpp"
#include "midfea/nslayer.hpp"

namespace midfea {

/// Wall-clock milliseconds per feed-forward stage.
struct StageTimings {
  static constexpr std::array<std::string_view, 7> kStageNames = {
      "soft convolution", "3D max-pooling", "local descriptor", "VQ",
      "SP pooling",       "random projection", "inference"};

  std::array<double, 7> ms{};
  double total() const;
};

/// Runs every stage of the feed-forward pipeline, timing each one. The
/// inference stage encodes with `ns` when given and is 0 otherwise.
MidFeature extract_timed(const Matrix& intensities, const PipelineModel& model, const ns::Model* ns,
                         StageTimings& timings);

/// Per-stage median over repeated runs; total() is the sum of the medians.
StageTimings bench_pipeline(const Matrix& intensities, const PipelineModel& model, const ns::Model* ns,
                            std::size_t repeats);

/// Learns filters, codebook and projection from training images.
PipelineModel learn_pipeline(std::span<const GrayImage> images, const RunConfig& cfg);

/// Length of the pooled vector an image of the given size produces.
std::size_t pooled_length(std::size_t height, std::size_t width, const RunConfig& cfg);

/// MidFeatures of all images as columns, computed on `threads` workers. The
/// result does not depend on the worker count.
Matrix extract_features(std::span<const GrayImage> images, const PipelineModel& model,
                        std::size_t threads = 1);

/// Baseline features: each image's pixels flattened row-major and scaled to
/// unit Euclidean length (zero images stay zero).
Matrix raw_pixel_features(std::span<const GrayImage> images);

}  // namespace midfea
