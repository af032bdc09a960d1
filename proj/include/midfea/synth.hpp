#pragma once

#include <cstddef>
#include <filesystem>

#include "midfea/dataset.hpp"
#include "midfea/image.hpp"
#include "midfea/rng.hpp"

namespace midfea {

struct SynthOptions {
  std::size_t classes = 4;
  std::size_t per_class = 80;
  std::size_t size = 64;
};

/// One oriented-texture image of class `cls`: a sinusoidal grating plus thin
/// bars, both at angle cls * 180 / classes degrees, with random phase and bar
/// offset, additive N(0, 0.05^2) noise and a brightness gain in [0.5, 2.0].
GrayImage synth_image(std::size_t cls, std::size_t classes, std::size_t size, SeededRng& rng);

/// Writes <out>/classNN/imgNNNN.pgm for every class plus <out>/manifest.tsv.
/// The first half of each class is the training split. Returns the manifest.
DatasetManifest write_synth_dataset(const std::filesystem::path& out, const SynthOptions& opts,
                                    SeededRng& rng);

}  // namespace midfea
