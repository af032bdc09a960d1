#include "midfea/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <stdexcept>

#include "midfea/pnm.hpp"

namespace midfea {

GrayImage synth_image(std::size_t cls, std::size_t classes, std::size_t size, SeededRng& rng) {
  const double theta = static_cast<double>(cls) * std::numbers::pi / static_cast<double>(classes);
  const double ct = std::cos(theta), st = std::sin(theta);
  const double period = rng.uniform(6.0, 10.0);
  const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double bar_period = rng.uniform(14.0, 20.0);
  const double bar_offset = rng.uniform(0.0, bar_period);
  const double gain = rng.uniform(0.5, 2.0);

  std::vector<double> px(size * size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      // Coordinate across the stripes.
      const double u = static_cast<double>(x) * ct + static_cast<double>(y) * st;
      const double grating = 0.25 * std::sin(2.0 * std::numbers::pi * u / period + phase);
      const double frac = std::fmod(u + bar_offset + 1000.0 * bar_period, bar_period) / bar_period;
      const double bar = frac < 0.15 ? 0.2 : 0.0;
      const double v = gain * (0.4 + grating + bar + 0.05 * rng.normal());
      // Quantized the same way the PGM file stores it.
      px[y * size + x] = std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
    }
  return GrayImage(size, size, std::move(px));
}

DatasetManifest write_synth_dataset(const std::filesystem::path& out, const SynthOptions& opts,
                                    SeededRng& rng) {
  if (opts.classes < 2) throw std::invalid_argument("synth: need at least 2 classes");
  if (opts.per_class < 2) throw std::invalid_argument("synth: need at least 2 images per class");
  if (opts.size < 16) throw std::invalid_argument("synth: image size must be at least 16");
  std::filesystem::create_directories(out);
  DatasetManifest m;
  m.root = out;
  char name[64];
  for (std::size_t c = 0; c < opts.classes; ++c) {
    std::snprintf(name, sizeof name, "class%02zu", c);
    const std::string label = name;
    std::filesystem::create_directories(out / label);
    m.classes.push_back(label);
    for (std::size_t i = 0; i < opts.per_class; ++i) {
      const GrayImage img = synth_image(c, opts.classes, opts.size, rng);
      std::snprintf(name, sizeof name, "img%04zu.pgm", i);
      const auto path = out / label / name;
      write_pgm(path, 255.0 * img.pixels());
      m.entries.push_back({path, label, i < opts.per_class / 2 ? Split::Train : Split::Test});
    }
  }
  write_manifest(out / "manifest.tsv", m);
  return m;
}

}  // namespace midfea
