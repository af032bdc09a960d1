#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>

#include "midfea/midlevel.hpp"
#include "midfea/nslayer.hpp"

namespace midfea {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Every tunable of a pipeline run. Text form is "key = value" per line with
/// '#' comments; unknown keys are rejected.
struct RunConfig {
  std::uint64_t seed = 1;

  std::size_t filters_count = 9;
  std::size_t filters_size = 7;
  std::size_t filters_patches = 200;  // per training image
  std::size_t filters_iters = 100;

  std::size_t codebook_size = 500;
  std::size_t codebook_samples = 20000;
  std::size_t codebook_iters = 100;

  std::size_t vq_stride = 1;
  PartitionSpec partition = PartitionSpec::pyramid(3);
  std::size_t projection_dim = 3000;

  ns::Hyper ns;

  double clf_reg = 1e-4;
  std::size_t clf_epochs = 100;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
  std::string serialize() const;
  void save(const std::filesystem::path& path) const;

  friend bool operator==(const RunConfig&, const RunConfig&);
};

}  // namespace midfea
