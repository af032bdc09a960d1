#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "midfea/matrix.hpp"
#include "midfea/rng.hpp"

namespace midfea {

/// One-vs-rest linear classifier: score_k(x) = w_k . x + b_k.
struct LinearClassifier {
  Matrix weights;               // classes x dim
  std::vector<double> biases;   // classes
  double reg = 1e-4;

  std::size_t classes() const { return weights.rows(); }
  std::size_t dim() const { return weights.cols(); }

  /// weights.mat, biases.mat and meta.txt.
  void save(const std::filesystem::path& dir) const;
  static LinearClassifier load(const std::filesystem::path& dir);
};

struct LinearTrainOptions {
  double reg = 1e-4;
  std::size_t epochs = 100;
};

/// Minimizes, per class k,
///   reg/2 ||w_k||^2 + (1/N) sum_i max(0, 1 - y_ik (w_k . x_i + b_k))
/// (y_ik = +1 for class k, -1 otherwise) by full-batch subgradient descent
/// with step 1/(reg t + 1) and returns the average of the iterates. Each
/// epoch visits the samples in a fresh seeded shuffle.
LinearClassifier train_linear(const Matrix& features, std::span<const std::size_t> labels,
                              std::size_t classes, const LinearTrainOptions& opts, SeededRng& rng);

/// Class scores for one sample.
std::vector<double> scores(const LinearClassifier& clf, std::span<const double> x);
/// Argmax class for every column (ties to the lowest class index).
std::vector<std::size_t> predict(const Matrix& features, const LinearClassifier& clf);

/// Fraction of matching entries.
double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth);
/// Mean absolute difference of numeric labels.
double mae(std::span<const double> pred, std::span<const double> truth);

}  // namespace midfea
