#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "midfea/matrix.hpp"
#include "midfea/rng.hpp"

namespace midfea {

struct KMeansResult {
  Matrix centroids;                     // dim x k, one centroid per column
  std::vector<std::size_t> assignment;  // nearest centroid of each point
  /// Sum of squared distances after every assignment, update and repair
  /// phase, in execution order. Non-increasing.
  std::vector<double> objective_trace;
  std::size_t iterations = 0;
};

/// Lloyd's algorithm with k-means++ seeding. `points` holds one point per
/// column. Empty clusters are re-seeded with the point currently farthest
/// from its centroid. Stops when assignments no longer change or after
/// `max_iter` iterations.
KMeansResult kmeans_detailed(const Matrix& points, std::size_t k, SeededRng& rng,
                             std::size_t max_iter = 100);

/// Centroids only; see kmeans_detailed.
Matrix kmeans(const Matrix& points, std::size_t k, SeededRng& rng, std::size_t max_iter = 100);

/// Index of the row of `candidates` nearest to `point` in squared Euclidean
/// distance (ties: lowest index).
std::size_t nearest_row(const Matrix& candidates, std::span<const double> point);

}  // namespace midfea
