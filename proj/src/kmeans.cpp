#include "midfea/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>
#include <string>

namespace midfea {

std::size_t nearest_row(const Matrix& candidates, std::span<const double> point) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < candidates.rows(); ++j) {
    const double d = squared_distance(candidates.row(j), point);
    if (d < best_d) {
      best_d = d;
      best = j;
    }
  }
  return best;
}

namespace {

// k-means++: first centre uniform, then proportional to squared distance to
// the closest chosen centre. Falls back to uniform when every point already
// coincides with a centre.
Matrix seed_plus_plus(const Matrix& pts, std::size_t k, SeededRng& rng) {
  const std::size_t n = pts.rows();
  const std::size_t dim = pts.cols();
  Matrix centres(k, dim);
  std::vector<double> closest(n, std::numeric_limits<double>::infinity());

  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double v : closest) total += v;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          target -= closest[i];
          if (target < 0.0) {
            pick = i;
            break;
          }
        }
      } else {
        pick = rng.below(n);
      }
    }
    std::copy(pts.row(pick).begin(), pts.row(pick).end(), centres.row(c).begin());
    for (std::size_t i = 0; i < n; ++i)
      closest[i] = std::min(closest[i], squared_distance(pts.row(i), centres.row(c)));
  }
  return centres;
}

double objective(const Matrix& pts, const Matrix& centres, const std::vector<std::size_t>& assign) {
  double s = 0.0;
  for (std::size_t i = 0; i < pts.rows(); ++i) s += squared_distance(pts.row(i), centres.row(assign[i]));
  return s;
}

}  // namespace

KMeansResult kmeans_detailed(const Matrix& points, std::size_t k, SeededRng& rng,
                             std::size_t max_iter) {
  if (k == 0) throw std::invalid_argument("kmeans: k must be at least 1");
  if (max_iter == 0) throw std::invalid_argument("kmeans: max_iter must be at least 1");
  if (points.cols() < k) {
    throw std::invalid_argument("kmeans: " + std::to_string(points.cols()) +
                                " points cannot form " + std::to_string(k) + " clusters");
  }

  const Matrix pts = points.transpose();  // one point per row
  const std::size_t n = pts.rows();
  const std::size_t dim = pts.cols();

  KMeansResult res;
  Matrix centres = seed_plus_plus(pts, k, rng);
  std::vector<std::size_t> assign(n, 0);
  bool first = true;

  for (std::size_t iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t a = nearest_row(centres, pts.row(i));
      if (first || a != assign[i]) changed = true;
      assign[i] = a;
    }
    first = false;
    res.objective_trace.push_back(objective(pts, centres, assign));
    res.iterations = iter + 1;
    if (!changed) break;

    Matrix sums(k, dim);
    std::vector<std::size_t> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto srow = sums.row(assign[i]);
      auto prow = pts.row(i);
      for (std::size_t j = 0; j < dim; ++j) srow[j] += prow[j];
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto crow = centres.row(c);
      auto srow = sums.row(c);
      for (std::size_t j = 0; j < dim; ++j) crow[j] = srow[j] / static_cast<double>(counts[c]);
    }
    res.objective_trace.push_back(objective(pts, centres, assign));

    // Empty-cluster repair: move each empty centre onto the point that is
    // currently farthest from its own centre.
    bool repaired = false;
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = 0;
      double far_d = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (counts[assign[i]] <= 1) continue;  // never empty another cluster
        const double d = squared_distance(pts.row(i), centres.row(assign[i]));
        if (d > far_d) {
          far_d = d;
          far = i;
        }
      }
      if (far_d < 0.0) continue;
      std::copy(pts.row(far).begin(), pts.row(far).end(), centres.row(c).begin());
      --counts[assign[far]];
      assign[far] = c;
      counts[c] = 1;
      repaired = true;
    }
    if (repaired) res.objective_trace.push_back(objective(pts, centres, assign));
  }

  res.centroids = centres.transpose();
  res.assignment = std::move(assign);
  return res;
}

Matrix kmeans(const Matrix& points, std::size_t k, SeededRng& rng, std::size_t max_iter) {
  return kmeans_detailed(points, k, rng, max_iter).centroids;
}

}  // namespace midfea
