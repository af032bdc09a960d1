#include "midfea/classify.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <stdexcept>
#include <string>

#include "midfea/matrix_io.hpp"

namespace midfea {

LinearClassifier train_linear(const Matrix& features, std::span<const std::size_t> labels,
                              std::size_t classes, const LinearTrainOptions& opts, SeededRng& rng) {
  const std::size_t n = features.cols();
  const std::size_t dim = features.rows();
  if (labels.size() != n) throw std::invalid_argument("train_linear: one label per column required");
  if (n < 2) throw std::invalid_argument("train_linear: need at least 2 samples");
  if (classes < 2) throw std::invalid_argument("train_linear: need at least 2 classes");
  if (!(opts.reg > 0.0)) throw std::invalid_argument("train_linear: reg must be positive");
  if (opts.epochs == 0) throw std::invalid_argument("train_linear: epochs must be positive");
  std::vector<bool> seen(classes, false);
  for (auto l : labels) {
    if (l >= classes) throw std::invalid_argument("train_linear: label out of range");
    seen[l] = true;
  }
  std::size_t distinct = 0;
  for (bool s : seen) distinct += s ? 1 : 0;
  if (distinct < 2) throw std::invalid_argument("train_linear: labels contain a single class");

  const Matrix samples = features.transpose();  // one sample per row
  LinearClassifier clf;
  clf.reg = opts.reg;
  clf.weights = Matrix(classes, dim);
  clf.biases.assign(classes, 0.0);

  std::vector<std::vector<std::size_t>> orders(opts.epochs);
  for (auto& o : orders) o = rng.permutation(n);

  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> w(dim), sub(dim), avg_w(dim);
  for (std::size_t k = 0; k < classes; ++k) {
    std::fill(w.begin(), w.end(), 0.0);
    std::fill(avg_w.begin(), avg_w.end(), 0.0);
    double b = 0.0, avg_b = 0.0;
    for (std::size_t t = 1; t <= opts.epochs; ++t) {
      std::fill(sub.begin(), sub.end(), 0.0);
      double sub_b = 0.0;
      for (std::size_t i : orders[t - 1]) {
        const double y = labels[i] == k ? 1.0 : -1.0;
        const auto x = samples.row(i);
        if (y * (dot(w, x) + b) < 1.0) {
          for (std::size_t j = 0; j < dim; ++j) sub[j] -= y * x[j];
          sub_b -= y;
        }
      }
      const double eta = 1.0 / (opts.reg * static_cast<double>(t) + 1.0);
      for (std::size_t j = 0; j < dim; ++j) w[j] -= eta * (opts.reg * w[j] + inv_n * sub[j]);
      b -= eta * inv_n * sub_b;
      // Running mean of the iterates.
      const double mix = 1.0 / static_cast<double>(t);
      for (std::size_t j = 0; j < dim; ++j) avg_w[j] += mix * (w[j] - avg_w[j]);
      avg_b += mix * (b - avg_b);
    }
    for (std::size_t j = 0; j < dim; ++j) clf.weights(k, j) = avg_w[j];
    clf.biases[k] = avg_b;
  }
  return clf;
}

std::vector<double> scores(const LinearClassifier& clf, std::span<const double> x) {
  if (x.size() != clf.dim()) throw std::invalid_argument("scores: feature length mismatch");
  std::vector<double> s(clf.classes());
  for (std::size_t k = 0; k < clf.classes(); ++k) s[k] = dot(clf.weights.row(k), x) + clf.biases[k];
  return s;
}

std::vector<std::size_t> predict(const Matrix& features, const LinearClassifier& clf) {
  if (features.rows() != clf.dim()) {
    throw std::invalid_argument("predict: feature dim " + std::to_string(features.rows()) +
                                " does not match classifier dim " + std::to_string(clf.dim()));
  }
  std::vector<std::size_t> out(features.cols());
  for (std::size_t j = 0; j < features.cols(); ++j) {
    const auto s = scores(clf, features.column(j));
    std::size_t best = 0;
    for (std::size_t k = 1; k < s.size(); ++k)
      if (s[k] > s[best]) best = k;
    out[j] = best;
  }
  return out;
}

double accuracy(std::span<const std::size_t> pred, std::span<const std::size_t> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (pred.empty()) throw std::invalid_argument("accuracy: empty input");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == truth[i] ? 1 : 0;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw std::invalid_argument("mae: length mismatch");
  if (pred.empty()) throw std::invalid_argument("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

void LinearClassifier::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_matrix(dir / "weights.mat", weights);
  write_matrix(dir / "biases.mat", Matrix(biases.size(), 1, biases));
  std::ofstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("cannot write " + (dir / "meta.txt").string());
  meta << std::setprecision(17) << "classes=" << classes() << "\ndim=" << dim() << "\nreg=" << reg << "\n";
}

LinearClassifier LinearClassifier::load(const std::filesystem::path& dir) {
  LinearClassifier clf;
  clf.weights = read_matrix(dir / "weights.mat");
  const Matrix b = read_matrix(dir / "biases.mat");
  if (b.cols() != 1 || b.rows() != clf.weights.rows()) {
    throw std::runtime_error(dir.string() + ": biases do not match weights");
  }
  clf.biases.assign(b.data().begin(), b.data().end());
  std::ifstream meta(dir / "meta.txt");
  if (!meta) throw std::runtime_error("cannot open " + (dir / "meta.txt").string());
  std::string line;
  while (std::getline(meta, line)) {
    if (line.rfind("reg=", 0) == 0) clf.reg = std::stod(line.substr(4));
  }
  return clf;
}

}  // namespace midfea
