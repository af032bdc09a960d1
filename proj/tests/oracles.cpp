#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace oracle {

namespace {

using Grid = std::vector<std::vector<std::vector<double>>>;  // [y][x][k]

double sigmoid(double t) { return 1.0 / (1.0 + std::exp(-t)); }

void unit_or_zero(std::vector<double>& v) {
  double ss = 0.0;
  for (double x : v) ss += x * x;
  const double n = std::sqrt(ss);
  for (double& x : v) x = n < 1e-12 ? 0.0 : x / n;
}

}  // namespace

Tensor3 soft_convolve(const Matrix& img, const Matrix& filters, std::size_t side) {
  const std::size_t oh = img.rows() - side + 1, ow = img.cols() - side + 1, k = filters.cols();
  Grid g(oh, std::vector<std::vector<double>>(ow, std::vector<double>(k, 0.0)));
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x)
      for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (std::size_t u = 0; u < side; ++u)
          for (std::size_t v = 0; v < side; ++v) s += filters(u * side + v, j) * img(y + u, x + v);
        // half-wave rectification
        g[y][x][j] = s > 0.0 ? s : 0.0;
      }
  Tensor3 out(oh, ow, k);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      auto& v = g[y][x];
      unit_or_zero(v);
      double mean = 0.0;
      for (double t : v) mean += t;
      mean /= static_cast<double>(k);
      for (double& t : v)
        if (t < mean) t = 0.0;
      unit_or_zero(v);
      for (std::size_t j = 0; j < k; ++j) out(y, x, j) = v[j];
    }
  return out;
}

Tensor3 max_pool_3d(const Tensor3& t) {
  const std::size_t d = t.depth();
  Tensor3 out(t.height() / 2, t.width() / 2, d * (d - 1) / 2);
  for (std::size_t y = 0; y < out.height(); ++y)
    for (std::size_t x = 0; x < out.width(); ++x) {
      std::size_t p = 0;
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j, ++p) {
          double best = -std::numeric_limits<double>::infinity();
          for (std::size_t k : {i, j})
            for (std::size_t dy = 0; dy < 2; ++dy)
              for (std::size_t dx = 0; dx < 2; ++dx) best = std::max(best, t(2 * y + dy, 2 * x + dx, k));
          out(y, x, p) = best;
        }
    }
  return out;
}

Tensor3 assemble_descriptors(const Tensor3& pooled) {
  const std::size_t gh = pooled.height() - 1, gw = pooled.width() - 1, d = pooled.depth();
  Tensor3 out(gh, gw, 4 * d);
  for (std::size_t r = 0; r < gh; ++r)
    for (std::size_t c = 0; c < gw; ++c)
      for (std::size_t e = 0; e < 4 * d; ++e) {
        const std::size_t m = e / 4, q = e % 4;
        out(r, c, e) = pooled(r + q / 2, c + q % 2, m);
      }
  return out;
}

std::vector<std::uint32_t> vq_encode(const Tensor3& field, const Matrix& words, std::size_t stride) {
  std::vector<std::uint32_t> codes;
  for (std::size_t r = 0; r < field.height(); r += stride)
    for (std::size_t c = 0; c < field.width(); c += stride) {
      double best = std::numeric_limits<double>::infinity();
      std::uint32_t arg = 0;
      for (std::size_t j = 0; j < words.cols(); ++j) {
        double s = 0.0;
        for (std::size_t e = 0; e < words.rows(); ++e) {
          const double diff = field(r, c, e) - words(e, j);
          s += diff * diff;
        }
        if (s < best) {
          best = s;
          arg = static_cast<std::uint32_t>(j);
        }
      }
      codes.push_back(arg);
    }
  return codes;
}

namespace {

// Part index of a position under an equal split of `extent` into `parts`:
// the part p with floor(p*extent/parts) <= pos < floor((p+1)*extent/parts).
std::vector<std::size_t> owners(std::size_t pos, std::size_t extent, std::size_t parts) {
  std::vector<std::size_t> out;
  for (std::size_t p = 0; p < parts; ++p)
    if (p * extent / parts <= pos && pos < (p + 1) * extent / parts) out.push_back(p);
  return out;
}

// Windows [s*stride, s*stride + cell) in pixels that contain code `pos`.
std::vector<std::size_t> window_owners(std::size_t pos, std::size_t codes, std::size_t step, std::size_t cell,
                                       std::size_t stride, std::size_t& count) {
  const std::size_t extent = codes * step;
  std::vector<std::size_t> out;
  if (extent < cell) {
    count = 1;
    out.push_back(0);
    return out;
  }
  count = 0;
  for (std::size_t y0 = 0; y0 + cell <= extent; y0 += stride, ++count) {
    const std::size_t px = pos * step;
    if (y0 <= px && px < y0 + cell) out.push_back(count);
  }
  return out;
}

}  // namespace

std::vector<double> spatial_pool(const std::vector<std::uint32_t>& codes, std::size_t rows, std::size_t cols,
                                 std::size_t pixel_step, std::size_t cb_size,
                                 const midfea::PartitionSpec& part) {
  using Kind = midfea::PartitionSpec::Kind;
  std::vector<double> out;
  auto pool_layer = [&](std::size_t nr, std::size_t nc, auto row_owner, auto col_owner) {
    std::vector<double> block(nr * nc * cb_size, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c)
        for (std::size_t i : row_owner(r))
          for (std::size_t j : col_owner(c)) block[(i * nc + j) * cb_size + codes[r * cols + c]] = 1.0;
    out.insert(out.end(), block.begin(), block.end());
  };
  if (part.kind == Kind::Pyramid) {
    for (std::size_t l = 0; l < part.levels; ++l) {
      const std::size_t n = std::size_t{1} << l;
      pool_layer(
          n, n, [&](std::size_t r) { return owners(r, rows, n); },
          [&](std::size_t c) { return owners(c, cols, n); });
    }
  } else if (part.kind == Kind::Grid) {
    pool_layer(
        part.grid_rows, part.grid_cols, [&](std::size_t r) { return owners(r, rows, part.grid_rows); },
        [&](std::size_t c) { return owners(c, cols, part.grid_cols); });
  } else {
    std::size_t nr = 0, nc = 0;
    window_owners(0, rows, pixel_step, part.cell_pixels, part.stride_pixels, nr);
    window_owners(0, cols, pixel_step, part.cell_pixels, part.stride_pixels, nc);
    std::size_t tmp = 0;
    pool_layer(
        nr, nc,
        [&](std::size_t r) { return window_owners(r, rows, pixel_step, part.cell_pixels, part.stride_pixels, tmp); },
        [&](std::size_t c) { return window_owners(c, cols, pixel_step, part.cell_pixels, part.stride_pixels, tmp); });
  }
  return out;
}

double ns_objective(const Matrix& X, std::span<const std::size_t> labels, std::size_t classes,
                    const Matrix& H, const Matrix& D, const Matrix& W, std::span<const double> b,
                    const midfea::ns::Hyper& hyper, double eps_row) {
  const std::size_t p = X.rows(), n = X.cols(), d = H.rows();
  double rec = 0.0, cons = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < p; ++i) {
      double dh = 0.0;
      for (std::size_t j = 0; j < d; ++j) dh += D(i, j) * H(j, s);
      rec += (X(i, s) - dh) * (X(i, s) - dh);
    }
    for (std::size_t j = 0; j < d; ++j) {
      double a = b[j];
      for (std::size_t i = 0; i < p; ++i) a += W(j, i) * X(i, s);
      const double r = H(j, s) - sigmoid(a);
      cons += r * r;
    }
  }
  double total = rec + hyper.alpha * cons;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<std::size_t> in, out;
    for (std::size_t s = 0; s < n; ++s) (labels[s] == c ? in : out).push_back(s);
    double l21 = 0.0, var = 0.0, inc = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      double ss = 0.0, mean = 0.0;
      for (std::size_t s : in) {
        ss += H(j, s) * H(j, s);
        mean += H(j, s);
      }
      l21 += std::sqrt(ss + eps_row * eps_row);
      if (!in.empty()) mean /= static_cast<double>(in.size());
      for (std::size_t s : in) var += (H(j, s) - mean) * (H(j, s) - mean);
    }
    for (std::size_t s : in)
      for (std::size_t t : out) {
        double ip = 0.0;
        for (std::size_t j = 0; j < d; ++j) ip += H(j, s) * H(j, t);
        inc += ip * ip;
      }
    total += hyper.lambda * l21 + hyper.beta * var + hyper.gamma * inc;
  }
  return total;
}

double block_g(const Matrix& X, std::span<const std::size_t> labels, std::size_t classes, std::size_t c,
               const Matrix& H, const Matrix& Hc, const Matrix& D, const Matrix& W,
               std::span<const double> b, const midfea::ns::Hyper& hyper) {
  (void)classes;
  const std::size_t p = X.rows(), d = H.rows();
  std::vector<std::size_t> in, out;
  for (std::size_t s = 0; s < X.cols(); ++s) (labels[s] == c ? in : out).push_back(s);
  const std::size_t nc = in.size();
  // Class mean taken from the current H, held fixed within the block.
  std::vector<double> mean(d, 0.0);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t s : in) mean[j] += H(j, s);
    mean[j] /= static_cast<double>(nc);
  }
  // Stacked G (rows p + d + d + |out|) and Q.
  const std::size_t rows = p + 2 * d + out.size();
  Matrix G(rows, nc), Q(rows, d);
  for (std::size_t k = 0; k < nc; ++k) {
    const std::size_t s = in[k];
    for (std::size_t i = 0; i < p; ++i) G(i, k) = X(i, s);
    for (std::size_t j = 0; j < d; ++j) {
      double a = b[j];
      for (std::size_t i = 0; i < p; ++i) a += W(j, i) * X(i, s);
      G(p + j, k) = std::sqrt(hyper.alpha) * sigmoid(a);
      G(p + d + j, k) = std::sqrt(hyper.beta) * mean[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < d; ++j) Q(i, j) = D(i, j);
  for (std::size_t j = 0; j < d; ++j) {
    Q(p + j, j) = std::sqrt(hyper.alpha);
    Q(p + d + j, j) = std::sqrt(hyper.beta);
  }
  for (std::size_t t = 0; t < out.size(); ++t)
    for (std::size_t j = 0; j < d; ++j) Q(p + 2 * d + t, j) = std::sqrt(hyper.gamma) * H(j, out[t]);
  double g = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < nc; ++k) {
      double qh = 0.0;
      for (std::size_t j = 0; j < d; ++j) qh += Q(r, j) * Hc(j, k);
      g += (G(r, k) - qh) * (G(r, k) - qh);
    }
  for (std::size_t j = 0; j < d; ++j) {
    double ss = 0.0;
    for (std::size_t k = 0; k < nc; ++k) ss += Hc(j, k) * Hc(j, k);
    g += hyper.lambda * std::sqrt(ss + hyper.eps_row * hyper.eps_row);
  }
  return g;
}

Matrix fd_gradient(const std::function<double(const Matrix&)>& f, const Matrix& m, double h) {
  Matrix g(m.rows(), m.cols());
  Matrix probe = m;
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      probe(r, c) = v + h;
      const double up = f(probe);
      probe(r, c) = v - h;
      const double down = f(probe);
      probe(r, c) = v;
      g(r, c) = (up - down) / (2.0 * h);
    }
  return g;
}

double relative_error(const Matrix& a, const Matrix& b) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a.data()[i] - b.data()[i]) * (a.data()[i] - b.data()[i]);
    na += a.data()[i] * a.data()[i];
    nb += b.data()[i] * b.data()[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

}  // namespace oracle
