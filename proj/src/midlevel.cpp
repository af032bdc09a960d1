#include "midfea/midlevel.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#if __has_include(<experimental/simd>)
#include <experimental/simd>
#endif
#include <fstream>
#include <limits>
#include <stdexcept>

#include "midfea/kmeans.hpp"
#include "midfea/matrix_io.hpp"

namespace midfea {

Codebook::Codebook(Matrix words) : words_(std::move(words)), rows_(words_.transpose()) {
  if (words_.cols() < 2) throw std::invalid_argument("Codebook: need at least 2 codewords");
}

Codebook learn_codebook(std::span<const DescriptorField> fields, std::size_t m,
                        std::size_t sample_cap, SeededRng& rng, std::size_t kmeans_iters) {
  if (m < 2) throw std::invalid_argument("learn_codebook: m must be at least 2");
  std::size_t total = 0;
  std::size_t dim = 0;
  for (const auto& f : fields) {
    if (f.count() == 0) continue;
    if (dim == 0) dim = f.dim();
    if (f.dim() != dim) throw std::invalid_argument("learn_codebook: descriptor dimensions differ");
    total += f.count();
  }
  if (total < m) {
    throw std::invalid_argument("learn_codebook: " + std::to_string(total) +
                                " descriptors cannot form " + std::to_string(m) + " codewords");
  }

  // Global descriptor index -> (field, offset).
  std::vector<std::size_t> picks;
  if (sample_cap == 0 || total <= sample_cap) {
    picks.resize(total);
    for (std::size_t i = 0; i < total; ++i) picks[i] = i;
  } else {
    // Partial Fisher-Yates over a virtual identity array.
    std::vector<std::size_t> pool(total);
    for (std::size_t i = 0; i < total; ++i) pool[i] = i;
    for (std::size_t i = 0; i < sample_cap; ++i) std::swap(pool[i], pool[i + rng.below(total - i)]);
    picks.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(sample_cap));
    std::sort(picks.begin(), picks.end());
  }
  if (picks.size() < m) {
    throw std::invalid_argument("learn_codebook: sample cap below codebook size");
  }

  Matrix sample(dim, picks.size());
  std::size_t field = 0, base = 0;
  for (std::size_t s = 0; s < picks.size(); ++s) {
    while (picks[s] >= base + fields[field].count()) base += fields[field++].count();
    const std::size_t local = picks[s] - base;
    sample.set_column(s, fields[field].descriptor(local / fields[field].width(),
                                                  local % fields[field].width()));
  }
  return Codebook(kmeans(sample, m, rng, kmeans_iters));
}

std::uint32_t nearest_codeword(std::span<const double> descriptor, const Codebook& cb) {
  const std::size_t dim = descriptor.size();
  std::uint32_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < cb.size(); ++j) {
    const auto w = cb.word(j);
    // Same left-to-right summation as a plain squared distance, abandoned
    // once the partial sum can no longer beat the best.
    double s = 0.0;
    std::size_t i = 0;
    while (i < dim) {
      const std::size_t stop = std::min(dim, i + 16);
      for (; i < stop; ++i) {
        const double d = descriptor[i] - w[i];
        s += d * d;
      }
      if (s >= best_d) break;
    }
    if (s < best_d) {
      best_d = s;
      best = static_cast<std::uint32_t>(j);
    }
  }
  return best;
}

namespace {

constexpr std::size_t kPanel = 8;  // codewords screened together
constexpr std::size_t kBlockX = 4; // descriptors screened together

/// Expanded distances |w|^2 - 2 x.w of kBlockX descriptors to one panel of
/// codewords (panel laid out dim-major, kPanel wide), written to
/// approx[t * ld + k]; lowest[t] tracks the running minimum.
void screen_panel(const double* const* x, const double* panel, const double* wsq, std::size_t dim,
                  double* approx, std::size_t ld, double* lowest) {
#if __has_include(<experimental/simd>)
  namespace stdx = std::experimental;
  using Lanes = stdx::fixed_size_simd<double, kPanel>;
  Lanes a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
  for (std::size_t i = 0; i < dim; ++i, panel += kPanel) {
    const Lanes w(panel, stdx::element_aligned);
    a0 += x[0][i] * w;
    a1 += x[1][i] * w;
    a2 += x[2][i] * w;
    a3 += x[3][i] * w;
  }
  const Lanes w2(wsq, stdx::element_aligned);
  const Lanes acc[kBlockX] = {a0, a1, a2, a3};
  for (std::size_t t = 0; t < kBlockX; ++t) {
    const Lanes d = w2 - 2.0 * acc[t];
    d.copy_to(approx + t * ld, stdx::element_aligned);
    lowest[t] = std::min(lowest[t], stdx::hmin(d));
  }
#else
  double acc[kBlockX][kPanel] = {};
  for (std::size_t i = 0; i < dim; ++i, panel += kPanel)
    for (std::size_t t = 0; t < kBlockX; ++t)
      for (std::size_t k = 0; k < kPanel; ++k) acc[t][k] += x[t][i] * panel[k];
  for (std::size_t t = 0; t < kBlockX; ++t)
    for (std::size_t k = 0; k < kPanel; ++k) {
      approx[t * ld + k] = wsq[k] - 2.0 * acc[t][k];
      lowest[t] = std::min(lowest[t], approx[t * ld + k]);
    }
#endif
}

}  // namespace

CodeMap vq_encode(const DescriptorField& field, const Codebook& cb, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("vq_encode: stride must be at least 1");
  if (field.count() > 0 && field.dim() != cb.dim()) {
    throw std::invalid_argument("vq_encode: descriptor dim " + std::to_string(field.dim()) +
                                " does not match codebook dim " + std::to_string(cb.dim()));
  }
  CodeMap map;
  map.stride = stride;
  map.rows = (field.height() + stride - 1) / stride;
  map.cols = (field.width() + stride - 1) / stride;
  map.codes.resize(map.rows * map.cols);

  // Screen every codeword with the expanded distance |w|^2 - 2 x.w, then
  // settle the winner among the near-minimal candidates with the exact
  // left-to-right distance. The screening error is far below the margin, so
  // the result equals the exhaustive scan including its lowest-index tie rule.
  const std::size_t m = cb.size();
  const std::size_t dim = cb.dim();
  const std::size_t panels = (m + kPanel - 1) / kPanel;
  const std::size_t padded = panels * kPanel;
  // Padding codewords are zero vectors at infinite distance.
  std::vector<double> packed(panels * dim * kPanel, 0.0);
  std::vector<double> wsq(padded, std::numeric_limits<double>::infinity());
  double wmax = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto w = cb.word(j);
    for (std::size_t i = 0; i < dim; ++i) packed[((j / kPanel) * dim + i) * kPanel + j % kPanel] = w[i];
    wsq[j] = squared_norm(w);
    wmax = std::max(wmax, wsq[j]);
  }

  std::vector<std::span<const double>> xs;
  xs.reserve(map.codes.size());
  for (std::size_t r = 0; r < map.rows; ++r)
    for (std::size_t c = 0; c < map.cols; ++c) xs.push_back(field.descriptor(r * stride, c * stride));

  std::vector<double> approx(kBlockX * padded);
  for (std::size_t s0 = 0; s0 < xs.size(); s0 += kBlockX) {
    const std::size_t nb = std::min(kBlockX, xs.size() - s0);
    const double* x[kBlockX];
    for (std::size_t t = 0; t < kBlockX; ++t) x[t] = xs[s0 + std::min(t, nb - 1)].data();
    double lowest[kBlockX];
    std::fill(lowest, lowest + kBlockX, std::numeric_limits<double>::infinity());
    for (std::size_t p = 0; p < panels; ++p)
      screen_panel(x, packed.data() + p * dim * kPanel, wsq.data() + p * kPanel, dim, approx.data() + p * kPanel,
                   padded, lowest);

    for (std::size_t t = 0; t < nb; ++t) {
      const double* a = approx.data() + t * padded;
      const std::span<const double> xt = xs[s0 + t];
      const double cutoff = lowest[t] + 2.0 * (1e-9 * (squared_norm(xt) + wmax) + 1e-300);
      std::uint32_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < m; ++j) {
        if (!(a[j] <= cutoff)) continue;
        const double d = squared_distance(xt, cb.word(j));
        if (d < best_d) {
          best_d = d;
          best = static_cast<std::uint32_t>(j);
        }
      }
      map.codes[s0 + t] = best;
    }
  }
  return map;
}

PartitionSpec PartitionSpec::pyramid(std::size_t levels) {
  if (levels < 1) throw std::invalid_argument("pyramid partition needs at least 1 level");
  PartitionSpec p;
  p.kind = Kind::Pyramid;
  p.levels = levels;
  return p;
}

PartitionSpec PartitionSpec::grid(std::size_t rows, std::size_t cols) {
  if (rows < 1 || cols < 1) throw std::invalid_argument("grid partition dims must be at least 1");
  PartitionSpec p;
  p.kind = Kind::Grid;
  p.grid_rows = rows;
  p.grid_cols = cols;
  return p;
}

PartitionSpec PartitionSpec::overlap(std::size_t cell_pixels, std::size_t stride_pixels) {
  if (cell_pixels < 1 || stride_pixels < 1 || stride_pixels > cell_pixels) {
    throw std::invalid_argument("overlap partition needs 1 <= stride <= cell");
  }
  PartitionSpec p;
  p.kind = Kind::Overlap;
  p.cell_pixels = cell_pixels;
  p.stride_pixels = stride_pixels;
  return p;
}

namespace {

std::size_t parse_count(std::string_view s, const std::string& whole) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) {
    throw std::invalid_argument("bad partition '" + whole + "'");
  }
  return v;
}

}  // namespace

PartitionSpec PartitionSpec::parse(const std::string& text) {
  const auto colon = text.find(':');
  if (colon == std::string::npos) throw std::invalid_argument("bad partition '" + text + "'");
  const std::string kind = text.substr(0, colon);
  const std::string_view args = std::string_view(text).substr(colon + 1);
  if (kind == "pyramid") return pyramid(parse_count(args, text));
  if (kind == "grid") {
    const auto x = args.find('x');
    if (x == std::string_view::npos) throw std::invalid_argument("bad partition '" + text + "'");
    return grid(parse_count(args.substr(0, x), text), parse_count(args.substr(x + 1), text));
  }
  if (kind == "overlap") {
    const auto comma = args.find(',');
    if (comma == std::string_view::npos) throw std::invalid_argument("bad partition '" + text + "'");
    return overlap(parse_count(args.substr(0, comma), text), parse_count(args.substr(comma + 1), text));
  }
  throw std::invalid_argument("unknown partition kind '" + kind + "'");
}

std::string PartitionSpec::to_string() const {
  switch (kind) {
    case Kind::Pyramid:
      return "pyramid:" + std::to_string(levels);
    case Kind::Grid:
      return "grid:" + std::to_string(grid_rows) + "x" + std::to_string(grid_cols);
    case Kind::Overlap:
      return "overlap:" + std::to_string(cell_pixels) + "," + std::to_string(stride_pixels);
  }
  return {};
}

namespace {

std::vector<std::pair<std::size_t, std::size_t>> even_split(std::size_t extent, std::size_t parts) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < parts; ++i) out.emplace_back(i * extent / parts, (i + 1) * extent / parts);
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> windows(std::size_t codes, std::size_t step,
                                                         std::size_t cell, std::size_t stride) {
  const std::size_t extent = codes * step;
  std::vector<std::pair<std::size_t, std::size_t>> out;
  auto to_codes = [&](std::size_t px) { return std::min(codes, (px + step - 1) / step); };
  if (extent < cell) {
    out.emplace_back(0, codes);
    return out;
  }
  for (std::size_t y0 = 0; y0 + cell <= extent; y0 += stride) out.emplace_back(to_codes(y0), to_codes(y0 + cell));
  return out;
}

}  // namespace

std::vector<Region> partition_regions(const PartitionSpec& part, std::size_t rows, std::size_t cols,
                                      std::size_t pixel_step) {
  std::vector<Region> regions;
  auto cross = [&](const auto& rs, const auto& cs) {
    for (const auto& [r0, r1] : rs)
      for (const auto& [c0, c1] : cs) regions.push_back({r0, r1, c0, c1});
  };
  switch (part.kind) {
    case PartitionSpec::Kind::Pyramid:
      for (std::size_t l = 0; l < part.levels; ++l) {
        const std::size_t n = std::size_t{1} << l;
        cross(even_split(rows, n), even_split(cols, n));
      }
      break;
    case PartitionSpec::Kind::Grid:
      cross(even_split(rows, part.grid_rows), even_split(cols, part.grid_cols));
      break;
    case PartitionSpec::Kind::Overlap:
      cross(windows(rows, pixel_step, part.cell_pixels, part.stride_pixels),
            windows(cols, pixel_step, part.cell_pixels, part.stride_pixels));
      break;
  }
  return regions;
}

std::vector<double> spatial_pool(const CodeMap& codes, std::size_t cb_size, const PartitionSpec& part) {
  const auto regions = partition_regions(part, codes.rows, codes.cols, codes.pixel_step());
  std::vector<double> out(regions.size() * cb_size, 0.0);
  for (std::size_t g = 0; g < regions.size(); ++g) {
    const auto& reg = regions[g];
    double* block = out.data() + g * cb_size;
    for (std::size_t r = reg.row_begin; r < reg.row_end; ++r)
      for (std::size_t c = reg.col_begin; c < reg.col_end; ++c) {
        const std::uint32_t code = codes.at(r, c);
        if (code >= cb_size) throw std::invalid_argument("spatial_pool: code exceeds codebook size");
        block[code] = 1.0;
      }
  }
  return out;
}

Matrix projection_matrix(std::size_t in_dim, std::size_t out_dim, SeededRng& rng) {
  if (out_dim == 0) throw std::invalid_argument("projection_matrix: out_dim must be positive");
  if (out_dim > in_dim) {
    throw std::invalid_argument("projection_matrix: out_dim " + std::to_string(out_dim) +
                                " exceeds in_dim " + std::to_string(in_dim));
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(out_dim));
  Matrix p(out_dim, in_dim);
  for (double& v : p.data()) v = scale * rng.normal();
  return p;
}

MidFeature project_normalize(std::span<const double> v, const Matrix& projection) {
  if (v.size() != projection.cols()) {
    throw std::invalid_argument("project_normalize: vector length " + std::to_string(v.size()) +
                                " does not match projection input " + std::to_string(projection.cols()));
  }
  // Pooled vectors are sparse and binary; only touch the active columns.
  std::vector<std::size_t> active;
  for (std::size_t j = 0; j < v.size(); ++j)
    if (v[j] != 0.0) active.push_back(j);
  MidFeature f;
  f.values.assign(projection.rows(), 0.0);
  for (std::size_t i = 0; i < projection.rows(); ++i) {
    const auto row = projection.row(i);
    double s = 0.0;
    for (std::size_t j : active) s += row[j] * v[j];
    f.values[i] = s;
  }
  const double n = euclidean_norm(f.values);
  if (n < kNormEpsilon) {
    std::fill(f.values.begin(), f.values.end(), 0.0);
  } else {
    for (double& x : f.values) x /= n;
  }
  return f;
}

void PipelineModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  filters.save(dir / "filters");
  write_matrix(dir / "codebook.mat", codebook.words());
  write_matrix(dir / "projection.mat", projection);
  std::ofstream meta(dir / "pipeline.txt");
  if (!meta) throw std::runtime_error("cannot write " + (dir / "pipeline.txt").string());
  meta << "partition = " << partition.to_string() << "\n"
       << "vq_stride = " << vq_stride << "\n";
}

PipelineModel PipelineModel::load(const std::filesystem::path& dir) {
  PipelineModel m;
  m.filters = FilterBank::load(dir / "filters");
  m.codebook = Codebook(read_matrix(dir / "codebook.mat"));
  m.projection = read_matrix(dir / "projection.mat");
  const auto meta_path = dir / "pipeline.txt";
  std::ifstream meta(meta_path);
  if (!meta) throw std::runtime_error("cannot open " + meta_path.string());
  std::string line;
  bool have_partition = false;
  while (std::getline(meta, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key == "partition") {
      m.partition = PartitionSpec::parse(val);
      have_partition = true;
    } else if (key == "vq_stride") {
      m.vq_stride = std::stoul(val);
    }
  }
  if (!have_partition) throw std::runtime_error(meta_path.string() + ": missing partition");
  if (m.codebook.dim() != 4 * m.filters.count() * (m.filters.count() - 1) / 2) {
    throw std::runtime_error(dir.string() + ": codebook dimension does not match filter count");
  }
  return m;
}

MidFeature extract_midfeature(const Matrix& intensities, const PipelineModel& model) {
  const Tensor3 maps = soft_convolve(intensities, model.filters);
  const Tensor3 pooled = max_pool_3d(maps);
  const DescriptorField field = assemble_descriptors(pooled);
  const CodeMap codes = vq_encode(field, model.codebook, model.vq_stride);
  const std::vector<double> hist = spatial_pool(codes, model.codebook.size(), model.partition);
  return project_normalize(hist, model.projection);
}

MidFeature extract_midfeature(const GrayImage& img, const PipelineModel& model) {
  return extract_midfeature(img.pixels(), model);
}

}  // namespace midfea
