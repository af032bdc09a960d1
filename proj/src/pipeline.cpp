#include "midfea/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <stdexcept>
#include <thread>

namespace midfea {

double StageTimings::total() const {
  double s = 0.0;
  for (double v : ms) s += v;
  return s;
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point a, Clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

}  // namespace

MidFeature extract_timed(const Matrix& intensities, const PipelineModel& model, const ns::Model* ns,
                         StageTimings& t) {
  auto t0 = Clock::now();
  const Tensor3 maps = soft_convolve(intensities, model.filters);
  auto t1 = Clock::now();
  const Tensor3 pooled = max_pool_3d(maps);
  auto t2 = Clock::now();
  const DescriptorField field = assemble_descriptors(pooled);
  auto t3 = Clock::now();
  const CodeMap codes = vq_encode(field, model.codebook, model.vq_stride);
  auto t4 = Clock::now();
  const std::vector<double> hist = spatial_pool(codes, model.codebook.size(), model.partition);
  auto t5 = Clock::now();
  MidFeature f = project_normalize(hist, model.projection);
  auto t6 = Clock::now();
  if (ns != nullptr) {
    const auto h = ns::encode(f.values, *ns);
    if (h.empty()) throw std::logic_error("empty activation");
  }
  auto t7 = Clock::now();
  t.ms = {elapsed_ms(t0, t1), elapsed_ms(t1, t2), elapsed_ms(t2, t3), elapsed_ms(t3, t4),
          elapsed_ms(t4, t5), elapsed_ms(t5, t6), ns != nullptr ? elapsed_ms(t6, t7) : 0.0};
  return f;
}

StageTimings bench_pipeline(const Matrix& intensities, const PipelineModel& model, const ns::Model* ns,
                            std::size_t repeats) {
  if (repeats == 0) throw std::invalid_argument("bench: repeats must be at least 1");
  std::vector<StageTimings> runs(repeats);
  for (auto& r : runs) extract_timed(intensities, model, ns, r);
  StageTimings med;
  std::vector<double> col(repeats);
  for (std::size_t s = 0; s < med.ms.size(); ++s) {
    for (std::size_t i = 0; i < repeats; ++i) col[i] = runs[i].ms[s];
    std::sort(col.begin(), col.end());
    med.ms[s] = repeats % 2 == 1 ? col[repeats / 2] : 0.5 * (col[repeats / 2 - 1] + col[repeats / 2]);
  }
  return med;
}

std::size_t pooled_length(std::size_t height, std::size_t width, const RunConfig& cfg) {
  const std::size_t f = cfg.filters_size;
  if (height < f || width < f) throw std::invalid_argument("image smaller than filter size");
  const std::size_t ph = (height - f + 1) / 2, pw = (width - f + 1) / 2;
  if (ph < 2 || pw < 2) throw std::invalid_argument("image too small for descriptor assembly");
  const std::size_t gh = ph - 1, gw = pw - 1;
  const std::size_t rows = (gh + cfg.vq_stride - 1) / cfg.vq_stride;
  const std::size_t cols = (gw + cfg.vq_stride - 1) / cfg.vq_stride;
  return partition_regions(cfg.partition, rows, cols, 2 * cfg.vq_stride).size() * cfg.codebook_size;
}

PipelineModel learn_pipeline(std::span<const GrayImage> images, const RunConfig& cfg) {
  if (images.empty()) throw std::invalid_argument("learn: no training images");
  for (const auto& img : images) {
    if (img.height() != images.front().height() || img.width() != images.front().width()) {
      throw std::invalid_argument("learn: training images must share one size");
    }
  }
  SeededRng root(cfg.seed);
  SeededRng filter_rng = root.fork(1);
  SeededRng codebook_rng = root.fork(2);
  SeededRng projection_rng = root.fork(3);

  PipelineModel model;
  model.partition = cfg.partition;
  model.vq_stride = cfg.vq_stride;
  model.filters = learn_filters(images, cfg.filters_size, cfg.filters_count, cfg.filters_patches,
                                filter_rng, cfg.filters_iters);

  std::vector<DescriptorField> fields;
  fields.reserve(images.size());
  for (const auto& img : images)
    fields.push_back(assemble_descriptors(max_pool_3d(soft_convolve(img, model.filters))));
  model.codebook = learn_codebook(fields, cfg.codebook_size, cfg.codebook_samples, codebook_rng,
                                  cfg.codebook_iters);

  const std::size_t in_dim = pooled_length(images.front().height(), images.front().width(), cfg);
  model.projection = projection_matrix(in_dim, cfg.projection_dim, projection_rng);
  return model;
}

Matrix extract_features(std::span<const GrayImage> images, const PipelineModel& model, std::size_t threads) {
  const std::size_t n = images.size();
  Matrix out(model.projection.rows(), n);
  if (n == 0) return out;
  threads = std::max<std::size_t>(1, std::min(threads, n));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        // Each task writes only its own column.
        const MidFeature f = extract_midfeature(images[i], model);
        for (std::size_t r = 0; r < f.values.size(); ++r) out(r, i) = f.values[r];
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
        return;
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

Matrix raw_pixel_features(std::span<const GrayImage> images) {
  if (images.empty()) return {};
  const std::size_t len = images.front().height() * images.front().width();
  Matrix out(len, images.size());
  for (std::size_t j = 0; j < images.size(); ++j) {
    const auto px = images[j].pixels().data();
    if (px.size() != len) throw std::invalid_argument("raw_pixel_features: images differ in size");
    const double n = euclidean_norm(px);
    for (std::size_t r = 0; r < len; ++r) out(r, j) = n > 0.0 ? px[r] / n : 0.0;
  }
  return out;
}

}  // namespace midfea
