// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include "midfea/commands.hpp"
#include "midfea/dataset.hpp"
#include "midfea/lowlevel.hpp"
#include "midfea/matrix_io.hpp"
#include "midfea/midlevel.hpp"
#include "midfea/nslayer.hpp"
#include "midfea/pnm.hpp"
#include "midfea/synth.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace midfea;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

int run(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (code != 0) std::cerr << "midfea";
  if (code != 0)
    for (const auto& a : args) std::cerr << ' ' << a;
  if (code != 0) std::cerr << " failed (" << code << "): " << err.str();
  return code;
}

// --- 1 ---------------------------------------------------------------------
Outcome gradient_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SeededRng rng(1000 + seed);
    const std::size_t p = 2 + rng.below(7), d = 1 + rng.below(6), classes = 1 + rng.below(3);
    const std::size_t n = classes + rng.below(13 - classes);
    const Matrix X = testing::random_matrix(p, n, rng);
    const Matrix H = testing::random_matrix(d, n, rng, 0.0, 1.0);
    Matrix D = testing::random_matrix(p, d, rng);
    normalize_columns(D);
    const Matrix W = testing::random_matrix(d, p, rng);
    std::vector<double> b(d);
    for (double& v : b) v = rng.uniform(-1.0, 1.0);
    std::vector<std::size_t> labels;
    for (std::size_t s = 0; s < n; ++s) labels.push_back(s < classes ? s : rng.below(classes));
    ns::Hyper h;
    h.alpha = rng.uniform(0.1, 2.0);
    h.beta = rng.uniform(0.0, 1.0);
    h.gamma = rng.uniform(0.0, 1.0);
    h.lambda = rng.uniform(0.0, 1.0);
    const ns::Problem prob{X, labels, classes};

    // Decoder and encoder gradients against the full smoothed objective.
    const auto fD = [&](const Matrix& m) { return oracle::ns_objective(X, labels, classes, H, m, W, b, h, h.eps_row); };
    worst = std::max(worst, oracle::relative_error(ns::grad_D(X, H, D), oracle::fd_gradient(fD, D)));
    const ns::EncoderGrad g = ns::grad_Wb(X, H, W, b);
    const auto fW = [&](const Matrix& m) { return oracle::ns_objective(X, labels, classes, H, D, m, b, h, h.eps_row); };
    worst = std::max(worst, oracle::relative_error(h.alpha * g.W, oracle::fd_gradient(fW, W)));
    const auto fb = [&](const Matrix& m) {
      return oracle::ns_objective(X, labels, classes, H, D, W, m.data(), h, h.eps_row);
    };
    const Matrix bcol(d, 1, b);
    worst = std::max(worst, oracle::relative_error(h.alpha * Matrix(d, 1, g.b), oracle::fd_gradient(fb, bcol)));
    for (std::size_t c = 0; c < classes; ++c) {
      const ns::ClassBlock blk = ns::make_class_block(prob, c, H, W, b);
      const Matrix Hc = H.select_columns(blk.members);
      const auto gc = [&](const Matrix& m) { return oracle::block_g(X, labels, classes, c, H, m, D, W, b, h); };
      worst = std::max(worst, oracle::relative_error(ns::grad_Hc(blk, Hc, D, h), oracle::fd_gradient(gc, Hc)));
    }
  }
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst < 1e-5 && s < 60.0, "max relative error " + fmt("%.2e", worst) + " over 20 instances (bound 1e-5)"};
}

// --- 2 ---------------------------------------------------------------------
Outcome monotone_descent() {
  SeededRng data(2);
  const auto toy = testing::toy_problem(3, 20, 10, data);
  const ns::Problem prob{toy.X, toy.labels, 3};
  ns::Hyper h;
  h.d = 9;
  SeededRng rng(2);
  const ns::TrainResult r = ns::train(prob, h, rng);
  std::size_t bad = 0;
  for (std::size_t i = 1; i < r.step_trace.size(); ++i) bad += r.step_trace[i] > r.step_trace[i - 1];
  const bool pass = bad == 0 && r.epochs_run >= 50 && r.step_trace.size() > 1;
  return {pass, std::to_string(r.step_trace.size()) + " accepted steps over " + std::to_string(r.epochs_run) +
                    " epochs, " + std::to_string(bad) + " increases; objective " + fmt("%.4f", r.step_trace.front()) +
                    " -> " + fmt("%.4f", r.step_trace.back())};
}

// --- 3 ---------------------------------------------------------------------
Outcome illumination_invariance() {
  SeededRng rng(3);
  const FilterBank bank = testing::random_bank(7, 9, rng);
  std::size_t identical = 0, total = 0;
  for (int i = 0; i < 25; ++i) {
    const Matrix img = testing::random_matrix(24 + rng.below(40), 24 + rng.below(40), rng, 0.0, 1.0);
    const Tensor3 base = soft_convolve(img, bank);
    for (double c : {0.25, 0.5, 2.0, 4.0}) {
      identical += testing::bit_equal(soft_convolve(c * img, bank), base);
      ++total;
    }
  }
  return {identical == total, std::to_string(identical) + "/" + std::to_string(total) + " scaled outputs bit-identical"};
}

// --- 4 ---------------------------------------------------------------------
Outcome oracle_equivalence() {
  std::size_t pool_ok = 0, desc_ok = 0, vq_ok = 0, sp_ok = 0;
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    SeededRng rng(4000 + seed);
    const Tensor3 maps = testing::random_tensor(2 + rng.below(11), 2 + rng.below(11), 2 + rng.below(6), rng);
    pool_ok += testing::bit_equal(max_pool_3d(maps), oracle::max_pool_3d(maps));

    const Tensor3 pooled = testing::random_tensor(2 + rng.below(6), 2 + rng.below(6), 1 + rng.below(6), rng);
    desc_ok += testing::bit_equal(assemble_descriptors(pooled).values(), oracle::assemble_descriptors(pooled));

    const DescriptorField field = assemble_descriptors(pooled);
    const Matrix words = testing::random_matrix(field.dim(), 2 + rng.below(40), rng, 0.0, 1.0);
    const std::size_t stride = 1 + rng.below(2);
    const CodeMap codes = vq_encode(field, Codebook(words), stride);
    vq_ok += codes.codes == oracle::vq_encode(field.values(), words, stride);

    CodeMap random_codes;
    random_codes.rows = 1 + rng.below(16);
    random_codes.cols = 1 + rng.below(16);
    random_codes.stride = stride;
    const std::size_t m = 2 + rng.below(12);
    for (std::size_t i = 0; i < random_codes.rows * random_codes.cols; ++i)
      random_codes.codes.push_back(static_cast<std::uint32_t>(rng.below(m)));
    const std::size_t cell = 2 + rng.below(12);
    bool all = true;
    for (const auto& part : {PartitionSpec::pyramid(1 + rng.below(3)), PartitionSpec::grid(1 + rng.below(4), 1 + rng.below(4)),
                             PartitionSpec::overlap(cell, 1 + rng.below(cell))}) {
      all = all && spatial_pool(random_codes, m, part) ==
                       oracle::spatial_pool(random_codes.codes, random_codes.rows, random_codes.cols,
                                            random_codes.pixel_step(), m, part);
    }
    sp_ok += all;
  }
  const bool pass = pool_ok == 50 && desc_ok == 50 && vq_ok == 50 && sp_ok == 50;
  return {pass, "max_pool_3d " + std::to_string(pool_ok) + "/50, assemble_descriptors " + std::to_string(desc_ok) +
                    "/50, vq_encode " + std::to_string(vq_ok) + "/50, spatial_pool " + std::to_string(sp_ok) + "/50"};
}

// --- 5 ---------------------------------------------------------------------
Outcome shape_laws() {
  SeededRng rng(5);
  const FilterBank bank = testing::random_bank(7, 9, rng);
  const Tensor3 maps = soft_convolve(testing::random_matrix(64, 64, rng, 0.0, 1.0), bank);
  const Tensor3 pooled = max_pool_3d(maps);
  const DescriptorField field = assemble_descriptors(pooled);
  CodeMap codes;
  codes.rows = field.height();
  codes.cols = field.width();
  codes.codes.assign(codes.rows * codes.cols, 0);
  const std::size_t len = spatial_pool(codes, 500, PartitionSpec::pyramid(3)).size();
  const bool pass = maps.depth() == 9 && pooled.depth() == 36 && field.dim() == 144 && len == 21 * 500;
  return {pass, "9 filters -> " + std::to_string(pooled.depth()) + " pooled maps -> " + std::to_string(field.dim()) +
                    "-dim descriptors; pyramid(3) length " + std::to_string(len) + " = 21 x 500"};
}

// --- 6 ---------------------------------------------------------------------
Outcome random_projection_jl() {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t in = 20000, out = 3000, pairs = 1000;
  SeededRng rng(6);
  auto unit = [&] {
    std::vector<double> v(in);
    for (double& x : v) x = rng.normal();
    const double n = euclidean_norm(v);
    for (double& x : v) x /= n;
    return v;
  };
  Matrix diffs(in, pairs);
  std::vector<double> dist(pairs);
  for (std::size_t k = 0; k < pairs; ++k) {
    const auto u = unit(), v = unit();
    for (std::size_t i = 0; i < in; ++i) diffs(i, k) = u[i] - v[i];
    dist[k] = std::sqrt(squared_distance(u, v));
  }
  SeededRng prng(66);
  const Matrix proj = matmul(projection_matrix(in, out, prng), diffs);
  double worst = 0.0;
  std::size_t within = 0;
  for (std::size_t k = 0; k < pairs; ++k) {
    double ss = 0.0;
    for (std::size_t r = 0; r < out; ++r) ss += proj(r, k) * proj(r, k);
    const double distortion = std::abs(std::sqrt(ss) / dist[k] - 1.0);
    worst = std::max(worst, distortion);
    within += distortion <= 0.10;
  }
  const double frac = static_cast<double>(within) / static_cast<double>(pairs);
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {worst <= 0.15 && frac >= 0.99 && s < 120.0,
          "max distortion " + fmt("%.4f", worst) + " (bound 0.15), " + fmt("%.1f", 100.0 * frac) + "% within 0.10"};
}

// --- 7, 8, 10: full pipeline runs ---------------------------------------------
struct PipelineRun {
  bool ok = false;
  double midfea = 0, ns = 0, raw = 0;
  std::string eval;
};

PipelineRun full_pipeline(const fs::path& data, const fs::path& work) {
  PipelineRun r;
  const std::string w = work.string(), d = data.string();
  for (const std::vector<std::string>& args :
       {std::vector<std::string>{"--seed", "1", "--threads", "1", "--out", w, "learn", "--data", d},
        {"--threads", "1", "--out", w, "extract", "--data", d},
        {"--threads", "1", "--out", w, "train-ns"},
        {"--threads", "1", "--out", w, "train-clf"},
        {"--threads", "1", "--out", w, "eval", "--data", d}}) {
    if (run(args) != 0) return r;
  }
  r.eval = testing::slurp(work / "eval.txt");
  std::istringstream in(r.eval);
  for (std::string line; std::getline(in, line);) {
    const auto eq = line.find('=');
    const std::string key = line.substr(0, eq);
    const double v = std::stod(line.substr(eq + 1));
    if (key == "midfea_accuracy") r.midfea = v;
    if (key == "midfea_ns_accuracy") r.ns = v;
    if (key == "raw_pixel_accuracy") r.raw = v;
  }
  r.ok = true;
  return r;
}

Outcome end_to_end(const PipelineRun& r, double seconds) {
  if (!r.ok) return {false, "pipeline run failed"};
  const bool pass = r.midfea >= 0.90 && r.raw <= r.midfea - 0.05 && r.ns >= r.midfea - 0.01 && seconds < 600.0;
  std::string note = r.ns > r.midfea ? " (NS strictly better)" : " (NS not strictly better)";
  return {pass, "MidFea " + fmt("%.4f", r.midfea) + ", raw pixels " + fmt("%.4f", r.raw) + ", MidFea-NS " +
                    fmt("%.4f", r.ns) + note + "; " + fmt("%.0f", seconds) + " s"};
}

Outcome bench(const fs::path& work, const fs::path& scratch) {
  SeededRng rng(8);
  const GrayImage img = synth_image(1, 4, 150, rng);
  const fs::path image = scratch / "bench150.pgm";
  write_pgm(image, 255.0 * img.pixels());
  if (run({"--threads", "1", "--out", scratch.string(), "bench", "--image", image.string(), "--model", work.string()}) != 0)
    return {false, "bench command failed"};
  std::istringstream csv(testing::slurp(scratch / "bench.csv"));
  std::size_t rows = 0;
  double total = -1.0;
  for (std::string line; std::getline(csv, line); ++rows)
    if (line.rfind("total,", 0) == 0) total = std::stod(line.substr(6));
  const bool pass = rows == 9 && total >= 0.0 && total < 868.0;
  return {pass, "150x150 total " + fmt("%.1f", total) + " ms (bound 868 ms; engineering target 50 ms " +
                    (total < 50.0 ? "met" : "missed") + "), CSV rows " + std::to_string(rows)};
}

// --- 9 ---------------------------------------------------------------------
Outcome selectivity() {
  SeededRng data(9);
  const auto toy = testing::toy_problem(3, 20, 10, data);
  const ns::Problem prob{toy.X, toy.labels, 3};
  auto train_with = [&](double gamma) {
    ns::Hyper h;
    h.d = 9;
    h.gamma = gamma;
    h.epochs = 100;
    h.tol = 0.0;
    SeededRng rng(9);
    return ns::train(prob, h, rng);
  };
  const ns::TrainResult base = train_with(ns::Hyper{}.gamma);
  const Matrix A = ns::infer_batch(toy.X, base.model);
  double within = 0.0, cross = 0.0;
  std::size_t nw = 0, nc = 0;
  for (std::size_t i = 0; i < A.cols(); ++i)
    for (std::size_t j = i + 1; j < A.cols(); ++j) {
      const auto a = A.column(i), b = A.column(j);
      const double cosine = dot(a, b) / (euclidean_norm(a) * euclidean_norm(b));
      if (toy.labels[i] == toy.labels[j]) {
        within += cosine;
        ++nw;
      } else {
        cross += cosine;
        ++nc;
      }
    }
  within /= static_cast<double>(nw);
  cross /= static_cast<double>(nc);
  const double big = ns::cross_class_coherence(train_with(10.0 * ns::Hyper{}.gamma).H, toy.labels, 3);
  const double none = ns::cross_class_coherence(train_with(0.0).H, toy.labels, 3);
  return {within > cross && big < none, "cosine within " + fmt("%.4f", within) + " vs cross " + fmt("%.4f", cross) +
                                            "; coherence gamma=1.0 " + fmt("%.4g", big) + " vs gamma=0 " +
                                            fmt("%.4g", none)};
}

// --- 10 --------------------------------------------------------------------
Outcome determinism(const PipelineRun& a, const PipelineRun& b, const fs::path& wa, const fs::path& wb) {
  if (!a.ok || !b.ok) return {false, "pipeline run failed"};
  std::size_t files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(wa)) {
    if (!e.is_regular_file()) continue;
    const fs::path rel = fs::relative(e.path(), wa);
    if (rel == "bench.csv") continue;  // wall-clock timings
    ++files;
    if (!fs::exists(wb / rel) || testing::slurp(e.path()) != testing::slurp(wb / rel)) {
      ++differ;
      std::cerr << "differs: " << rel.string() << "\n";
    }
  }
  return {differ == 0 && a.eval == b.eval && files > 0,
          std::to_string(files) + " artifact files compared, " + std::to_string(differ) + " differ; eval reports " +
              (a.eval == b.eval ? "identical" : "differ")};
}

}  // namespace

int main() {
  using Clock = std::chrono::steady_clock;
  int failures = 0;
  auto report = [&](int id, const std::string& name, const std::function<Outcome()>& check) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double s = std::chrono::duration<double>(Clock::now() - t0).count();
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << name << " -- " << o.detail << " ["
              << fmt("%.1f", s) << " s]" << std::endl;
  };

  testing::TempDir tmp;
  const fs::path data = tmp.path() / "synth";
  PipelineRun first, second;
  double first_seconds = 0.0;
  {
    std::ostringstream sink, err;
    if (run_cli({"--seed", "1", "--out", data.string(), "synth", "--classes", "4", "--per-class", "80", "--size", "64"},
                sink, err) != 0)
      std::cerr << err.str();
  }

  report(1, "gradient oracle suite", gradient_oracles);
  report(2, "monotone descent", monotone_descent);
  report(3, "exact illumination invariance", illumination_invariance);
  report(4, "oracle equivalence", oracle_equivalence);
  report(5, "shape laws", shape_laws);
  report(6, "random projection JL check", random_projection_jl);
  report(7, "end-to-end synthetic classification", [&] {
    const auto t0 = Clock::now();
    first = full_pipeline(data, tmp.path() / "run1");
    first_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    return end_to_end(first, first_seconds);
  });
  report(8, "feed-forward benchmark", [&] { return bench(tmp.path() / "run1", tmp.path()); });
  report(9, "neuron selectivity", selectivity);
  report(10, "determinism", [&] {
    second = full_pipeline(data, tmp.path() / "run2");
    return determinism(first, second, tmp.path() / "run1", tmp.path() / "run2");
  });
  std::cout << (failures == 0 ? "all 10 criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
