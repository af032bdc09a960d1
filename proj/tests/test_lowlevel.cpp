#include <doctest.h>

#include <cmath>

#include "midfea/lowlevel.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace midfea;

namespace {

// Piecewise-constant images whose only structure is vertical step edges.
GrayImage vertical_edge_image(std::size_t size, SeededRng& rng) {
  std::vector<double> levels(size);
  double level = rng.uniform();
  for (std::size_t x = 0; x < size; ++x) {
    if (rng.uniform() < 0.15) level = rng.uniform();
    levels[x] = level;
  }
  Matrix px(size, size);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) px(y, x) = levels[x];
  return GrayImage(px);
}

}  // namespace

TEST_SUITE("lowlevel") {

TEST_CASE("filter bank requires at least two filters and round-trips through files") {
  SeededRng rng(1);
  CHECK_THROWS_AS(FilterBank(3, Matrix(9, 1)), std::invalid_argument);
  CHECK_THROWS_AS(FilterBank(3, Matrix(8, 2)), std::invalid_argument);
  const FilterBank bank = testing::random_bank(5, 4, rng);
  testing::TempDir dir;
  bank.save(dir.path() / "filters");
  CHECK(testing::slurp(dir.path() / "filters.txt") == "5 4\n");
  const FilterBank back = FilterBank::load(dir.path() / "filters");
  CHECK(back.side() == 5);
  CHECK(back.filters() == bank.filters());
}

TEST_CASE("learn_filters on vertical edges gives vertical filters") {
  SeededRng data(2);
  std::vector<GrayImage> images;
  for (int i = 0; i < 20; ++i) images.push_back(vertical_edge_image(32, data));
  SeededRng rng(3);
  const FilterBank bank = learn_filters(images, 7, 2, 100, rng);
  REQUIRE(bank.count() == 2);
  for (std::size_t j = 0; j < 2; ++j) {
    // Gradient-direction histogram: energy of horizontal vs vertical derivatives.
    double gx = 0.0, gy = 0.0;
    for (std::size_t u = 0; u < 7; ++u)
      for (std::size_t v = 0; v < 7; ++v) {
        const double here = bank.filters()(u * 7 + v, j);
        if (v + 1 < 7) gx += std::abs(bank.filters()(u * 7 + v + 1, j) - here);
        if (u + 1 < 7) gy += std::abs(bank.filters()((u + 1) * 7 + v, j) - here);
      }
    CHECK(gx > 0.0);
    CHECK(gy <= 1e-9 * gx);
  }
}

TEST_CASE("learn_filters rejects constant images and is deterministic") {
  SeededRng rng(1);
  const std::vector<GrayImage> flat{GrayImage(Matrix(20, 20, 0.5))};
  CHECK_THROWS_AS(learn_filters(flat, 7, 2, 50, rng), std::invalid_argument);

  SeededRng data(5);
  std::vector<GrayImage> images;
  for (int i = 0; i < 5; ++i) images.push_back(testing::random_image(24, 24, data));
  SeededRng a(8), b(8);
  CHECK(learn_filters(images, 7, 9, 40, a).filters() == learn_filters(images, 7, 9, 40, b).filters());
  CHECK_THROWS_AS(learn_filters(images, 7, 1, 40, a), std::invalid_argument);
  const std::vector<GrayImage> tiny{GrayImage(Matrix(5, 5, 0.1))};
  CHECK_THROWS_AS(learn_filters(tiny, 7, 2, 40, a), std::invalid_argument);
}

TEST_CASE("soft convolution of a zero image is zero") {
  SeededRng rng(4);
  const Tensor3 t = soft_convolve(Matrix(12, 12), testing::random_bank(3, 4, rng));
  CHECK(t.height() == 10);
  CHECK(t.width() == 10);
  CHECK(t.depth() == 4);
  for (double v : t.data()) CHECK(v == 0.0);
}

TEST_CASE("soft convolution matches the step-by-step oracle") {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SeededRng rng(seed);
    const GrayImage img = testing::random_image(12, 12, rng);
    const FilterBank bank = testing::random_bank(3 + 2 * rng.below(2), 3, rng);
    const Tensor3 lib = soft_convolve(img, bank);
    const Tensor3 ref = oracle::soft_convolve(img.pixels(), bank.filters(), bank.side());
    REQUIRE(lib.size() == ref.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < lib.size(); ++i) worst = std::max(worst, std::abs(lib.data()[i] - ref.data()[i]));
    CHECK(worst <= 1e-14);
  }
}

TEST_CASE("soft convolution properties") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    SeededRng rng(seed);
    const GrayImage img = testing::random_image(16, 19, rng);
    const FilterBank bank = testing::random_bank(5, 6, rng);
    const SoftConvStages st = soft_convolve_stages(img.pixels(), bank);
    for (std::size_t y = 0; y < st.final_maps.height(); ++y)
      for (std::size_t x = 0; x < st.final_maps.width(); ++x) {
        const auto f = st.final_maps.fiber(y, x);
        const double n = euclidean_norm(f);
        CHECK((std::abs(n - 1.0) <= 1e-12 || n == 0.0));
        for (double v : f) CHECK((v >= 0.0 && v <= 1.0));
        // A non-constant pre-threshold vector loses at least one entry.
        const auto pre = st.normalized.fiber(y, x);
        const bool constant = std::all_of(pre.begin(), pre.end(), [&](double v) { return v == pre[0]; });
        if (!constant) CHECK(std::count(st.thresholded.fiber(y, x).begin(), st.thresholded.fiber(y, x).end(), 0.0) >= 1);
      }
  }
}

TEST_CASE("soft convolution is exactly invariant to power-of-two illumination scaling") {
  SeededRng rng(6);
  const FilterBank bank = testing::random_bank(7, 9, rng);
  for (int i = 0; i < 5; ++i) {
    const Matrix img = testing::random_matrix(20, 20, rng, 0.0, 1.0);
    const Tensor3 base = soft_convolve(img, bank);
    for (double c : {0.25, 0.5, 2.0, 4.0}) CHECK(testing::bit_equal(soft_convolve(c * img, bank), base));
  }
}

TEST_CASE("soft convolution rejects images smaller than the filters") {
  SeededRng rng(1);
  CHECK_THROWS_AS(soft_convolve(Matrix(6, 10), testing::random_bank(7, 2, rng)), std::invalid_argument);
}

TEST_CASE("3D max-pooling shapes and values") {
  SeededRng rng(7);
  CHECK(max_pool_3d(testing::random_tensor(4, 4, 9, rng)).depth() == 36);
  const Tensor3 c = max_pool_3d(Tensor3(4, 4, 3, 0.375));
  CHECK(c.height() == 2);
  CHECK(c.width() == 2);
  CHECK(c.depth() == 3);
  for (double v : c.data()) CHECK(v == 0.375);
  // Odd trailing row and column are dropped.
  const Tensor3 odd = max_pool_3d(testing::random_tensor(7, 5, 2, rng));
  CHECK(odd.height() == 3);
  CHECK(odd.width() == 2);
  CHECK_THROWS_AS(max_pool_3d(Tensor3(4, 4, 1)), std::invalid_argument);
  CHECK(pair_index(0, 1, 9) == 0);
  CHECK(pair_index(0, 8, 9) == 7);
  CHECK(pair_index(1, 2, 9) == 8);
  CHECK(pair_index(7, 8, 9) == 35);
}

TEST_CASE("3D max-pooling matches the cuboid oracle") {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    SeededRng rng(seed);
    const Tensor3 t = testing::random_tensor(2 + rng.below(7), 2 + rng.below(7), 2 + rng.below(5), rng);
    CHECK(testing::bit_equal(max_pool_3d(t), oracle::max_pool_3d(t)));
  }
}

TEST_CASE("descriptor assembly") {
  const DescriptorField one = assemble_descriptors(Tensor3(2, 2, 1, {1, 2, 3, 4}));
  REQUIRE(one.count() == 1);
  const auto d = one.descriptor(0, 0);
  CHECK(std::vector<double>(d.begin(), d.end()) == std::vector<double>{1, 2, 3, 4});

  SeededRng rng(8);
  CHECK(assemble_descriptors(testing::random_tensor(3, 3, 36, rng)).dim() == 144);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor3 t = testing::random_tensor(2 + rng.below(5), 2 + rng.below(5), 1 + rng.below(4), rng);
    CHECK(testing::bit_equal(assemble_descriptors(t).values(), oracle::assemble_descriptors(t)));
  }
  CHECK_THROWS_AS(assemble_descriptors(Tensor3(1, 4, 2)), std::invalid_argument);
}

TEST_CASE("pipeline shape law") {
  SeededRng rng(9);
  const FilterBank bank = testing::random_bank(7, 9, rng);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{64, 64}, {30, 41}, {150, 150}, {10, 11}}) {
    const DescriptorField f = assemble_descriptors(max_pool_3d(soft_convolve(testing::random_image(h, w, rng), bank)));
    CHECK(f.height() == (h - 7 + 1) / 2 - 1);
    CHECK(f.width() == (w - 7 + 1) / 2 - 1);
    CHECK(f.dim() == 144);
  }
}

}  // TEST_SUITE
