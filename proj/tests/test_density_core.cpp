#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "crowdmap/density_core.hpp"

#include "oracle_helpers.hpp"

using namespace crowdmap;

TEST_CASE("impulse map") {
  SECTION("no heads gives a zero grid") {
    const DensityMap m = impulse_map({}, Shape{5, 5});
    CHECK(m.sum() == 0.0);
  }

  SECTION("single head puts a single unit spike") {
    const DensityMap m = impulse_map({Point2D{2, 3}}, Shape{5, 5});
    CHECK(m.at(2, 3) == 1.0);
    CHECK(m.sum() == 1.0);
  }

  SECTION("coincident heads accumulate") {
    const DensityMap m =
        impulse_map({Point2D{2, 3}, Point2D{2, 3}}, Shape{5, 5});
    CHECK(m.at(2, 3) == 2.0);
    CHECK(m.sum() == 2.0);
  }

  SECTION("fractional coordinates round, ties toward the smaller index") {
    const DensityMap m =
        impulse_map({Point2D{2.5, 3.5}, Point2D{2.6, 3.4}}, Shape{6, 6});
    CHECK(m.at(2, 3) == 1.0);  // 2.5 -> 2, 3.5 -> 3
    CHECK(m.at(3, 3) == 1.0);  // 2.6 -> 3, 3.4 -> 3
  }

  SECTION("head outside the grid is an error") {
    CHECK_THROWS_AS(impulse_map({Point2D{5, 0}}, Shape{5, 5}), ValidationError);
  }

  SECTION("sum equals head count exactly for random inputs") {
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      const int p = static_cast<int>(rng() % 100);
      const auto ann = oracle::random_annotation(rng, 64, 48, p);
      CHECK(impulse_map(ann.heads, ann.shape).sum() == static_cast<double>(p));
    }
  }
}

TEST_CASE("splat_gaussian") {
  SECTION("each splat adds exactly one person of mass") {
    DensityMap m(40, 40);
    splat_gaussian(m, Point2D{20.25, 19.5}, KernelSpec{2.0, 3.0, 3.0});
    CHECK(m.sum() == Catch::Approx(1.0).margin(1e-9));
    splat_gaussian(m, Point2D{0.0, 0.0}, KernelSpec{5.0, 5.0, 3.0});
    CHECK(m.sum() == Catch::Approx(2.0).margin(1e-9));
  }

  SECTION("interior unit-sigma peak matches the 7x7 table") {
    DensityMap m(101, 101);
    splat_gaussian(m, Point2D{50, 50}, KernelSpec{1.0, 1.0, 3.0});
    // Direct normalization of exp(-(r^2+c^2)/2) over a 7x7 window.
    CHECK(m.at(50, 50) == Catch::Approx(0.15924112569070242).epsilon(1e-10));
  }

  SECTION("corner splat renormalizes to full mass") {
    DensityMap m(30, 30);
    splat_gaussian(m, Point2D{0.0, 29.0}, KernelSpec{4.0, 4.0, 3.0});
    CHECK(m.sum() == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("center outside the map is an error") {
    DensityMap m(10, 10);
    CHECK_THROWS_AS(splat_gaussian(m, Point2D{10, 3}, KernelSpec{1, 1, 3}),
                    ValidationError);
  }

  SECTION("degenerate tiny sigma still deposits unit mass") {
    DensityMap m(16, 16);
    splat_gaussian(m, Point2D{7.5, 8.5}, KernelSpec{1e-4, 1e-4, 3.0});
    CHECK(m.sum() == Catch::Approx(1.0).margin(1e-9));
    CHECK(m.max_value() > 0.0);
  }

  SECTION("translation equivariance on the interior") {
    DensityMap a(64, 64), b(64, 64);
    const KernelSpec k{1.7, 1.7, 3.0};
    splat_gaussian(a, Point2D{30.3, 31.8}, k);
    splat_gaussian(b, Point2D{31.3, 31.8}, k);
    for (int r = 10; r < 54; ++r) {
      for (int c = 10; c < 54; ++c) {
        REQUIRE(a.at(r, c) == Catch::Approx(b.at(r + 1, c)).margin(1e-12));
      }
    }
  }

  SECTION("isotropic interior splat is symmetric under transpose") {
    DensityMap m(41, 41);
    splat_gaussian(m, Point2D{20, 20}, KernelSpec{2.5, 2.5, 3.0});
    for (int r = 0; r < 41; ++r) {
      for (int c = 0; c < r; ++c) {
        REQUIRE(m.at(r, c) == Catch::Approx(m.at(c, r)).margin(1e-15));
      }
    }
  }
}

TEST_CASE("splatting equals brute-force gather convolution") {
  std::mt19937_64 rng(42);
  for (int trial = 0; trial < 6; ++trial) {
    const int p = 1 + static_cast<int>(rng() % 20);
    ImageAnnotation ann;
    ann.image_id = "t";
    ann.shape = Shape{64, 64};
    std::uniform_int_distribution<int> pos(0, 63);
    for (int i = 0; i < p; ++i) {
      ann.heads.push_back(Point2D{static_cast<double>(pos(rng)),
                                  static_cast<double>(pos(rng))});
    }
    const double sigma = 1.0 + 0.5 * static_cast<double>(trial);
    const DensityMap splatted = gen_fixed(ann, sigma);
    const DensityMap convolved =
        oracle::convolve_impulses(impulse_map(ann.heads, ann.shape), sigma, 3.0);
    for (std::size_t i = 0; i < splatted.values.size(); ++i) {
      REQUIRE(splatted.values[i] ==
              Catch::Approx(convolved.values[i]).margin(1e-9));
    }
  }
}

TEST_CASE("gen_fixed") {
  SECTION("empty annotation gives a zero map") {
    ImageAnnotation ann{"e", Shape{32, 32}, {}};
    CHECK(gen_fixed(ann, 4.0).sum() == 0.0);
  }

  SECTION("one head sums to one") {
    ImageAnnotation ann{"o", Shape{32, 32}, {Point2D{10, 10}}};
    CHECK(gen_fixed(ann, 4.0).sum() == Catch::Approx(1.0).margin(1e-9));
  }

  SECTION("count conservation for random annotations") {
    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 10; ++trial) {
      const int p = static_cast<int>(rng() % 120);
      const auto ann = oracle::random_annotation(rng, 96, 128, p);
      const double count = count_from_map(gen_fixed(ann, 4.0));
      CHECK(std::abs(count - p) <= 1e-6 * std::max(1, p));
    }
  }

  SECTION("maps are nonnegative") {
    std::mt19937_64 rng(5);
    const auto ann = oracle::random_annotation(rng, 50, 50, 30);
    const DensityMap m = gen_fixed(ann, 2.0);
    CHECK(*std::min_element(m.values.begin(), m.values.end()) >= 0.0);
  }

  SECTION("non-positive sigma is an error") {
    ImageAnnotation ann{"s", Shape{8, 8}, {}};
    CHECK_THROWS_AS(gen_fixed(ann, 0.0), ValidationError);
  }
}

TEST_CASE("knn_mean_distance") {
  SECTION("collinear worked example") {
    const std::vector<Point2D> heads{{5, 0}, {5, 2}, {5, 4}};
    const auto d = knn_mean_distance(heads, 1, 2);
    REQUIRE(d.has_value());
    CHECK(*d == Catch::Approx(2.0));
  }

  SECTION("single head has no neighbors") {
    CHECK_FALSE(knn_mean_distance({Point2D{1, 1}}, 0, 3).has_value());
  }

  SECTION("k larger than available neighbors averages over all of them") {
    const std::vector<Point2D> heads{{0, 0}, {0, 3}, {0, 6}};
    const auto d = knn_mean_distance(heads, 0, 10);
    REQUIRE(d.has_value());
    CHECK(*d == Catch::Approx((3.0 + 6.0) / 2.0));
  }

  SECTION("index out of range is an error") {
    CHECK_THROWS_AS(knn_mean_distance({Point2D{1, 1}}, 2, 1), ValidationError);
  }
}

TEST_CASE("gen_knn") {
  SECTION("beta scales the collinear example") {
    ImageAnnotation ann{"k", Shape{11, 11}, {{5, 1}, {5, 3}, {5, 5}}};
    KnnConfig cfg;
    cfg.k = 2;
    cfg.beta = 0.3;
    // middle head: sigma = 0.3 * 2 = 0.6, above the 0.5 floor
    const DensityMap m = gen_knn(ann, cfg);
    CHECK(m.sum() == Catch::Approx(3.0).margin(1e-9));
  }

  SECTION("single head equals gen_fixed with the fallback sigma") {
    ImageAnnotation ann{"k", Shape{32, 32}, {{16, 16}}};
    KnnConfig cfg;
    cfg.fallback_sigma = 4.0;
    const DensityMap knn = gen_knn(ann, cfg);
    const DensityMap fixed = gen_fixed(ann, 4.0);
    for (std::size_t i = 0; i < knn.values.size(); ++i) {
      REQUIRE(knn.values[i] == Catch::Approx(fixed.values[i]).margin(1e-15));
    }
  }

  SECTION("coincident heads hit the sigma floor and stay finite") {
    ImageAnnotation ann{"k", Shape{16, 16}, {{8, 8}, {8, 8}, {8, 8}}};
    const DensityMap m = gen_knn(ann, KnnConfig{});
    CHECK(m.sum() == Catch::Approx(3.0).margin(1e-9));
    for (double v : m.values) REQUIRE(std::isfinite(v));
  }

  SECTION("count conservation on random annotations") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 8; ++trial) {
      const int p = static_cast<int>(rng() % 80);
      const auto ann = oracle::random_annotation(rng, 100, 90, p);
      const double count = count_from_map(gen_knn(ann, KnnConfig{}));
      CHECK(std::abs(count - p) <= 1e-6 * std::max(1, p));
    }
  }
}

TEST_CASE("count_from_map and downscale") {
  SECTION("zero map counts zero") {
    CHECK(count_from_map(DensityMap(8, 8)) == 0.0);
  }

  SECTION("gen_fixed with seven heads counts seven") {
    std::mt19937_64 rng(23);
    const auto ann = oracle::random_annotation(rng, 64, 64, 7);
    CHECK(count_from_map(gen_fixed(ann, 4.0)) ==
          Catch::Approx(7.0).margin(1e-5));
  }

  SECTION("factor 1 is the identity") {
    std::mt19937_64 rng(29);
    const auto ann = oracle::random_annotation(rng, 20, 20, 5);
    const DensityMap m = gen_fixed(ann, 2.0);
    const DensityMap d = downscale_preserving_count(m, 1);
    CHECK(d.values == m.values);
  }

  SECTION("4x4 block of 0.25 collapses to a single 4.0 cell") {
    DensityMap m(4, 4);
    std::fill(m.values.begin(), m.values.end(), 0.25);
    const DensityMap d = downscale_preserving_count(m, 4);
    REQUIRE(d.rows == 1);
    REQUIRE(d.cols == 1);
    CHECK(d.at(0, 0) == Catch::Approx(4.0).margin(1e-12));
  }

  SECTION("count is preserved, including ragged extents") {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 10; ++trial) {
      const int rows = 17 + static_cast<int>(rng() % 40);
      const int cols = 13 + static_cast<int>(rng() % 40);
      const auto ann = oracle::random_annotation(rng, rows, cols, 25);
      const DensityMap m = gen_fixed(ann, 3.0);
      const DensityMap d = downscale_preserving_count(m, 4);
      CHECK(std::abs(d.sum() - m.sum()) <= 1e-9);
    }
  }

  SECTION("two passes compose like one when extents divide evenly") {
    std::mt19937_64 rng(37);
    const auto ann = oracle::random_annotation(rng, 24, 24, 15);
    const DensityMap m = gen_fixed(ann, 2.0);
    const DensityMap ab =
        downscale_preserving_count(downscale_preserving_count(m, 2), 3);
    const DensityMap once = downscale_preserving_count(m, 6);
    REQUIRE(ab.rows == once.rows);
    REQUIRE(ab.cols == once.cols);
    for (std::size_t i = 0; i < ab.values.size(); ++i) {
      REQUIRE(ab.values[i] == Catch::Approx(once.values[i]).margin(1e-9));
    }
  }

  SECTION("non-positive factor is an error") {
    CHECK_THROWS_AS(downscale_preserving_count(DensityMap(4, 4), 0),
                    ValidationError);
  }
}

TEST_CASE("dmap round trip and pgm render") {
  std::mt19937_64 rng(43);
  const auto ann = oracle::random_annotation(rng, 33, 21, 9);
  const DensityMap m = gen_fixed(ann, 2.0);

  const std::string path =
      (std::filesystem::temp_directory_path() / "crowdmap_test.dmap").string();
  write_dmap(path, m);
  const DensityMap back = read_dmap(path);
  std::filesystem::remove(path);

  REQUIRE(back.rows == m.rows);
  REQUIRE(back.cols == m.cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    // Interchange narrows to f32.
    REQUIRE(back.values[i] ==
            Catch::Approx(m.values[i]).margin(1e-6).epsilon(1e-6));
  }

  const GrayImage img = render_to_image(m);
  CHECK(*std::max_element(img.pixels.begin(), img.pixels.end()) == 255);
  const GrayImage black = render_to_image(DensityMap(5, 5));
  CHECK(*std::max_element(black.pixels.begin(), black.pixels.end()) == 0);
}
