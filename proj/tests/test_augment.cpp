#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "crowdmap/augment.hpp"
#include "crowdmap/density_core.hpp"

#include "oracle_helpers.hpp"

using namespace crowdmap;

TEST_CASE("slide_patches") {
  SECTION("396x396 with window 256 stride 70 yields 3x3 origins") {
    const auto origins = slide_patches(Shape{396, 396}, PatchSpec{256, 70});
    REQUIRE(origins.size() == 9);
    CHECK(origins.front() == PatchOrigin{0, 0});
    CHECK(origins.back() == PatchOrigin{140, 140});
  }

  SECTION("exact fit yields the single origin") {
    const auto origins = slide_patches(Shape{256, 256}, PatchSpec{256, 70});
    REQUIRE(origins.size() == 1);
    CHECK(origins[0] == PatchOrigin{0, 0});
  }

  SECTION("too-small extent yields nothing") {
    CHECK(slide_patches(Shape{200, 300}, PatchSpec{256, 70}).empty());
  }

  SECTION("row-major order") {
    const auto origins = slide_patches(Shape{300, 300}, PatchSpec{100, 100});
    REQUIRE(origins.size() == 9);
    CHECK(origins[1] == PatchOrigin{0, 100});
    CHECK(origins[3] == PatchOrigin{100, 0});
  }

  SECTION("matches brute-force enumeration on random geometry") {
    std::mt19937_64 rng(60);
    for (int trial = 0; trial < 200; ++trial) {
      const int rows = 1 + static_cast<int>(rng() % 400);
      const int cols = 1 + static_cast<int>(rng() % 400);
      const int window = 1 + static_cast<int>(rng() % 300);
      const int stride = 1 + static_cast<int>(rng() % 100);
      const auto got = slide_patches(Shape{rows, cols}, PatchSpec{window, stride});
      const auto want = oracle::brute_force_origins(Shape{rows, cols}, window,
                                                    stride);
      REQUIRE(got == want);
    }
  }

  SECTION("invalid spec is an error") {
    CHECK_THROWS_AS(slide_patches(Shape{10, 10}, PatchSpec{0, 5}),
                    ValidationError);
    CHECK_THROWS_AS(slide_patches(Shape{10, 10}, PatchSpec{5, 0}),
                    ValidationError);
  }
}

TEST_CASE("cut_patch") {
  std::mt19937_64 rng(61);
  const auto ann = oracle::random_annotation(rng, 64, 64, 25, "img");
  const DensityMap map = gen_fixed(ann, 2.0);

  SECTION("window covering the whole image is the identity") {
    const Patch patch = cut_patch(ann, map, PatchOrigin{0, 0}, 64);
    CHECK(patch.annotation.heads.size() == ann.heads.size());
    CHECK(patch.map.values == map.values);
  }

  SECTION("empty window has no heads and no mass") {
    ImageAnnotation one{"img", Shape{64, 64}, {Point2D{8, 8}}};
    const DensityMap m = gen_fixed(one, 1.0);
    const Patch patch = cut_patch(one, m, PatchOrigin{32, 32}, 32);
    CHECK(patch.annotation.heads.empty());
    CHECK(patch.map.sum() == Catch::Approx(0.0).margin(1e-12));
  }

  SECTION("heads re-base to patch coordinates, half-open membership") {
    ImageAnnotation two{"img", Shape{64, 64},
                        {Point2D{10, 31.5}, Point2D{10, 32.0}}};
    const DensityMap m = gen_fixed(two, 1.0);
    const Patch left = cut_patch(two, m, PatchOrigin{0, 0}, 32);
    const Patch right = cut_patch(two, m, PatchOrigin{0, 32}, 32);
    REQUIRE(left.annotation.heads.size() == 1);
    REQUIRE(right.annotation.heads.size() == 1);
    CHECK(left.annotation.heads[0] == Point2D{10, 31.5});
    CHECK(right.annotation.heads[0] == Point2D{10, 0.0});
  }

  SECTION("disjoint tiling conserves total mass and head count") {
    const int window = 16;
    double mass = 0.0;
    std::size_t heads = 0;
    for (int r = 0; r < 64; r += window) {
      for (int c = 0; c < 64; c += window) {
        const Patch patch = cut_patch(ann, map, PatchOrigin{r, c}, window);
        mass += patch.map.sum();
        heads += patch.annotation.heads.size();
      }
    }
    CHECK(mass == Catch::Approx(map.sum()).margin(1e-9));
    CHECK(heads == ann.heads.size());
  }

  SECTION("patch ids encode the origin") {
    const Patch patch = cut_patch(ann, map, PatchOrigin{16, 32}, 16);
    CHECK(patch.annotation.image_id == "img__r16_c32");
  }

  SECTION("out-of-range origin is an error") {
    CHECK_THROWS_AS(cut_patch(ann, map, PatchOrigin{60, 0}, 16),
                    ValidationError);
    CHECK_THROWS_AS(cut_patch(ann, map, PatchOrigin{-1, 0}, 16),
                    ValidationError);
  }

  SECTION("straddling mass discrepancy is surfaced") {
    ImageAnnotation edge{"img", Shape{64, 64}, {Point2D{10, 32.5}}};
    const DensityMap m = gen_fixed(edge, 3.0);
    const Patch patch = cut_patch(edge, m, PatchOrigin{0, 0}, 32);
    CHECK(patch.annotation.heads.empty());
    CHECK(patch.map.sum() > 0.01);
    CHECK(patch.mass_discrepancy == Catch::Approx(patch.map.sum()));
  }
}

TEST_CASE("apply_noise") {
  GrayImage img(24, 24, 128);

  SECTION("degenerate spec is the identity") {
    NoiseSpec spec;
    spec.gaussian_stddev = 0.0;
    spec.brightness_delta = 0.0;
    spec.contrast_lo = spec.contrast_hi = 1.0;
    spec.seed = 5;
    CHECK(apply_noise(img, spec) == img);
  }

  SECTION("same seed gives byte-identical output") {
    NoiseSpec spec;
    spec.seed = 1234;
    const GrayImage a = apply_noise(img, spec);
    const GrayImage b = apply_noise(img, spec);
    CHECK(a == b);
    spec.seed = 1235;
    CHECK_FALSE(apply_noise(img, spec) == a);
  }

  SECTION("pure brightness shifts every pixel") {
    NoiseSpec spec;
    spec.gaussian_stddev = 0.0;
    spec.contrast_lo = spec.contrast_hi = 1.0;
    spec.brightness_delta = 10.0;
    NoiseDraw draw;
    const GrayImage out = apply_noise(img, spec, &draw);
    for (std::size_t i = 0; i < out.pixels.size(); ++i) {
      REQUIRE(static_cast<double>(out.pixels[i]) ==
              Catch::Approx(128.0 + draw.brightness).margin(0.5));
    }
  }

  SECTION("clamping keeps values in range") {
    GrayImage bright(8, 8, 250);
    NoiseSpec spec;
    spec.gaussian_stddev = 40.0;
    spec.seed = 9;
    const GrayImage out = apply_noise(bright, spec);
    for (auto p : out.pixels) REQUIRE(p <= 255);
  }

  SECTION("bad contrast interval is an error") {
    NoiseSpec spec;
    spec.contrast_lo = 1.5;
    spec.contrast_hi = 0.5;
    CHECK_THROWS_AS(apply_noise(img, spec), ValidationError);
  }
}

TEST_CASE("cut_image matches cut_patch geometry") {
  GrayImage img(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      img.at(r, c) = static_cast<std::uint8_t>((r * 32 + c) % 251);
    }
  }
  const GrayImage sub = cut_image(img, PatchOrigin{4, 8}, 16);
  REQUIRE(sub.rows == 16);
  REQUIRE(sub.cols == 16);
  CHECK(sub.at(0, 0) == img.at(4, 8));
  CHECK(sub.at(15, 15) == img.at(19, 23));
  CHECK_THROWS_AS(cut_image(img, PatchOrigin{20, 20}, 16), ValidationError);
}
