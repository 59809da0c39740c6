#include <doctest.h>

#include <random>

#include "leafseg/filtering.hpp"
#include "leafseg/rng.hpp"
#include "oracles.hpp"

using namespace leafseg;

namespace {

RasterImage random_raster(std::mt19937& gen, int w, int h, int channels,
                          int lo = 0, int hi = 255) {
  RasterImage img = make_image(w, h, channels);
  for (auto& v : img.data)
    v = static_cast<std::uint8_t>(
        lo + uniform_below(gen, static_cast<std::uint32_t>(hi - lo + 1)));
  return img;
}

std::vector<std::vector<std::int64_t>> weights_of(const FilterMask& mask) {
  std::vector<std::vector<std::int64_t>> rows(static_cast<std::size_t>(mask.order));
  for (int r = 0; r < mask.order; ++r)
    for (int c = 0; c < mask.order; ++c)
      rows[static_cast<std::size_t>(r)].push_back(mask.weights(r, c));
  return rows;
}

}  // namespace

TEST_CASE("simple masks are all ones") {
  const FilterMask mask = build_mask(MaskKind::simple, 3);
  CHECK(mask.weights == Eigen::MatrixXi::Ones(3, 3));
  CHECK(mask.weight_sum == 9);
}

TEST_CASE("the 3x3 weighted mask is the diamond 1-2-1 / 2-4-2 / 1-2-1") {
  const FilterMask mask = build_mask(MaskKind::weighted, 3);
  Eigen::MatrixXi expected(3, 3);
  expected << 1, 2, 1, 2, 4, 2, 1, 2, 1;
  CHECK(mask.weights == expected);
  CHECK(mask.weight_sum == 16);
}

TEST_CASE("weighted masks halve per Manhattan step from a 2^(k-1) center") {
  for (const int k : {3, 5, 7, 9, 11}) {
    const FilterMask mask = build_mask(MaskKind::weighted, k);
    const int center = (k - 1) / 2;
    CHECK(mask.weights(center, center) == (1 << (k - 1)));
    for (int r = 0; r < k; ++r)
      for (int c = 0; c < k; ++c) {
        const int d = std::abs(r - center) + std::abs(c - center);
        CHECK(mask.weights(r, c) == (1 << (k - 1 - d)));
      }
    // symmetric under flips and transpose
    CHECK(mask.weights == mask.weights.transpose().eval());
    CHECK(mask.weights == mask.weights.rowwise().reverse().eval());
    CHECK(mask.weights == mask.weights.colwise().reverse().eval());
  }
}

TEST_CASE("even mask orders are rejected, off-grid odd orders warn") {
  CHECK_THROWS(build_mask(MaskKind::simple, 4));
  CHECK_THROWS(build_mask(MaskKind::weighted, 0));
  std::string warning;
  const FilterMask mask = build_mask(MaskKind::simple, 13, &warning);
  CHECK(mask.order == 13);
  CHECK(!warning.empty());
  warning.clear();
  build_mask(MaskKind::simple, 15, &warning);
  CHECK(warning.empty());
}

TEST_CASE("smoothing a constant image changes nothing") {
  const RasterImage img = make_image(20, 16, 3, 200);
  for (const int k : {3, 5, 7}) {
    CHECK(apply_linear_filter(img, build_mask(MaskKind::simple, k)) == img);
    CHECK(apply_linear_filter(img, build_mask(MaskKind::weighted, k)) == img);
  }
}

TEST_CASE("weighted smoothing of a single bright pixel matches hand evaluation") {
  RasterImage img = make_image(5, 5, 1, 0);
  img.at(2, 2) = 16;
  const RasterImage out = apply_linear_filter(img, build_mask(MaskKind::weighted, 3));
  CHECK(out.at(2, 2) == 4);  // round(16 * 4 / 16)
  CHECK(out.at(1, 2) == 2);  // round(16 * 2 / 16)
  CHECK(out.at(1, 1) == 1);  // round(16 * 1 / 16)
}

TEST_CASE("smoothing equals the naive reference bit-exactly on random images") {
  std::mt19937 gen(7101);
  for (int trial = 0; trial < 4; ++trial) {
    const RasterImage img = random_raster(gen, 64, 64, trial % 2 ? 3 : 1);
    for (const MaskKind kind : {MaskKind::simple, MaskKind::weighted})
      for (const int k : {3, 5, 7, 9, 11, 15, 35}) {
        if (kind == MaskKind::weighted && k > 11) continue;
        const FilterMask mask = build_mask(kind, k);
        CHECK(apply_linear_filter(img, mask) ==
              oracles::naive_linear_filter(img, weights_of(mask)));
      }
  }
}

TEST_CASE("smoothed interior values stay within the window bounds") {
  std::mt19937 gen(7102);
  const RasterImage img = random_raster(gen, 32, 32, 1);
  const FilterMask mask = build_mask(MaskKind::weighted, 5);
  const RasterImage out = apply_linear_filter(img, mask);
  for (int y = 2; y < 30; ++y)
    for (int x = 2; x < 30; ++x) {
      int lo = 255, hi = 0;
      for (int dy = -2; dy <= 2; ++dy)
        for (int dx = -2; dx <= 2; ++dx) {
          lo = std::min(lo, static_cast<int>(img.at(x + dx, y + dy)));
          hi = std::max(hi, static_cast<int>(img.at(x + dx, y + dy)));
        }
      CHECK(out.at(x, y) >= lo);
      CHECK(out.at(x, y) <= hi);
    }
}

TEST_CASE("masks larger than the image are rejected") {
  const RasterImage img = make_image(4, 4, 1);
  CHECK_THROWS(apply_linear_filter(img, build_mask(MaskKind::simple, 5)));
}

TEST_CASE("zero noise density is the identity") {
  std::mt19937 gen(7103);
  const RasterImage img = random_raster(gen, 16, 12, 3);
  CHECK(inject_salt_pepper(img, NoiseSpec{0.0, NoiseChannel::all, 1}) == img);
}

TEST_CASE("full density turns every sample into an extreme") {
  std::mt19937 gen(7104);
  const RasterImage img = random_raster(gen, 16, 12, 3, 1, 254);
  const RasterImage out = inject_salt_pepper(img, NoiseSpec{1.0, NoiseChannel::all, 2});
  for (const std::uint8_t v : out.data) CHECK((v == 0 || v == 255));
}

TEST_CASE("ten percent on the green channel corrupts exactly 7680 samples") {
  std::mt19937 gen(7105);
  const RasterImage img = random_raster(gen, 320, 240, 3, 1, 254);
  const RasterImage out =
      inject_salt_pepper(img, NoiseSpec{0.10, NoiseChannel::green, 3});
  std::int64_t changed[3] = {0, 0, 0};
  for (std::int64_t i = 0; i < img.pixel_count(); ++i)
    for (int c = 0; c < 3; ++c)
      if (img.data[static_cast<std::size_t>(3 * i + c)] !=
          out.data[static_cast<std::size_t>(3 * i + c)])
        ++changed[c];
  CHECK(changed[0] == 0);
  CHECK(changed[1] == 7680);  // round(0.10 * 320 * 240)
  CHECK(changed[2] == 0);
}

TEST_CASE("noise counts equal round(density * pixels) per affected channel") {
  std::mt19937 gen(7106);
  const RasterImage img = random_raster(gen, 37, 23, 3, 1, 254);
  for (const double density : {0.031, 0.25, 0.6183}) {
    const RasterImage out =
        inject_salt_pepper(img, NoiseSpec{density, NoiseChannel::all, 4});
    const std::int64_t expected = static_cast<std::int64_t>(
        std::floor(density * static_cast<double>(img.pixel_count()) + 0.5));
    std::int64_t changed[3] = {0, 0, 0};
    std::int64_t extremes = 0;
    for (std::int64_t i = 0; i < img.pixel_count(); ++i)
      for (int c = 0; c < 3; ++c) {
        const std::uint8_t v = out.data[static_cast<std::size_t>(3 * i + c)];
        if (img.data[static_cast<std::size_t>(3 * i + c)] != v) {
          ++changed[c];
          extremes += v == 0 || v == 255;
        }
      }
    CHECK(changed[0] == expected);
    CHECK(changed[1] == expected);
    CHECK(changed[2] == expected);
    CHECK(extremes == 3 * expected);
  }
}

TEST_CASE("noise injection is reproducible from the seed") {
  std::mt19937 gen(7107);
  const RasterImage img = random_raster(gen, 24, 24, 3);
  const NoiseSpec spec{0.2, NoiseChannel::all, 99};
  CHECK(inject_salt_pepper(img, spec) == inject_salt_pepper(img, spec));
  const RasterImage other = inject_salt_pepper(img, NoiseSpec{0.2, NoiseChannel::all, 100});
  CHECK(inject_salt_pepper(img, spec) != other);
}

TEST_CASE("invalid noise specs are rejected") {
  const RasterImage rgb = make_image(4, 4, 3);
  CHECK_THROWS(inject_salt_pepper(rgb, NoiseSpec{1.5, NoiseChannel::all, 1}));
  CHECK_THROWS(inject_salt_pepper(rgb, NoiseSpec{-0.1, NoiseChannel::all, 1}));
  const RasterImage gray = make_image(4, 4, 1);
  CHECK_THROWS(inject_salt_pepper(gray, NoiseSpec{0.1, NoiseChannel::red, 1}));
  CHECK_NOTHROW(inject_salt_pepper(gray, NoiseSpec{0.1, NoiseChannel::all, 1}));
}
