#include <doctest.h>

#include <limits>
#include <random>
#include <span>
#include <string>

#include "leafseg/image.hpp"
#include "leafseg/rng.hpp"

using namespace leafseg;

namespace {

std::vector<std::uint8_t> bytes_of(const std::string& text) {
  return {text.begin(), text.end()};
}

RasterImage random_image(std::mt19937& gen, int max_dim = 12) {
  const int w = 1 + static_cast<int>(uniform_below(gen, static_cast<std::uint32_t>(max_dim)));
  const int h = 1 + static_cast<int>(uniform_below(gen, static_cast<std::uint32_t>(max_dim)));
  const int c = uniform_below(gen, 2) ? 3 : 1;
  RasterImage img = make_image(w, h, c);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(uniform_below(gen, 256));
  return img;
}

}  // namespace

TEST_CASE("ascii graymap decodes to the expected pixels") {
  const auto img = decode_image(bytes_of("P2 2 2 255 0 255 128 64"));
  CHECK(img.width == 2);
  CHECK(img.height == 2);
  CHECK(img.channels == 1);
  CHECK(img.data == std::vector<std::uint8_t>{0, 255, 128, 64});
}

TEST_CASE("header comments are skipped") {
  const auto img = decode_image(bytes_of("P2 # hello\n2 1 # sizes\n255\n7 9"));
  CHECK(img.data == std::vector<std::uint8_t>{7, 9});
}

TEST_CASE("unsupported magic reports the offending byte") {
  CHECK_THROWS_AS(decode_image(bytes_of("P7 2 2 255 0 0 0 0")), ParseError);
  try {
    decode_image(bytes_of("P7 2 2 255"));
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 1);
  }
}

TEST_CASE("maxval other than 255 is rejected") {
  CHECK_THROWS_AS(decode_image(bytes_of("P2 2 2 65535 0 0 0 0")), ParseError);
}

TEST_CASE("truncated payloads are rejected") {
  CHECK_THROWS_AS(decode_image(bytes_of("P2 2 2 255 0 255 128")), ParseError);
  std::vector<std::uint8_t> raw = bytes_of("P5 2 2 255 ");
  raw.back() = '\n';
  raw.push_back(1);
  raw.push_back(2);
  CHECK_THROWS_AS(decode_image(raw), ParseError);
}

TEST_CASE("ascii samples above 255 are rejected") {
  CHECK_THROWS_AS(decode_image(bytes_of("P2 1 1 255 300")), ParseError);
}

TEST_CASE("encode/decode round-trips random images in both encodings") {
  std::mt19937 gen(7001);
  for (int trial = 0; trial < 50; ++trial) {
    const RasterImage img = random_image(gen);
    const PnmEncoding enc = trial % 2 ? PnmEncoding::ascii : PnmEncoding::binary;
    CHECK(decode_image(encode_image(img, enc)) == img);
  }
}

TEST_CASE("grayscale conversion uses the fixed luma weights") {
  RasterImage img = make_image(3, 1, 3);
  const std::uint8_t pixels[9] = {255, 255, 255, 255, 0, 0, 0, 255, 0};
  std::copy(std::begin(pixels), std::end(pixels), img.data.begin());
  const RasterImage gray = to_grayscale(img);
  CHECK(gray.data[0] == 255);
  CHECK(gray.data[1] == 76);   // round(0.2989 * 255)
  CHECK(gray.data[2] == 150);  // round(0.5870 * 255)
}

TEST_CASE("grayscale passes single-channel images through") {
  RasterImage img = make_image(2, 2, 1, 99);
  CHECK(to_grayscale(img) == img);
}

TEST_CASE("normalization divides by 255") {
  RasterImage img = make_image(3, 1, 1);
  img.data = {0, 255, 128};
  const NormalizedPlane plane = normalize(img);
  CHECK(plane.values[0] == 0.0);
  CHECK(plane.values[1] == 1.0);
  CHECK(plane.values[2] == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("normalize then requantize recovers the original raster") {
  std::mt19937 gen(7002);
  for (int trial = 0; trial < 20; ++trial) {
    const RasterImage img = random_image(gen);
    CHECK(reconstruct(normalize(img)) == img);
  }
}

TEST_CASE("output quantization clamps and rounds half-up") {
  CHECK(quantize_output(1.0) == 255);
  CHECK(quantize_output(-0.2) == 0);
  CHECK(quantize_output(0.5) == 128);  // 127.5 rounds up
  CHECK(quantize_output(2.0) == 255);
  CHECK_THROWS(quantize_output(std::numeric_limits<double>::quiet_NaN()));
  CHECK_THROWS(quantize_output(std::numeric_limits<double>::infinity()));
}

TEST_CASE("reconstruct packs streams row-major") {
  const std::uint8_t stream[6] = {1, 2, 3, 4, 5, 6};
  const RasterImage img = reconstruct(std::span<const std::uint8_t>(stream, 6), 3, 2, 1);
  CHECK(img.at(0, 0) == 1);
  CHECK(img.at(2, 0) == 3);
  CHECK(img.at(0, 1) == 4);

  const RasterImage single =
      reconstruct(std::span<const std::uint8_t>(stream, 1), 1, 1, 1);
  CHECK(single.data[0] == 1);

  CHECK_THROWS(reconstruct(std::span<const std::uint8_t>(stream, 5), 3, 2, 1));
}

TEST_CASE("reconstruct of a flattened image is the image") {
  std::mt19937 gen(7003);
  for (int trial = 0; trial < 20; ++trial) {
    const RasterImage img = random_image(gen);
    CHECK(reconstruct(img.data, img.width, img.height, img.channels) == img);
  }
}
