#include "leafseg/fixture.hpp"

#include <array>

#include "leafseg/rng.hpp"

namespace leafseg {

namespace {

struct Blob {
  double cx, cy, radius;  // fractions of width/height/min-dimension
};

// Spot pattern loosely mimicking interveinal chlorosis patches; about 3% of
// the frame, so target construction and scoring behave like they do on a
// sparsely affected leaf.
constexpr std::array<Blob, 6> kBlobs = {{
    {0.19, 0.26, 0.052},
    {0.50, 0.21, 0.046},
    {0.80, 0.30, 0.050},
    {0.29, 0.68, 0.048},
    {0.64, 0.74, 0.053},
    {0.88, 0.62, 0.035},
}};

constexpr std::array<int, 3> kBackgroundTone = {62, 92, 48};   // leaf green
constexpr std::array<int, 3> kDeficiencyTone = {198, 186, 92}; // yellowish

}  // namespace

RasterImage make_leaf_fixture(int width, int height, std::uint32_t seed) {
  RasterImage img = make_image(width, height, 3);
  std::mt19937 gen(seed);
  const double scale = static_cast<double>(width < height ? width : height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      bool in_spot = false;
      for (const Blob& blob : kBlobs) {
        const double dx = x - blob.cx * width;
        const double dy = y - blob.cy * height;
        const double r = blob.radius * scale;
        if (dx * dx + dy * dy <= r * r) {
          in_spot = true;
          break;
        }
      }
      const std::array<int, 3>& tone = in_spot ? kDeficiencyTone : kBackgroundTone;
      for (int c = 0; c < 3; ++c) {
        // jitter of +-5 intensity levels per channel
        const int jitter = static_cast<int>(uniform_below(gen, 11)) - 5;
        int v = tone[static_cast<std::size_t>(c)] + jitter;
        if (v < 0) v = 0;
        if (v > 255) v = 255;
        img.at(x, y, c) = static_cast<std::uint8_t>(v);
      }
    }
  }
  return img;
}

}  // namespace leafseg
