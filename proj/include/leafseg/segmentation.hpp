#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "leafseg/filtering.hpp"
#include "leafseg/image.hpp"

namespace leafseg {

struct Histogram {
  std::array<std::int64_t, 256> counts{};
  std::int64_t total = 0;
};

// Intensity counts of a single-channel image.
Histogram histogram(const RasterImage& gray);

// Thresholds that maximize the between-class variance, found by exhaustive
// search (every single threshold for 2 classes, every ordered pair for 3)
// with exact integer arithmetic; ties resolve to the smallest tuple.
// Classes partition the gray axis as [0..t1], (t1..t2], (t2..255].
// Histograms with fewer nonzero bins than classes are degenerate and throw.
// Supports totals up to 2,000,000 pixels (exact comparison word size).
std::vector<int> otsu_thresholds(const Histogram& hist, int num_classes);

struct BinaryMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // 0 or 1 per pixel, row-major

  bool get(int x, int y) const {
    return bits[static_cast<std::size_t>(y * width + x)] != 0;
  }
  void set(int x, int y, bool v) {
    bits[static_cast<std::size_t>(y * width + x)] = v ? 1 : 0;
  }
};

BinaryMask make_mask(int width, int height, bool fill = false);
std::int64_t count_set(const BinaryMask& mask);
bool is_subset(const BinaryMask& inner, const BinaryMask& outer);

// Set exactly where the pixel's class index equals keep_class.
BinaryMask apply_threshold_select(const RasterImage& gray,
                                  const std::vector<int>& thresholds, int keep_class);

// All-ones square structuring element; pixels outside the image count as
// unset, so borders clear for order >= 3. Order 1 is the identity.
BinaryMask erode(const BinaryMask& mask, int order);

enum class NeighborMode { none, v4, v8 };

const char* to_string(NeighborMode mode);
NeighborMode parse_neighbor_mode(const std::string& text);

// Isolated-point removal: a set pixel survives iff at least one neighbor in
// the 4- or 8-connected neighborhood is set. `none` is the identity.
BinaryMask neighbor_clean(const BinaryMask& mask, NeighborMode mode);

// 0/255 graymap export of a mask.
RasterImage mask_to_image(const BinaryMask& mask);

struct DesirableSpec {
  int num_classes = 3;
  // Class to keep; -1 picks the class whose mean gray level lands nearest
  // target_tone.
  int keep_class = -1;
  int target_tone = 255;
  NeighborMode neighbor = NeighborMode::none;
  int erosion_order = 0;  // 0 = no erosion
};

// Mean-gray nearest-to-tone rule used when DesirableSpec::keep_class is -1.
int choose_keep_class(const Histogram& hist, const std::vector<int>& thresholds,
                      int target_tone);

// Training-target construction: [optional smoothing] -> grayscale ->
// thresholding -> class selection -> neighbor cleanup -> optional erosion.
// The result keeps the pipeline's gray value where the final mask is set and
// is zero elsewhere (an eroded target is conventionally called "Seed", an
// uneroded one "NSeed").
RasterImage build_desirable(const RasterImage& source, const DesirableSpec& spec,
                            const FilterMask* prefilter = nullptr);

}  // namespace leafseg
