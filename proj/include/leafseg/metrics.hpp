#pragma once

#include <Eigen/Core>
#include <cstdint>

#include "leafseg/image.hpp"

namespace leafseg {

inline constexpr int kGrayLevelMax = 255;
// Tolerance bands, as fractions of the gray range: a quarter for
// segmentation scoring, a fortieth for filtering scoring.
inline constexpr double kSegmentationMargin = 1.0 / 4.0;
inline constexpr double kFilteringMargin = 1.0 / 40.0;

struct HitTally {
  std::int64_t hits = 0;
  std::int64_t errors = 0;
  double margin_fraction = kSegmentationMargin;

  std::int64_t compared() const { return hits + errors; }
};

// Per-sample tolerance-band scoring: a sample is a hit iff
//   desirable - margin < output < desirable + margin   (strict)
// with margin = margin_fraction * 255; everything else is an error.
// Multi-channel images tally every channel sample independently.
HitTally score_hits(const RasterImage& output, const RasterImage& desirable,
                    double margin_fraction);

// 100 * H / (H + E).
double percent_hits(const HitTally& tally);

// Mean squared residual over two equal-length value sequences.
double validation_mse(const Eigen::Ref<const Eigen::ArrayXd>& outputs,
                      const Eigen::Ref<const Eigen::ArrayXd>& desirables);

}  // namespace leafseg
