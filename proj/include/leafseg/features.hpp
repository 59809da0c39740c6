#pragma once

#include <Eigen/Core>
#include <string>

#include "leafseg/image.hpp"
#include "leafseg/segmentation.hpp"

namespace leafseg {

// Per-pixel network input layouts. The tag names the components, the arity
// is the input-layer width.
enum class FeatureVariant { rgb3, rgb_hist4, isp_gray3, hist_gray2, gray1 };

int feature_arity(FeatureVariant variant);
const char* to_string(FeatureVariant variant);
FeatureVariant parse_feature_variant(const std::string& text);

// Gray-plane statistics shared by every pixel of one image: normalized
// histogram h, cumulative distribution p1, and the two-class
// between-class-variance curve rescaled into [0, 1] by its maximum.
struct SideTables {
  Eigen::ArrayXd h = Eigen::ArrayXd::Zero(256);
  Eigen::ArrayXd p1 = Eigen::ArrayXd::Zero(256);
  Eigen::ArrayXd sigma_b = Eigen::ArrayXd::Zero(256);
  bool degenerate = false;  // single-tone plane: sigma_b is identically zero
};

SideTables build_side_tables(const RasterImage& gray);

// One column per pixel, `feature_arity(variant)` rows, every entry in [0, 1].
struct PixelFeatureSet {
  FeatureVariant variant = FeatureVariant::rgb3;
  int width = 0;
  int height = 0;
  Eigen::MatrixXd vectors;
  SideTables tables;

  std::int64_t pixel_count() const { return std::int64_t{width} * height; }
};

// rgb3:      (R, G, B) / 255
// rgb_hist4: rgb3 plus h(gray level of the pixel)
// isp_gray3: (p1(g), sigma_b(g), g / 255)
// hist_gray2:(h(g), g / 255)
// gray1:     (g / 255)
PixelFeatureSet extract_features(const RasterImage& img, FeatureVariant variant);

}  // namespace leafseg
