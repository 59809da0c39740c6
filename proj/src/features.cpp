#include "leafseg/features.hpp"

#include <stdexcept>

namespace leafseg {

int feature_arity(FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::rgb3: return 3;
    case FeatureVariant::rgb_hist4: return 4;
    case FeatureVariant::isp_gray3: return 3;
    case FeatureVariant::hist_gray2: return 2;
    case FeatureVariant::gray1: return 1;
  }
  throw std::invalid_argument("feature_arity: unknown variant");
}

const char* to_string(FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::rgb3: return "RGB3";
    case FeatureVariant::rgb_hist4: return "RGB_HIST4";
    case FeatureVariant::isp_gray3: return "ISP_GRAY3";
    case FeatureVariant::hist_gray2: return "HIST_GRAY2";
    case FeatureVariant::gray1: return "GRAY1";
  }
  return "?";
}

FeatureVariant parse_feature_variant(const std::string& text) {
  if (text == "RGB3") return FeatureVariant::rgb3;
  if (text == "RGB_HIST4") return FeatureVariant::rgb_hist4;
  if (text == "ISP_GRAY3") return FeatureVariant::isp_gray3;
  if (text == "HIST_GRAY2") return FeatureVariant::hist_gray2;
  if (text == "GRAY1") return FeatureVariant::gray1;
  throw std::invalid_argument("unknown feature variant: " + text);
}

SideTables build_side_tables(const RasterImage& gray) {
  if (gray.channels != 1)
    throw std::invalid_argument("build_side_tables: expected a single-channel image");
  const Histogram hist = histogram(gray);
  SideTables tables;
  const double total = static_cast<double>(hist.total);
  double cum = 0.0;
  for (int g = 0; g < 256; ++g) {
    tables.h[g] = static_cast<double>(hist.counts[g]) / total;
    cum += tables.h[g];
    tables.p1[g] = cum;
  }
  tables.p1[255] = 1.0;  // guard cumulative rounding

  // Two-class between-class variance at every split level, from the exact
  // cumulative integer sums.
  std::int64_t w0 = 0, s0 = 0;
  std::int64_t total_w = hist.total;
  std::int64_t total_s = 0;
  for (int g = 0; g < 256; ++g) total_s += hist.counts[g] * g;
  double max_sigma = 0.0;
  for (int g = 0; g < 256; ++g) {
    w0 += hist.counts[g];
    s0 += hist.counts[g] * g;
    const std::int64_t w1 = total_w - w0;
    if (w0 == 0 || w1 == 0) {
      tables.sigma_b[g] = 0.0;
      continue;
    }
    const double mean0 = static_cast<double>(s0) / static_cast<double>(w0);
    const double mean1 =
        static_cast<double>(total_s - s0) / static_cast<double>(w1);
    const double diff = mean0 - mean1;
    const double sigma = static_cast<double>(w0) * static_cast<double>(w1) * diff *
                         diff / (total * total);
    tables.sigma_b[g] = sigma;
    if (sigma > max_sigma) max_sigma = sigma;
  }
  if (max_sigma > 0.0) {
    tables.sigma_b /= max_sigma;
  } else {
    tables.degenerate = true;
    tables.sigma_b.setZero();
  }
  return tables;
}

PixelFeatureSet extract_features(const RasterImage& img, FeatureVariant variant) {
  const bool needs_rgb =
      variant == FeatureVariant::rgb3 || variant == FeatureVariant::rgb_hist4;
  if (needs_rgb && img.channels != 3)
    throw std::invalid_argument(std::string("extract_features: variant ") +
                                to_string(variant) + " needs a 3-channel image");

  PixelFeatureSet set;
  set.variant = variant;
  set.width = img.width;
  set.height = img.height;
  const std::int64_t n = img.pixel_count();
  set.vectors.resize(feature_arity(variant), n);

  const RasterImage gray = to_grayscale(img);
  if (variant != FeatureVariant::rgb3) set.tables = build_side_tables(gray);

  for (std::int64_t i = 0; i < n; ++i) {
    const int g = gray.data[static_cast<std::size_t>(i)];
    auto col = set.vectors.col(i);
    switch (variant) {
      case FeatureVariant::rgb3:
      case FeatureVariant::rgb_hist4:
        col[0] = img.data[static_cast<std::size_t>(3 * i)] / 255.0;
        col[1] = img.data[static_cast<std::size_t>(3 * i + 1)] / 255.0;
        col[2] = img.data[static_cast<std::size_t>(3 * i + 2)] / 255.0;
        if (variant == FeatureVariant::rgb_hist4) col[3] = set.tables.h[g];
        break;
      case FeatureVariant::isp_gray3:
        col[0] = set.tables.p1[g];
        col[1] = set.tables.sigma_b[g];
        col[2] = g / 255.0;
        break;
      case FeatureVariant::hist_gray2:
        col[0] = set.tables.h[g];
        col[1] = g / 255.0;
        break;
      case FeatureVariant::gray1:
        col[0] = g / 255.0;
        break;
    }
  }
  return set;
}

}  // namespace leafseg
