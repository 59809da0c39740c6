#include "leafseg/filtering.hpp"

#include <cmath>
#include <cstdlib>
#include <stdexcept>

#include "leafseg/rng.hpp"

namespace leafseg {

const char* to_string(MaskKind kind) {
  return kind == MaskKind::simple ? "simple" : "weighted";
}

bool is_standard_mask_order(MaskKind kind, int order) {
  if (kind == MaskKind::simple) {
    for (int k : {3, 5, 7, 9, 11, 15, 35})
      if (order == k) return true;
    return false;
  }
  for (int k : {3, 5, 7, 9, 11})
    if (order == k) return true;
  return false;
}

FilterMask build_mask(MaskKind kind, int order, std::string* warning) {
  if (order < 1 || order % 2 == 0)
    throw std::invalid_argument("build_mask: order must be odd and positive, got " +
                                std::to_string(order));
  if (order != 1 && !is_standard_mask_order(kind, order) && warning != nullptr)
    *warning = std::string("mask order ") + std::to_string(order) +
               " is outside the standard " + to_string(kind) + " grid";

  FilterMask mask;
  mask.order = order;
  if (kind == MaskKind::simple) {
    mask.weights = Eigen::MatrixXi::Ones(order, order);
  } else {
    mask.weights.resize(order, order);
    const int center = (order - 1) / 2;
    const int dmax = order - 1;
    for (int r = 0; r < order; ++r)
      for (int c = 0; c < order; ++c) {
        const int d = std::abs(r - center) + std::abs(c - center);
        mask.weights(r, c) = d > dmax ? 1 : (1 << (dmax - d));
      }
  }
  mask.weight_sum = mask.weights.cast<std::int64_t>().sum();
  return mask;
}

RasterImage apply_linear_filter(const RasterImage& img, const FilterMask& mask) {
  const int k = mask.order;
  if (k > img.width || k > img.height)
    throw std::invalid_argument("apply_linear_filter: mask order " + std::to_string(k) +
                                " exceeds image size " + std::to_string(img.width) + "x" +
                                std::to_string(img.height));
  const int reach = (k - 1) / 2;
  const std::int64_t sum = mask.weight_sum;
  RasterImage out = img;  // borders keep the source values
  for (int c = 0; c < img.channels; ++c) {
    for (int y = reach; y < img.height - reach; ++y) {
      for (int x = reach; x < img.width - reach; ++x) {
        std::int64_t acc = 0;
        for (int dy = -reach; dy <= reach; ++dy)
          for (int dx = -reach; dx <= reach; ++dx)
            acc += static_cast<std::int64_t>(mask.weights(dy + reach, dx + reach)) *
                   img.at(x + dx, y + dy, c);
        // round(acc / sum), half-up; operands are non-negative
        out.at(x, y, c) = static_cast<std::uint8_t>((2 * acc + sum) / (2 * sum));
      }
    }
  }
  return out;
}

const char* to_string(NoiseChannel mode) {
  switch (mode) {
    case NoiseChannel::red: return "R";
    case NoiseChannel::green: return "G";
    case NoiseChannel::blue: return "B";
    case NoiseChannel::all: return "ALL";
  }
  return "?";
}

NoiseChannel parse_noise_channel(const std::string& text) {
  if (text == "R") return NoiseChannel::red;
  if (text == "G") return NoiseChannel::green;
  if (text == "B") return NoiseChannel::blue;
  if (text == "ALL") return NoiseChannel::all;
  throw std::invalid_argument("unknown noise channel mode: " + text +
                              " (expected R, G, B or ALL)");
}

RasterImage inject_salt_pepper(const RasterImage& img, const NoiseSpec& spec) {
  if (!(spec.density >= 0.0 && spec.density <= 1.0))
    throw std::invalid_argument("inject_salt_pepper: density must be in [0, 1]");
  if (img.channels == 1 && spec.channel_mode != NoiseChannel::all)
    throw std::invalid_argument(
        "inject_salt_pepper: single-channel images only support mode ALL");

  RasterImage out = img;
  const std::int64_t pixels = img.pixel_count();
  const std::int32_t n =
      static_cast<std::int32_t>(std::floor(spec.density * static_cast<double>(pixels) + 0.5));
  if (n == 0) return out;

  std::mt19937 gen(spec.seed);
  const std::vector<std::int32_t> positions =
      sample_without_replacement(static_cast<std::int32_t>(pixels), n, gen);

  int first_channel = 0;
  int last_channel = img.channels - 1;
  switch (spec.channel_mode) {
    case NoiseChannel::red: first_channel = last_channel = 0; break;
    case NoiseChannel::green: first_channel = last_channel = 1; break;
    case NoiseChannel::blue: first_channel = last_channel = 2; break;
    case NoiseChannel::all: break;
  }
  for (const std::int32_t p : positions) {
    const std::uint8_t value = uniform_below(gen, 2) ? 255 : 0;
    for (int c = first_channel; c <= last_channel; ++c)
      out.data[static_cast<std::size_t>(p) * img.channels + static_cast<std::size_t>(c)] =
          value;
  }
  return out;
}

}  // namespace leafseg
