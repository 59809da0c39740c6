#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>

#include "leafseg/image.hpp"

namespace leafseg {

enum class MaskKind { simple, weighted };

const char* to_string(MaskKind kind);

// Odd square smoothing mask with non-negative integer weights.
struct FilterMask {
  int order = 1;
  Eigen::MatrixXi weights = Eigen::MatrixXi::Ones(1, 1);
  std::int64_t weight_sum = 1;
};

// Orders covered by the combination grid: {3,5,7,9,11,15,35} for simple
// masks, {3,5,7,9,11} for weighted ones (order 1 is the identity mask).
bool is_standard_mask_order(MaskKind kind, int order);

// simple: all ones. weighted: W(u,v) = 2^(k-1-d) with d the Manhattan
// distance from the center, so the weight halves per step away from the
// center and diagonals sit below the orthogonal neighbors.
// Even orders are rejected. An order outside the standard grid is still
// built; when `warning` is non-null it receives a diagnostic instead.
FilterMask build_mask(MaskKind kind, int order, std::string* warning = nullptr);

// Weighted-mean smoothing applied per channel. A pixel whose full window
// fits inside the image gets round(sum(W * f) / sum(W)) with pure integer
// accumulation and half-up rounding; pixels within (order-1)/2 of an edge
// copy the source value.
RasterImage apply_linear_filter(const RasterImage& img, const FilterMask& mask);

enum class NoiseChannel { red, green, blue, all };

const char* to_string(NoiseChannel mode);
NoiseChannel parse_noise_channel(const std::string& text);

struct NoiseSpec {
  double density = 0.0;
  NoiseChannel channel_mode = NoiseChannel::all;
  std::uint32_t seed = 0;
};

// Impulsive corruption: round(density * width * height) distinct pixel
// positions per affected channel are overwritten with 0 or 255 (fair coin).
// In `all` mode the same positions and the same extreme go to every channel,
// so impulses are pure black or white; other channels stay untouched.
// Rerunning with the same spec is bit-reproducible.
RasterImage inject_salt_pepper(const RasterImage& img, const NoiseSpec& spec);

}  // namespace leafseg
