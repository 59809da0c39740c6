// Independent reference implementations the test suites check the library
// against. These deliberately take different arithmetic routes from the
// library code: the threshold oracle scores candidates in long double and
// resolves near-ties with arbitrary-precision rationals, and the smoothing
// oracle rounds through quotient/remainder instead of the scaled division
// used by the implementation.
#pragma once

#include <array>
#include <boost/multiprecision/cpp_int.hpp>
#include <cstdint>
#include <random>
#include <vector>

#include "leafseg/image.hpp"
#include "leafseg/mlp.hpp"

namespace oracles {

using BigInt = boost::multiprecision::cpp_int;

// ---------------------------------------------------------------------------
// exhaustive between-class-variance maximizer

struct ClassSplit {
  std::array<std::int64_t, 3> weight{};
  std::array<std::int64_t, 3> sum{};
  int classes = 2;
  bool valid = true;
};

inline ClassSplit split_at(const std::array<std::int64_t, 256>& cum_w,
                           const std::array<std::int64_t, 256>& cum_s, int t1, int t2,
                           int classes) {
  ClassSplit split;
  split.classes = classes;
  const std::int64_t total_w = cum_w[255];
  const std::int64_t total_s = cum_s[255];
  if (classes == 2) {
    split.weight = {cum_w[t1], total_w - cum_w[t1], 0};
    split.sum = {cum_s[t1], total_s - cum_s[t1], 0};
  } else {
    split.weight = {cum_w[t1], cum_w[t2] - cum_w[t1], total_w - cum_w[t2]};
    split.sum = {cum_s[t1], cum_s[t2] - cum_s[t1], total_s - cum_s[t2]};
  }
  for (int j = 0; j < classes; ++j)
    if (split.weight[static_cast<std::size_t>(j)] == 0) split.valid = false;
  return split;
}

// sum_j S_j^2 / W_j in long double; ordering by this value is ordering by
// the between-class variance.
inline long double split_score(const ClassSplit& split) {
  long double score = 0.0L;
  for (int j = 0; j < split.classes; ++j) {
    const long double s = static_cast<long double>(split.sum[static_cast<std::size_t>(j)]);
    score += s * s / static_cast<long double>(split.weight[static_cast<std::size_t>(j)]);
  }
  return score;
}

// Exact value of the same sum as a rational (numerator, denominator).
inline std::pair<BigInt, BigInt> split_score_exact(const ClassSplit& split) {
  BigInt den = 1;
  for (int j = 0; j < split.classes; ++j) den *= split.weight[static_cast<std::size_t>(j)];
  BigInt num = 0;
  for (int j = 0; j < split.classes; ++j) {
    BigInt term = BigInt(split.sum[static_cast<std::size_t>(j)]) *
                  split.sum[static_cast<std::size_t>(j)];
    for (int k = 0; k < split.classes; ++k)
      if (k != j) term *= split.weight[static_cast<std::size_t>(k)];
    num += term;
  }
  return {num, den};
}

inline std::vector<int> otsu_thresholds_oracle(const std::array<std::int64_t, 256>& counts,
                                               int classes) {
  std::array<std::int64_t, 256> cum_w{};
  std::array<std::int64_t, 256> cum_s{};
  std::int64_t w = 0, s = 0;
  for (int g = 0; g < 256; ++g) {
    w += counts[g];
    s += counts[g] * g;
    cum_w[g] = w;
    cum_s[g] = s;
  }

  std::vector<std::pair<int, int>> candidates;
  if (classes == 2) {
    for (int t = 0; t <= 254; ++t) candidates.emplace_back(t, -1);
  } else {
    for (int t1 = 0; t1 <= 253; ++t1)
      for (int t2 = t1 + 1; t2 <= 254; ++t2) candidates.emplace_back(t1, t2);
  }

  long double best = -1.0L;
  for (const auto& [t1, t2] : candidates) {
    const ClassSplit split = split_at(cum_w, cum_s, t1, t2, classes);
    if (!split.valid) continue;
    const long double score = split_score(split);
    if (score > best) best = score;
  }
  if (best < 0.0L) throw std::runtime_error("oracle: no valid candidate");

  // Shortlist everything the floating pass cannot separate, then settle the
  // winner exactly in rational arithmetic; smallest tuple wins ties.
  const long double slack = best * 1e-14L + 1e-9L;
  std::pair<BigInt, BigInt> best_exact{-1, 1};
  std::pair<int, int> best_tuple{-1, -1};
  for (const auto& [t1, t2] : candidates) {
    const ClassSplit split = split_at(cum_w, cum_s, t1, t2, classes);
    if (!split.valid) continue;
    if (split_score(split) < best - slack) continue;
    const std::pair<BigInt, BigInt> exact = split_score_exact(split);
    if (best_tuple.first < 0 ||
        exact.first * best_exact.second > best_exact.first * exact.second) {
      best_exact = exact;
      best_tuple = {t1, t2};
    }
  }
  if (classes == 2) return {best_tuple.first};
  return {best_tuple.first, best_tuple.second};
}

// Random histograms of assorted shapes (dense, sparse, spiky) with at least
// `min_bins` occupied bins.
inline std::array<std::int64_t, 256> random_histogram(std::mt19937& gen, int min_bins) {
  std::array<std::int64_t, 256> counts{};
  const int shape = static_cast<int>(gen() % 3);
  if (shape == 0) {
    for (int g = 0; g < 256; ++g) counts[g] = gen() % 50;
  } else if (shape == 1) {
    const int bins = min_bins + static_cast<int>(gen() % 12);
    for (int i = 0; i < bins; ++i) counts[gen() % 256] += 1 + gen() % 1000;
  } else {
    const int spikes = min_bins + static_cast<int>(gen() % 3);
    for (int i = 0; i < spikes; ++i) counts[gen() % 256] += 500 + gen() % 2000;
    for (int g = 0; g < 256; ++g)
      if (gen() % 4 == 0) counts[g] += gen() % 5;
  }
  int nonzero = 0;
  for (const std::int64_t c : counts) nonzero += c > 0;
  while (nonzero < min_bins) {
    const std::uint32_t g = gen() % 256;
    if (counts[g] == 0) {
      counts[g] = 1 + gen() % 100;
      ++nonzero;
    }
  }
  return counts;
}

// ---------------------------------------------------------------------------
// naive weighted-mean smoothing

inline leafseg::RasterImage naive_linear_filter(
    const leafseg::RasterImage& img, const std::vector<std::vector<std::int64_t>>& weights) {
  const int k = static_cast<int>(weights.size());
  const int reach = (k - 1) / 2;
  std::int64_t weight_sum = 0;
  for (const auto& row : weights)
    for (const std::int64_t v : row) weight_sum += v;

  leafseg::RasterImage out = img;
  for (int c = 0; c < img.channels; ++c)
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        if (x - reach < 0 || y - reach < 0 || x + reach >= img.width ||
            y + reach >= img.height)
          continue;  // border copies the source
        std::int64_t acc = 0;
        for (int wy = 0; wy < k; ++wy)
          for (int wx = 0; wx < k; ++wx)
            acc += weights[static_cast<std::size_t>(wy)][static_cast<std::size_t>(wx)] *
                   img.at(x + wx - reach, y + wy - reach, c);
        const std::int64_t q = acc / weight_sum;
        const std::int64_t r = acc % weight_sum;
        out.at(x, y, c) = static_cast<std::uint8_t>(q + (2 * r >= weight_sum ? 1 : 0));
      }
  return out;
}

// ---------------------------------------------------------------------------
// central finite differences through the sample loss

inline double sample_loss(const leafseg::Network& net, const Eigen::VectorXd& x,
                          const Eigen::VectorXd& target) {
  const Eigen::VectorXd y = leafseg::forward(net, x);
  return 0.5 * (y - target).squaredNorm();
}

inline leafseg::Gradients finite_difference_gradients(const leafseg::Network& net,
                                                      const Eigen::VectorXd& x,
                                                      const Eigen::VectorXd& target,
                                                      double step) {
  leafseg::Gradients grads;
  leafseg::Network probe = net;
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    grads.weights.push_back(Eigen::MatrixXd::Zero(net.weights[l].rows(),
                                                  net.weights[l].cols()));
    grads.biases.push_back(Eigen::VectorXd::Zero(net.biases[l].size()));
    for (Eigen::Index r = 0; r < net.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < net.weights[l].cols(); ++c) {
        const double saved = probe.weights[l](r, c);
        probe.weights[l](r, c) = saved + step;
        const double up = sample_loss(probe, x, target);
        probe.weights[l](r, c) = saved - step;
        const double down = sample_loss(probe, x, target);
        probe.weights[l](r, c) = saved;
        grads.weights[l](r, c) = (up - down) / (2.0 * step);
      }
    for (Eigen::Index r = 0; r < net.biases[l].size(); ++r) {
      const double saved = probe.biases[l][r];
      probe.biases[l][r] = saved + step;
      const double up = sample_loss(probe, x, target);
      probe.biases[l][r] = saved - step;
      const double down = sample_loss(probe, x, target);
      probe.biases[l][r] = saved;
      grads.biases[l][r] = (up - down) / (2.0 * step);
    }
  }
  return grads;
}

// Largest relative disagreement between two gradient sets.
inline double gradient_relative_error(const leafseg::Gradients& a,
                                      const leafseg::Gradients& b) {
  double worst = 0.0;
  const auto update = [&worst](double x, double y) {
    const double denom = std::max({std::abs(x), std::abs(y), 1e-6});
    worst = std::max(worst, std::abs(x - y) / denom);
  };
  for (std::size_t l = 0; l < a.weights.size(); ++l) {
    for (Eigen::Index r = 0; r < a.weights[l].rows(); ++r)
      for (Eigen::Index c = 0; c < a.weights[l].cols(); ++c)
        update(a.weights[l](r, c), b.weights[l](r, c));
    for (Eigen::Index r = 0; r < a.biases[l].size(); ++r)
      update(a.biases[l][r], b.biases[l][r]);
  }
  return worst;
}

}  // namespace oracles
