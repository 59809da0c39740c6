#include "leafseg/segmentation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace leafseg {

Histogram histogram(const RasterImage& gray) {
  if (gray.channels != 1)
    throw std::invalid_argument("histogram: expected a single-channel image");
  Histogram hist;
  for (const std::uint8_t v : gray.data) ++hist.counts[v];
  hist.total = gray.pixel_count();
  return hist;
}

namespace {

// Sum of S_j^2 / W_j over the classes of one threshold candidate, kept as an
// exact value: integer part plus a proper fraction. Between-class variance
// differs from this sum only by terms that are constant across candidates,
// so ordering by it is ordering by the variance.
struct ExactScore {
  std::int64_t whole = -1;  // -1 marks an invalid candidate (empty class)
  std::int64_t num = 0;     // 0 <= num < den
  std::int64_t den = 1;

  bool valid() const { return whole >= 0; }

  bool operator>(const ExactScore& other) const {
    if (!other.valid()) return valid();
    if (!valid()) return false;
    if (whole != other.whole) return whole > other.whole;
    return static_cast<__int128>(num) * other.den >
           static_cast<__int128>(other.num) * den;
  }
};

struct ClassStat {
  std::int64_t weight = 0;  // pixel count
  std::int64_t sum = 0;     // weighted intensity sum
};

ExactScore score_candidate(const ClassStat* classes, int n) {
  ExactScore score;
  score.whole = 0;
  for (int j = 0; j < n; ++j) {
    const std::int64_t w = classes[j].weight;
    if (w == 0) return ExactScore{};  // invalid
    const std::int64_t s2 = classes[j].sum * classes[j].sum;
    score.whole += s2 / w;
    const std::int64_t r = s2 % w;
    // fold r/w into num/den
    const __int128 wide = static_cast<__int128>(score.num) * w +
                          static_cast<__int128>(r) * score.den;
    score.den *= w;
    score.whole += static_cast<std::int64_t>(wide / score.den);
    score.num = static_cast<std::int64_t>(wide % score.den);
  }
  return score;
}

}  // namespace

std::vector<int> otsu_thresholds(const Histogram& hist, int num_classes) {
  if (num_classes != 2 && num_classes != 3)
    throw std::invalid_argument("otsu_thresholds: num_classes must be 2 or 3");
  if (hist.total > 2'000'000)
    throw std::invalid_argument(
        "otsu_thresholds: histogram total exceeds the supported 2,000,000 pixels");
  int nonzero = 0;
  std::int64_t check_total = 0;
  for (const std::int64_t c : hist.counts) {
    if (c < 0) throw std::invalid_argument("otsu_thresholds: negative bin count");
    if (c > 0) ++nonzero;
    check_total += c;
  }
  if (check_total != hist.total)
    throw std::invalid_argument("otsu_thresholds: counts do not sum to total");
  if (nonzero < num_classes)
    throw std::runtime_error("otsu_thresholds: degenerate histogram (" +
                             std::to_string(nonzero) + " nonzero bins for " +
                             std::to_string(num_classes) + " classes)");

  // cumulative weight and weighted sum up to and including level g
  std::array<std::int64_t, 256> cum_w{};
  std::array<std::int64_t, 256> cum_s{};
  std::int64_t w = 0, s = 0;
  for (int g = 0; g < 256; ++g) {
    w += hist.counts[g];
    s += hist.counts[g] * g;
    cum_w[g] = w;
    cum_s[g] = s;
  }
  const std::int64_t total_w = w;
  const std::int64_t total_s = s;

  ExactScore best;
  std::vector<int> best_tuple;
  if (num_classes == 2) {
    for (int t = 0; t <= 254; ++t) {
      ClassStat cls[2] = {{cum_w[t], cum_s[t]},
                          {total_w - cum_w[t], total_s - cum_s[t]}};
      const ExactScore score = score_candidate(cls, 2);
      if (score > best) {
        best = score;
        best_tuple = {t};
      }
    }
  } else {
    for (int t1 = 0; t1 <= 253; ++t1) {
      if (cum_w[t1] == 0) continue;
      for (int t2 = t1 + 1; t2 <= 254; ++t2) {
        ClassStat cls[3] = {{cum_w[t1], cum_s[t1]},
                            {cum_w[t2] - cum_w[t1], cum_s[t2] - cum_s[t1]},
                            {total_w - cum_w[t2], total_s - cum_s[t2]}};
        const ExactScore score = score_candidate(cls, 3);
        if (score > best) {
          best = score;
          best_tuple = {t1, t2};
        }
      }
    }
  }
  if (!best.valid())
    throw std::runtime_error("otsu_thresholds: no candidate with nonempty classes");
  return best_tuple;
}

BinaryMask make_mask(int width, int height, bool fill) {
  if (width < 1 || height < 1)
    throw std::invalid_argument("make_mask: dimensions must be at least 1x1");
  BinaryMask mask;
  mask.width = width;
  mask.height = height;
  mask.bits.assign(static_cast<std::size_t>(width) * height, fill ? 1 : 0);
  return mask;
}

std::int64_t count_set(const BinaryMask& mask) {
  std::int64_t n = 0;
  for (const std::uint8_t b : mask.bits) n += b;
  return n;
}

bool is_subset(const BinaryMask& inner, const BinaryMask& outer) {
  if (inner.width != outer.width || inner.height != outer.height) return false;
  for (std::size_t i = 0; i < inner.bits.size(); ++i)
    if (inner.bits[i] && !outer.bits[i]) return false;
  return true;
}

BinaryMask apply_threshold_select(const RasterImage& gray,
                                  const std::vector<int>& thresholds, int keep_class) {
  if (gray.channels != 1)
    throw std::invalid_argument("apply_threshold_select: expected a gray image");
  if (thresholds.empty() || thresholds.size() > 2)
    throw std::invalid_argument("apply_threshold_select: expected 1 or 2 thresholds");
  for (std::size_t i = 1; i < thresholds.size(); ++i)
    if (thresholds[i - 1] >= thresholds[i])
      throw std::invalid_argument(
          "apply_threshold_select: thresholds must be strictly ascending");
  const int num_classes = static_cast<int>(thresholds.size()) + 1;
  if (keep_class < 0 || keep_class >= num_classes)
    throw std::invalid_argument("apply_threshold_select: keep_class " +
                                std::to_string(keep_class) + " out of range for " +
                                std::to_string(num_classes) + " classes");

  BinaryMask mask = make_mask(gray.width, gray.height);
  for (std::size_t i = 0; i < gray.data.size(); ++i) {
    const int v = gray.data[i];
    int cls = 0;
    while (cls < static_cast<int>(thresholds.size()) && v > thresholds[cls]) ++cls;
    mask.bits[i] = cls == keep_class ? 1 : 0;
  }
  return mask;
}

BinaryMask erode(const BinaryMask& mask, int order) {
  if (order < 1 || order % 2 == 0)
    throw std::invalid_argument("erode: order must be odd and positive");
  if (order == 1) return mask;
  const int reach = (order - 1) / 2;
  BinaryMask out = make_mask(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      if (x < reach || y < reach || x >= mask.width - reach || y >= mask.height - reach)
        continue;  // the window leaves the image; outside counts as unset
      bool all_set = true;
      for (int dy = -reach; all_set && dy <= reach; ++dy)
        for (int dx = -reach; dx <= reach; ++dx)
          if (!mask.get(x + dx, y + dy)) {
            all_set = false;
            break;
          }
      if (all_set) out.set(x, y, true);
    }
  }
  return out;
}

const char* to_string(NeighborMode mode) {
  switch (mode) {
    case NeighborMode::none: return "WN";
    case NeighborMode::v4: return "N4";
    case NeighborMode::v8: return "N8";
  }
  return "?";
}

NeighborMode parse_neighbor_mode(const std::string& text) {
  if (text == "WN") return NeighborMode::none;
  if (text == "N4" || text == "V4") return NeighborMode::v4;
  if (text == "N8" || text == "V8") return NeighborMode::v8;
  throw std::invalid_argument("unknown neighbor mode: " + text +
                              " (expected WN, N4 or N8)");
}

BinaryMask neighbor_clean(const BinaryMask& mask, NeighborMode mode) {
  if (mode == NeighborMode::none) return mask;
  BinaryMask out = make_mask(mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.get(x, y)) continue;
      bool any = false;
      for (int dy = -1; !any && dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          if (dx == 0 && dy == 0) continue;
          if (mode == NeighborMode::v4 && dx != 0 && dy != 0) continue;
          const int nx = x + dx;
          const int ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= mask.width || ny >= mask.height) continue;
          if (mask.get(nx, ny)) {
            any = true;
            break;
          }
        }
      }
      if (any) out.set(x, y, true);
    }
  }
  return out;
}

RasterImage mask_to_image(const BinaryMask& mask) {
  RasterImage img = make_image(mask.width, mask.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    img.data[i] = mask.bits[i] ? 255 : 0;
  return img;
}

int choose_keep_class(const Histogram& hist, const std::vector<int>& thresholds,
                      int target_tone) {
  const int num_classes = static_cast<int>(thresholds.size()) + 1;
  int best_class = -1;
  double best_dist = std::numeric_limits<double>::infinity();
  int lo = 0;
  for (int cls = 0; cls < num_classes; ++cls) {
    const int hi = cls < static_cast<int>(thresholds.size()) ? thresholds[cls] : 255;
    std::int64_t w = 0, s = 0;
    for (int g = lo; g <= hi; ++g) {
      w += hist.counts[g];
      s += hist.counts[g] * g;
    }
    lo = hi + 1;
    if (w == 0) continue;
    const double dist = std::abs(static_cast<double>(s) / static_cast<double>(w) -
                                 static_cast<double>(target_tone));
    if (dist < best_dist) {
      best_dist = dist;
      best_class = cls;
    }
  }
  if (best_class < 0)
    throw std::runtime_error("choose_keep_class: all classes are empty");
  return best_class;
}

RasterImage build_desirable(const RasterImage& source, const DesirableSpec& spec,
                            const FilterMask* prefilter) {
  if (spec.erosion_order != 0 && (spec.erosion_order < 1 || spec.erosion_order % 2 == 0))
    throw std::invalid_argument("build_desirable: erosion order must be 0 or odd");
  const RasterImage smoothed =
      prefilter != nullptr ? apply_linear_filter(source, *prefilter) : source;
  const RasterImage gray = to_grayscale(smoothed);
  const Histogram hist = histogram(gray);
  const std::vector<int> thresholds = otsu_thresholds(hist, spec.num_classes);
  const int keep = spec.keep_class >= 0
                       ? spec.keep_class
                       : choose_keep_class(hist, thresholds, spec.target_tone);
  BinaryMask mask = apply_threshold_select(gray, thresholds, keep);
  mask = neighbor_clean(mask, spec.neighbor);
  if (spec.erosion_order > 0) mask = erode(mask, spec.erosion_order);

  RasterImage target = make_image(gray.width, gray.height, 1);
  for (std::size_t i = 0; i < mask.bits.size(); ++i)
    target.data[i] = mask.bits[i] ? gray.data[i] : 0;
  return target;
}

}  // namespace leafseg
