#include "leafseg/metrics.hpp"

#include <stdexcept>

namespace leafseg {

HitTally score_hits(const RasterImage& output, const RasterImage& desirable,
                    double margin_fraction) {
  if (output.width != desirable.width || output.height != desirable.height ||
      output.channels != desirable.channels)
    throw std::invalid_argument("score_hits: image dimensions differ");
  if (!(margin_fraction > 0.0))
    throw std::invalid_argument("score_hits: margin fraction must be positive");

  HitTally tally;
  tally.margin_fraction = margin_fraction;
  const double margin = margin_fraction * kGrayLevelMax;
  for (std::size_t i = 0; i < output.data.size(); ++i) {
    const double d = desirable.data[i];
    const double y = output.data[i];
    if (d + margin > y && y > d - margin)
      ++tally.hits;
    else
      ++tally.errors;
  }
  return tally;
}

double percent_hits(const HitTally& tally) {
  if (tally.compared() == 0)
    throw std::invalid_argument("percent_hits: empty tally");
  return 100.0 * static_cast<double>(tally.hits) /
         static_cast<double>(tally.compared());
}

double validation_mse(const Eigen::Ref<const Eigen::ArrayXd>& outputs,
                      const Eigen::Ref<const Eigen::ArrayXd>& desirables) {
  if (outputs.size() != desirables.size())
    throw std::invalid_argument("validation_mse: length mismatch (" +
                                std::to_string(outputs.size()) + " vs " +
                                std::to_string(desirables.size()) + ")");
  if (outputs.size() == 0)
    throw std::invalid_argument("validation_mse: empty sequences");
  return (outputs - desirables).square().sum() / static_cast<double>(outputs.size());
}

}  // namespace leafseg
