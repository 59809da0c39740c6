#pragma once

#include <cstdint>

#include "leafseg/image.hpp"

namespace leafseg {

// Synthetic two-tone leaf image used by the bundled experiment workflows:
// a green background with a handful of yellowish spot blobs (about 5% of
// the area) and small per-channel intensity jitter. Deterministic in the
// seed; the file shipped under data/ is this generator's output for the
// default arguments.
RasterImage make_leaf_fixture(int width = 320, int height = 240,
                              std::uint32_t seed = 7);

}  // namespace leafseg
