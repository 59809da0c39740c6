#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace leafseg {

// Mixes a base seed with a stream index so independent consumers (per-image
// noise, per-simulation initialization, sampling) get decorrelated engines
// that are still reproducible from one top-level seed.
std::uint32_t derive_seed(std::uint64_t base, std::uint64_t stream);

// Uniform integer in [0, n) by rejection sampling on the raw engine output.
// std::uniform_int_distribution is implementation-defined, so results would
// not be portable across standard libraries.
std::uint32_t uniform_below(std::mt19937& gen, std::uint32_t n);

// Uniform real in [0, 1), one engine draw.
double uniform_unit(std::mt19937& gen);

// k distinct values from [0, n), returned in draw order (partial
// Fisher-Yates over an index table).
std::vector<std::int32_t> sample_without_replacement(std::int32_t n, std::int32_t k,
                                                     std::mt19937& gen);

}  // namespace leafseg
