#include "leafseg/rng.hpp"

#include <numeric>
#include <stdexcept>

namespace leafseg {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint32_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  return static_cast<std::uint32_t>(splitmix64(base ^ splitmix64(stream)));
}

std::uint32_t uniform_below(std::mt19937& gen, std::uint32_t n) {
  if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
  const std::uint32_t limit = (0xffffffffu - (0xffffffffu % n + 1) % n);
  for (;;) {
    const std::uint32_t r = gen();
    if (r <= limit) return r % n;
  }
}

double uniform_unit(std::mt19937& gen) {
  return static_cast<double>(gen()) * (1.0 / 4294967296.0);
}

std::vector<std::int32_t> sample_without_replacement(std::int32_t n, std::int32_t k,
                                                     std::mt19937& gen) {
  if (n < 0 || k < 0 || k > n)
    throw std::invalid_argument("sample_without_replacement: need 0 <= k <= n");
  std::vector<std::int32_t> pool(static_cast<std::size_t>(n));
  std::iota(pool.begin(), pool.end(), 0);
  std::vector<std::int32_t> picked(static_cast<std::size_t>(k));
  for (std::int32_t i = 0; i < k; ++i) {
    const std::uint32_t j =
        i + uniform_below(gen, static_cast<std::uint32_t>(n - i));
    std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(j)]);
    picked[static_cast<std::size_t>(i)] = pool[static_cast<std::size_t>(i)];
  }
  return picked;
}

}  // namespace leafseg
