#include "lotta/random.hpp"

#include <limits>

namespace lotta {

Rng::Rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32), 0x6c6f7474u};
  engine_.seed(seq);
}

double Rng::gamma(double shape, double rate) {
  const double g = std::gamma_distribution<double>(shape, 1.0)(engine_) / rate;
  // Tiny shapes underflow to zero; keep precisions strictly positive.
  return g > 0.0 ? g : std::numeric_limits<double>::min();
}

double Rng::beta(double a, double b) {
  const double x = gamma(a, 1.0);
  const double y = gamma(b, 1.0);
  return x / (x + y);
}

}  // namespace lotta
