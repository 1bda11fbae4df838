#include "catgcn/rng.hpp"

namespace catgcn {

std::uint64_t CounterRng::below(std::uint64_t bound) noexcept {
  // Accept draws below the largest multiple of bound.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x = next();
  while (x >= limit) x = next();
  return x % bound;
}

}  // namespace catgcn
