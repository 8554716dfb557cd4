#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace convkit {

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

std::uint64_t splitmix64(std::uint64_t x);

/// Named derivation of a child seed. All randomness in the toolkit flows from one global
/// seed through this function, so every stream is addressable by (component, ...).
std::uint64_t derive_seed(std::uint64_t base, std::string_view name);
std::uint64_t derive_seed(std::uint64_t base, std::string_view name, std::uint64_t index);

/// Portable random source: mt19937_64 is fully specified by the standard, and the
/// floating-point transforms below are written out rather than delegated to
/// implementation-defined std distributions.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : m_engine(seed) {}

    std::uint64_t next_u64() { return m_engine(); }

    /// Uniform in [0, 1) with 53 bits of mantissa.
    double uniform();

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    /// Standard normal via Box-Muller.
    double normal();

    template <typename T>
    void shuffle(T& container)
    {
        for (std::size_t i = container.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(below(i));
            using std::swap;
            swap(container[i - 1], container[j]);
        }
    }

  private:
    std::mt19937_64 m_engine;
    bool m_has_spare = false;
    double m_spare = 0.0;
};

}  // namespace convkit
