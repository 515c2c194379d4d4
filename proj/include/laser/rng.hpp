#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace laser {

// Counter-based 64-bit generator (SplitMix64). Every stream in the project is
// one of these, seeded through seed_for() so that draws depend only on the run
// seed and a stable path label, never on execution order.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // uniform in [0,1), 53-bit mantissa
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in (0,1], safe as a log() argument
    double next_open_double() { return 1.0 - next_double(); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // unbiased integer in [0, n), rejection sampling
    std::uint64_t next_below(std::uint64_t n);

    // standard normal, Box-Muller (second draw cached)
    double normal();

private:
    std::uint64_t state_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

// Mix a root seed with a stable label (and optional index) into a child seed.
std::uint64_t seed_for(std::uint64_t root, std::string_view path);
std::uint64_t seed_for(std::uint64_t root, std::string_view path, std::uint64_t index);

// Fisher-Yates shuffle with a fixed swap convention.
template <typename T>
void shuffle(std::vector<T>& items, SplitMix64& rng) {
    for (std::size_t i = items.size(); i > 1; --i) {
        std::size_t j = static_cast<std::size_t>(rng.next_below(i));
        std::swap(items[i - 1], items[j]);
    }
}

std::vector<int> permutation(int n, SplitMix64& rng);

// Gamma(shape) via sums of exponentials for the integer part, a squared normal
// for a half-integer part, and Johnk's method for any other fractional part.
// Integer and half-integer shapes draw a fixed number of variates.
double gamma_sample(double shape, SplitMix64& rng);

// Beta(a, b) as Ga / (Ga + Gb).
double beta_sample(double alpha, double beta, SplitMix64& rng);

}  // namespace laser
