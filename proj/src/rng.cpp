#include "laser/rng.hpp"

#include <cmath>
#include <numbers>

#include "laser/errors.hpp"

namespace laser {

std::uint64_t SplitMix64::next_below(std::uint64_t n) {
    if (n == 0) throw InputError("next_below: n must be positive");
    const std::uint64_t threshold = (0 - n) % n;  // 2^64 mod n
    for (;;) {
        std::uint64_t r = next_u64();
        if (r >= threshold) return r % n;
    }
}

double SplitMix64::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = next_open_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(theta);
    has_cached_normal_ = true;
    return r * std::cos(theta);
}

namespace {

std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace

std::uint64_t seed_for(std::uint64_t root, std::string_view path) {
    return mix64(root ^ (fnv1a(path) + 0x9E3779B97F4A7C15ULL));
}

std::uint64_t seed_for(std::uint64_t root, std::string_view path, std::uint64_t index) {
    return mix64(seed_for(root, path) ^ ((index + 1) * 0x9E3779B97F4A7C15ULL));
}

std::vector<int> permutation(int n, SplitMix64& rng) {
    std::vector<int> out(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = i;
    shuffle(out, rng);
    return out;
}

double gamma_sample(double shape, SplitMix64& rng) {
    if (!(shape > 0.0)) throw InputError("gamma_sample: shape must be positive");
    double whole;
    const double frac = std::modf(shape, &whole);
    double g = 0.0;
    for (int i = 0; i < static_cast<int>(whole); ++i) g += -std::log(rng.next_open_double());
    if (frac == 0.0) return g;
    if (frac == 0.5) {
        const double z = rng.normal();
        return g + 0.5 * z * z;
    }
    // Johnk's method for the fractional shape
    for (;;) {
        const double x = std::pow(rng.next_open_double(), 1.0 / frac);
        const double y = std::pow(rng.next_open_double(), 1.0 / (1.0 - frac));
        if (x + y <= 1.0 && x + y > 0.0) {
            const double e = -std::log(rng.next_open_double());
            return g + e * x / (x + y);
        }
    }
}

double beta_sample(double alpha, double beta, SplitMix64& rng) {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw InputError("beta_sample: shape parameters must be positive");
    const double ga = gamma_sample(alpha, rng);
    const double gb = gamma_sample(beta, rng);
    return ga / (ga + gb);
}

}  // namespace laser
