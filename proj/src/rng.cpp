#include "redgrape/rng.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace redgrape {

namespace {

constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += kGolden);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
    std::uint64_t s = seed;
    std::uint64_t mixed = splitmix64(s);
    s = mixed ^ (tag * kGolden + 0x2545f4914f6cdd1dULL);
    return splitmix64(s);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream) {
    return derive_seed(seed, static_cast<std::uint64_t>(stream));
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a) {
    return derive_seed(derive_seed(seed, stream), a);
}

std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b) {
    return derive_seed(derive_seed(derive_seed(seed, stream), a), b);
}

Rng::Rng(std::uint64_t seed) {
    std::uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
    // xoshiro state must not be all-zero; splitmix output never is for all
    // four words at once, but guard anyway.
    if (state_[0] == 0 && state_[1] == 0 && state_[2] == 0 && state_[3] == 0) {
        state_[0] = kGolden;
    }
}

std::uint64_t Rng::next_u64() {
    std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::next_below(std::uint64_t bound) {
    if (bound == 0) {
        throw std::invalid_argument("Rng::next_below: bound must be positive");
    }
    // Reject the low remainder zone so every residue is equally likely.
    std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        std::uint64_t x = next_u64();
        if (x >= threshold) {
            return x % bound;
        }
    }
}

double Rng::next_gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    double u, v, s;
    do {
        u = 2.0 * next_double() - 1.0;
        v = 2.0 * next_double() - 1.0;
        s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * m;
    has_spare_ = true;
    return u * m;
}

double Rng::next_gamma(double shape) {
    if (!(shape > 0.0)) {
        throw std::invalid_argument("Rng::next_gamma: shape must be positive");
    }
    if (shape < 1.0) {
        double u = next_double();
        if (u <= 0.0) {
            u = std::numeric_limits<double>::min();
        }
        return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    double d = shape - 1.0 / 3.0;
    double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = next_gaussian();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        double u = next_double();
        if (u < 1.0 - 0.0331 * x * x * x * x) {
            return d * v;
        }
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) {
            return d * v;
        }
    }
}

}  // namespace redgrape
