#pragma once

#include <array>
#include <cstdint>
#include <vector>

namespace redgrape {

// Portable seeded randomness. Every stochastic choice in the simulator flows
// through this generator so that a run is a pure function of its seed, on any
// platform. The engine is xoshiro256++ seeded via splitmix64; uniform, normal
// and gamma variates are generated here instead of <random> because the
// standard distributions are implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double next_double();

    // Unbiased uniform integer in [0, bound). bound must be > 0.
    std::uint64_t next_below(std::uint64_t bound);

    // Standard normal via the Marsaglia polar method (one spare cached).
    double next_gaussian();

    // Gamma(shape, 1) via Marsaglia-Tsang, with the shape<1 boost.
    double next_gamma(double shape);

    // In-place Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::array<std::uint64_t, 4> state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

// Named sub-streams of an experiment seed. Deriving per-purpose seeds keeps
// independent parts of a run independent: e.g. adding rounds never perturbs
// dataset generation, and a client's data loader consumes the same stream
// whether or not re-balancing draws a balanced subset.
enum class Stream : std::uint64_t {
    MixtureMeans = 1,
    TrainData = 2,
    TestData = 3,
    Partition = 4,
    ModelInit = 5,
    Participants = 6,
    BatchLoader = 7,
    BalancedSubset = 8,
    DatasetShuffle = 9,
    ClientRound = 10,
};

// One splitmix64 step over `state` (state is advanced).
std::uint64_t splitmix64(std::uint64_t& state);

// Deterministic sub-seed derivation: two splitmix64 scrambles of (seed, tag).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);
std::uint64_t derive_seed(std::uint64_t seed, Stream stream);
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a);
std::uint64_t derive_seed(std::uint64_t seed, Stream stream, std::uint64_t a, std::uint64_t b);

}  // namespace redgrape
