#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace path {

// Deterministic RNG. All sampling in the pipeline goes through this class so
// results are a pure function of (input, seed) on every platform; the
// distribution helpers avoid std::uniform_int_distribution, whose output is
// implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed) {}

    uint64_t next() { return engine_(); }

    // Uniform integer in [0, n) via rejection sampling. n must be > 0.
    uint64_t uniform_below(uint64_t n);

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01();

    // k distinct indices from [0, n), uniform without replacement, in the
    // order drawn (partial Fisher-Yates). Clamps k to n.
    std::vector<size_t> sample_indices(size_t n, size_t k);

    // SplitMix64 step; used to derive independent child seeds.
    static uint64_t mix(uint64_t seed);
    static uint64_t derive_seed(uint64_t seed, uint64_t stream);

private:
    std::mt19937_64 engine_;
};

}  // namespace path
