#include "path/rng.hpp"

#include <numeric>

namespace path {

uint64_t Rng::uniform_below(uint64_t n) {
    // Rejection sampling over the top of the 64-bit range keeps the draw
    // unbiased and the byte stream identical everywhere.
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
        x = engine_();
    } while (x >= limit);
    return x % n;
}

double Rng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

std::vector<size_t> Rng::sample_indices(size_t n, size_t k) {
    if (k > n) k = n;
    std::vector<size_t> pool(n);
    std::iota(pool.begin(), pool.end(), size_t{0});
    for (size_t i = 0; i < k; ++i) {
        size_t j = i + static_cast<size_t>(uniform_below(n - i));
        std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
}

uint64_t Rng::mix(uint64_t seed) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t Rng::derive_seed(uint64_t seed, uint64_t stream) {
    return mix(seed ^ mix(stream));
}

}  // namespace path
