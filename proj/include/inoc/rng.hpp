#pragma once

#include <cstdint>
#include <numeric>
#include <utility>
#include <vector>

#include "inoc/errors.hpp"

namespace inoc {

// Deterministic splitmix64 generator. All randomness in the library flows
// through this class so that any run is reproducible from config seeds alone,
// independent of platform or standard-library distribution details.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform in [0, n); rejection sampling avoids modulo bias
    std::size_t next_index(std::size_t n) {
        if (n == 0) throw IndexError("next_index: empty range");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x = next_u64();
        while (x >= limit) x = next_u64();
        return static_cast<std::size_t>(x % bound);
    }

    bool bernoulli(double p) { return next_double() < p; }

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[next_index(i)]);
        }
    }

private:
    std::uint64_t state_;
};

// k distinct indices drawn from [0, population) via partial Fisher-Yates.
inline std::vector<std::size_t> sample_without_replacement(std::size_t population,
                                                           std::size_t k, Rng& rng) {
    if (k > population) throw IndexError("sample_without_replacement: k exceeds population");
    std::vector<std::size_t> idx(population);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t j = 0; j < k; ++j) {
        std::swap(idx[j], idx[j + rng.next_index(population - j)]);
    }
    idx.resize(k);
    return idx;
}

}  // namespace inoc
