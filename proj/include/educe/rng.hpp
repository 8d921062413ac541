#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "educe/tensor.hpp"

namespace educe {

// splitmix64; used to derive independent substream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    return splitmix64(a ^ splitmix64(b + 0x632be59bd9b4e019ULL));
}

// Deterministic RNG. All transforms are hand-rolled on top of the
// standardized mt19937_64 output stream so that identical seeds give
// bitwise-identical results on every platform; std::uniform_* would not.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // [0, 1)
    double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    bool bernoulli(double p) { return uniform01() < p; }

    std::size_t below(std::size_t n) {
        // modulo with rejection to stay unbiased
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return static_cast<std::size_t>(x % n);
    }

    // CDF walk over raw probabilities; entries that are exactly zero are
    // never selected, so masked positions stay off-support even under
    // floating-point dust in the tail.
    std::size_t categorical(const std::vector<double>& probs) {
        const double u = uniform01();
        double acc = 0.0;
        std::size_t last_valid = probs.size();
        for (std::size_t i = 0; i < probs.size(); ++i) {
            if (probs[i] == 0.0) continue;
            last_valid = i;
            acc += probs[i];
            if (u < acc) return i;
        }
        if (last_valid == probs.size()) throw MaskError("categorical: no entry with positive probability");
        return last_valid;
    }

    template <class T>
    void shuffle(std::vector<T>& v) {
        if (v.empty()) return;
        for (std::size_t i = v.size() - 1; i > 0; --i) {
            std::size_t j = below(i + 1);
            std::swap(v[i], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace educe
