#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace lpnet {

/// Portable seeded generator. The engine is std::mt19937_64, whose output
/// sequence is fixed by the standard; the helpers below avoid the std
/// distributions, whose output differs between standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream for (seed, a, b), e.g. (dataset seed, task, sample index).
    static Rng stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
        std::uint64_t x = splitmix(seed);
        x = splitmix(x ^ (a + 0x632be59bd9b4e019ULL));
        x = splitmix(x ^ (b + 0x9e3779b97f4a7c15ULL));
        return Rng(x);
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n).
    std::size_t below(std::size_t n) {
        if (n == 0) throw std::invalid_argument("Rng::below(0)");
        const std::uint64_t bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next();
        } while (x >= limit);
        return static_cast<std::size_t>(x % bound);
    }

    /// Uniform integer in [lo, hi].
    int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::size_t>(hi - lo) + 1)); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    bool coin(double p = 0.5) { return uniform() < p; }

    template <class T>
    const T& pick(const std::vector<T>& v) {
        return v[below(v.size())];
    }

    template <class It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::size_t>(last - first);
        for (std::size_t i = n; i > 1; --i) {
            const std::size_t j = below(i);
            using std::swap;
            swap(first[i - 1], first[j]);
        }
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace lpnet
