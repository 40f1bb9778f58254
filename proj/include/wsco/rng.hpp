#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace wsco {

// Deterministic RNG built on splitmix64. Streams are derived by hashing a
// (seed, tag, indices...) key, so every consumer owns an independent stream
// and no generator state needs to survive a checkpoint.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed ^ kMix) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller; draws a fresh pair every call so the stream has no hidden state.
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    int uniform_int(int lo, int hi) {  // inclusive bounds
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(next_u64() % span);
    }

    std::vector<double> normal_vec(int n, double scale = 1.0) {
        std::vector<double> v(n);
        for (auto& x : v) x = scale * normal();
        return v;
    }

    // Sample `k` distinct indices from [0, n) (Fisher-Yates prefix).
    std::vector<int> sample_without_replacement(int n, int k) {
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        for (int i = 0; i < k && i < n; ++i) {
            const int j = i + static_cast<int>(next_u64() % static_cast<std::uint64_t>(n - i));
            std::swap(idx[i], idx[j]);
        }
        idx.resize(k < n ? k : n);
        return idx;
    }

    int categorical(const std::vector<double>& probs) {
        double u = uniform();
        for (std::size_t i = 0; i < probs.size(); ++i) {
            u -= probs[i];
            if (u < 0.0) return static_cast<int>(i);
        }
        return static_cast<int>(probs.size()) - 1;
    }

private:
    static constexpr std::uint64_t kMix = 0x5851f42d4c957f2dULL;
    std::uint64_t state_;
};

// FNV-1a over the tag and indices; used to derive independent substreams.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ seed;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (8 * i)) & 0xff;
            h *= 0x100000001b3ULL;
        }
    };
    for (const char ch : tag) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    mix(a);
    mix(b);
    mix(c);
    return h;
}

inline Rng derive_rng(std::uint64_t seed, std::string_view tag, std::uint64_t a = 0,
                      std::uint64_t b = 0, std::uint64_t c = 0) {
    return Rng(derive_seed(seed, tag, a, b, c));
}

}  // namespace wsco
