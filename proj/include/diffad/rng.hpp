#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

#include "diffad/tensor.hpp"

namespace diffad {

// Counter-based deterministic random source (algorithm id: "splitmix64-ctr").
//
// The i-th raw word of a stream with seed s is
//     mix64(s + i * 0x9E3779B97F4A7C15)
// where mix64 is the splitmix64 finalizer. State is just (seed, counter),
// so identical seeds give bit-identical streams and streams are trivially
// serializable. Substreams mix a stream index into the master seed with the
// same finalizer; distinct indices give distinct substream seeds.
inline std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Pure Box-Muller pair (the basic, not polar, variant): consumes exactly two
// uniforms. u1 must lie in (0,1]; u2 in [0,1).
struct GaussPair {
    double z0;
    double z1;
};

inline GaussPair box_muller(double u1, double u2) {
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * std::numbers::pi * u2;
    return {r * std::cos(theta), r * std::sin(theta)};
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed) {}

    // Substream `index` of a master seed. The derivation is fixed:
    //     sub_seed = mix64(master ^ mix64(index + 0x9E3779B97F4A7C15))
    static RngStream substream(std::uint64_t master, std::uint64_t index) {
        return RngStream(mix64(master ^ mix64(index + 0x9E3779B97F4A7C15ULL)));
    }

    RngStream substream(std::uint64_t index) const { return substream(seed_, index); }

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return mix64(seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL); }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in (0, 1]; safe as the log argument in Box-Muller.
    double uniform_pos() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    // Uniform integer in [0, bound) without modulo bias.
    std::uint64_t uniform_int(std::uint64_t bound) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % bound;
    }

    // Standard normal draw. Pairs come from one Box-Muller evaluation
    // (two uniforms); the second member is cached for the next call.
    double gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const GaussPair p = box_muller(uniform_pos(), uniform());
        spare_ = p.z1;
        have_spare_ = true;
        return p.z0;
    }

    // i.i.d. N(0,1) tensor filled in row-major order.
    Tensor gaussian_tensor(std::vector<std::size_t> shape) {
        Tensor t(std::move(shape));
        for (auto& v : t.data()) v = gaussian();
        return t;
    }

    // In-place Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[uniform_int(i)]);
        }
    }

private:
    std::uint64_t seed_;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace diffad
