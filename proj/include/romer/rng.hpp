#pragma once

#include <cmath>
#include <cstdint>

namespace romer {

// Counter-based random stream. Each draw hashes (master_seed, stream_id,
// counter) through two splitmix64 finalizer rounds, so a stream is a pure
// function of its identity: identical (master_seed, stream_id) replay the
// same sequence on any platform, and distinct stream_ids decorrelate without
// jump-ahead bookkeeping. Normals come from Box-Muller over the uniform
// stream (pairwise, with the second value cached).
class RandomStream {
public:
    RandomStream() : RandomStream(0, 0) {}

    RandomStream(std::uint64_t master_seed, std::uint64_t stream_id)
        : master_seed_(master_seed), stream_id_(stream_id) {
        key0_ = mix(master_seed ^ 0x2545f4914f6cdd1dULL);
        key1_ = mix(key0_ ^ mix(stream_id ^ 0x9e3779b97f4a7c15ULL));
    }

    std::uint64_t master_seed() const { return master_seed_; }
    std::uint64_t stream_id() const { return stream_id_; }

    // Child stream with a deterministically derived stream_id. Used to hand
    // independent streams to parallel workers or per-token forwards.
    RandomStream derive(std::uint64_t child_id) const {
        return RandomStream(master_seed_, mix(stream_id_ ^ mix(child_id + 0x632be59bd9b4e019ULL)));
    }

    std::uint64_t next_u64() {
        std::uint64_t z = mix(counter_++ ^ key0_);
        return mix(z ^ key1_);
    }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + uniform01() * (hi - lo); }

    // Unbiased integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        if (n == 0) return 0;
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t v = next_u64();
        while (v >= limit) v = next_u64();
        return v % n;
    }

    // Standard normal via Box-Muller; generates pairs, caches the spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = 1.0 - uniform01();  // (0, 1]: keeps log finite
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * kPi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

private:
    static constexpr double kPi = 3.141592653589793238462643383279502884;

    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t master_seed_;
    std::uint64_t stream_id_;
    std::uint64_t key0_;
    std::uint64_t key1_;
    std::uint64_t counter_ = 0;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace romer
