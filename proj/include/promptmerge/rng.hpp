#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <string_view>

namespace pm {

// Platform-stable random stream. std::mt19937_64 is fully specified by the
// standard; the distributions are not, so all draws go through the helpers
// below instead of <random> distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    // Uniform integer in [lo, hi] inclusive.
    long long range(long long lo, long long hi);

    double normal();

    bool bernoulli(double p) { return uniform() < p; }

    std::string state() const;
    void set_state(const std::string& state);

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t x);

// Seed for a named sub-stream, so that adding a consumer of randomness in
// one place does not perturb the draws seen elsewhere.
std::uint64_t stream_seed(std::uint64_t seed, std::string_view name);

inline Rng named_stream(std::uint64_t seed, std::string_view name) {
    return Rng(stream_seed(seed, name));
}

} // namespace pm
