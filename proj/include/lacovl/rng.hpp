#pragma once

#include <cstdint>
#include <string>

namespace lacovl {

// Counter-based splittable generator built on the splitmix64 finalizer.
// Every stream is a pure function of (seed, counter), so independently
// split children never interact and results do not depend on call order
// between streams. Bit-identical across platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    // Derive an independent child stream keyed by a string label.
    Rng split(const std::string& label) const;
    Rng split(std::uint64_t salt) const;

    std::uint64_t next_u64();

    // Uniform in [0,1).
    double uniform();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (both values consumed, no cache).
    double normal();

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    std::uint64_t seed() const { return state_; }

private:
    std::uint64_t state_;
};

}  // namespace lacovl
