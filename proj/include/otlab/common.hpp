#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace otlab {

// Simulation time is integer milliseconds from run start.
using SimTimeMs = std::int64_t;

using DeviceId = std::string;

// Deterministic random source. Every stochastic consumer (noise, fuzzers,
// generated test networks) pulls from one of these so a fixed seed yields a
// byte-identical run.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double gaussian(double sigma) {
        std::normal_distribution<double> d(0.0, sigma);
        return d(engine_);
    }

    // Uniform integer in [lo, hi], inclusive.
    std::uint64_t uniform(std::uint64_t lo, std::uint64_t hi) {
        std::uniform_int_distribution<std::uint64_t> d(lo, hi);
        return d(engine_);
    }

    double uniform_real(double lo, double hi) {
        std::uniform_real_distribution<double> d(lo, hi);
        return d(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace otlab
