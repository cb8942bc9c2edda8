#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <sstream>
#include <string>

namespace drl {

/// Deterministic random source. Distributions are implemented here rather than
/// with <random> distributions so sequences are identical across standard
/// library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    /// Independent stream for (seed, index) via splitmix64 mixing.
    static Rng derive(std::uint64_t seed, std::uint64_t index) {
        return Rng(splitmix(splitmix(seed) ^ (index + 0x9e3779b97f4a7c15ULL)));
    }

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [lo, hi].
    int uniform_int(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * std::numbers::pi * u2);
        has_spare_ = true;
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }
    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    [[nodiscard]] std::string state() const {
        std::ostringstream os;
        os << engine_ << ' ' << has_spare_ << ' ';
        os.precision(17);
        os << spare_;
        return os.str();
    }
    void set_state(const std::string& text) {
        std::istringstream is(text);
        is >> engine_ >> has_spare_ >> spare_;
    }

    bool operator==(const Rng& other) const {
        return engine_ == other.engine_ && has_spare_ == other.has_spare_ && spare_ == other.spare_;
    }

    static std::uint64_t splitmix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace drl
