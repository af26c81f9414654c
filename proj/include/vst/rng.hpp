#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vst {

// Seeded random stream with a pinned draw discipline: every consumer
// documents the order in which it takes values, so fixed seeds give
// bit-identical runs. Distributions are derived from raw engine output
// here rather than through std:: distributions to keep the mapping
// explicit.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // Uniform in (0, 1].
    double next_unit() {
        return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1p-53;
    }

    // Uniform integer in [0, n).
    int next_int(int n) { return static_cast<int>(next_u64() % static_cast<std::uint64_t>(n)); }

    bool next_coin() { return (next_u64() & 1u) != 0; }

    // Box-Muller standard normal; each engine pair yields two values,
    // returned sin-after-cos.
    double next_normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Normal(0, std²) resampled until within two standard deviations.
    double next_trunc_normal(double std_dev) {
        double z;
        do {
            z = next_normal();
        } while (std::abs(z) > 2.0);
        return z * std_dev;
    }

  private:
    std::mt19937_64 gen_;
    double spare_ = 0;
    bool has_spare_ = false;
};

}  // namespace vst
