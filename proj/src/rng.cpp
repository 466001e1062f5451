#include "loralab/rng.hpp"

#include <cmath>
#include <limits>

namespace loralab {

namespace {

uint64_t mix64(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

}  // namespace

uint64_t Rng::next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::normal(double mean, double stddev) {
    if (has_spare_) {
        has_spare_ = false;
        return mean + stddev * spare_;
    }
    // u1 in (0, 1] so the log is finite
    double u1 = 1.0 - uniform();
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return mean + stddev * r * std::cos(a);
}

int Rng::uniform_int(int bound) {
    if (bound <= 1) return 0;
    uint64_t b = static_cast<uint64_t>(bound);
    uint64_t lim = std::numeric_limits<uint64_t>::max() - std::numeric_limits<uint64_t>::max() % b;
    uint64_t r;
    do {
        r = next_u64();
    } while (r >= lim);
    return static_cast<int>(r % b);
}

uint64_t derive_seed(uint64_t base, uint64_t salt) {
    return mix64(base ^ mix64(salt));
}

uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2) {
    return derive_seed(derive_seed(base, s1), s2);
}

uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2, uint64_t s3) {
    return derive_seed(derive_seed(base, s1, s2), s3);
}

}  // namespace loralab
