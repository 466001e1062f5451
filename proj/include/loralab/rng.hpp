#pragma once

#include <cstdint>
#include <vector>

namespace loralab {

// Deterministic counter-free PRNG (splitmix64 core). We deliberately avoid
// std::normal_distribution and friends: their draw sequences are
// implementation defined, and reproducibility down to the last bit is part of
// the contract of every experiment in this repo.
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64();

    // uniform in [0, 1), 53-bit resolution
    double uniform();

    // Box-Muller, deterministic draw order, second value cached
    double normal(double mean = 0.0, double stddev = 1.0);

    // uniform integer in [0, bound), rejection sampled (no modulo bias)
    int uniform_int(int bound);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(uniform_int(static_cast<int>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    uint64_t state_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

// Stream splitting: named child seeds so that parallel schedules can never
// change which random numbers an example/pass/epoch sees.
uint64_t derive_seed(uint64_t base, uint64_t salt);
uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2);
uint64_t derive_seed(uint64_t base, uint64_t s1, uint64_t s2, uint64_t s3);

}  // namespace loralab
