#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "doctest.h"
#include "loralab/rng.hpp"

using namespace loralab;

TEST_CASE("same seed reproduces the exact stream") {
    Rng a(42), b(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    Rng c(42), d(42);
    for (int i = 0; i < 1000; ++i) {
        CHECK(c.uniform() == d.uniform());
        CHECK(c.normal() == d.normal());
    }
}

TEST_CASE("different seeds decorrelate immediately") {
    Rng a(1), b(2);
    int agree = 0;
    for (int i = 0; i < 64; ++i) {
        if (a.next_u64() == b.next_u64()) ++agree;
    }
    CHECK(agree == 0);
}

TEST_CASE("uniform stays in [0, 1) with a sane mean") {
    Rng rng(7);
    double sum = 0.0;
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    CHECK(std::abs(sum / n - 0.5) < 0.01);
}

TEST_CASE("normal matches its first two moments") {
    Rng rng(11);
    const int n = 40000;
    double sum = 0.0, sq = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.03);

    Rng shifted(11);
    double y = shifted.normal(3.0, 2.0);
    Rng base(11);
    CHECK(y == doctest::Approx(3.0 + 2.0 * base.normal()).epsilon(1e-15));
}

TEST_CASE("uniform_int covers its range without bias") {
    Rng rng(5);
    const int bound = 7;
    const int n = 70000;
    std::vector<int> counts(bound, 0);
    for (int i = 0; i < n; ++i) {
        int v = rng.uniform_int(bound);
        REQUIRE(v >= 0);
        REQUIRE(v < bound);
        ++counts[static_cast<std::size_t>(v)];
    }
    // each bucket expects n/bound = 10000, sd ~ sqrt(n*p*(1-p)) ~ 93
    for (int c : counts) CHECK(std::abs(c - n / bound) < 500);

    CHECK(Rng(1).uniform_int(1) == 0);
    CHECK(Rng(1).uniform_int(0) == 0);
}

TEST_CASE("shuffle permutes deterministically") {
    std::vector<int> v(50);
    for (int i = 0; i < 50; ++i) v[static_cast<std::size_t>(i)] = i;
    std::vector<int> w = v;

    std::vector<int> identity = v;
    Rng a(99);
    a.shuffle(v);
    Rng b(99);
    b.shuffle(w);
    CHECK(v == w);
    CHECK(v != identity);

    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 50; ++i) CHECK(sorted[static_cast<std::size_t>(i)] == i);

    std::vector<int> single{3};
    Rng c(1);
    c.shuffle(single);
    CHECK(single == std::vector<int>{3});
    std::vector<int> empty;
    c.shuffle(empty);
    CHECK(empty.empty());
}

TEST_CASE("derive_seed separates streams by salt and order") {
    std::set<std::uint64_t> seen;
    for (std::uint64_t salt = 0; salt < 100; ++salt) {
        seen.insert(derive_seed(1234, salt));
    }
    CHECK(seen.size() == 100);

    CHECK(derive_seed(1, 2) == derive_seed(1, 2));
    CHECK(derive_seed(1, 2) != derive_seed(2, 1));
    CHECK(derive_seed(1, 2, 3) != derive_seed(1, 3, 2));
    CHECK(derive_seed(1, 2, 3, 4) != derive_seed(1, 2, 4, 3));
    // multi-salt derivation is the left fold of single-salt derivation
    CHECK(derive_seed(1, 2, 3) == derive_seed(derive_seed(1, 2), 3));
}
