#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdint>
#include <set>
#include <vector>

#include "test_util.hpp"

using namespace pfplan;

namespace {

// Independent Philox4x32-10 reference, structured after the classic
// counter-based generator: explicit per-round mul-hi/lo and key schedule.
void reference_round(std::uint32_t counter[4], const std::uint32_t key[2]) {
    const std::uint64_t p0 = std::uint64_t{0xD2511F53u} * counter[0];
    const std::uint64_t p1 = std::uint64_t{0xCD9E8D57u} * counter[2];
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    counter[0] = hi1 ^ counter[1] ^ key[0];
    counter[1] = lo1;
    counter[2] = hi0 ^ counter[3] ^ key[1];
    counter[3] = lo0;
}

std::array<std::uint32_t, 4> reference_philox(std::array<std::uint32_t, 4> ctr,
                                              std::array<std::uint32_t, 2> key) {
    std::uint32_t c[4] = {ctr[0], ctr[1], ctr[2], ctr[3]};
    std::uint32_t k[2] = {key[0], key[1]};
    for (int round = 0; round < 10; ++round) {
        reference_round(c, k);
        k[0] += 0x9E3779B9u;
        k[1] += 0xBB67AE85u;
    }
    return {c[0], c[1], c[2], c[3]};
}

}  // namespace

TEST_CASE("philox block matches an independent reference") {
    const std::vector<std::array<std::uint32_t, 4>> counters = {
        {0u, 0u, 0u, 0u},
        {0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu},
        {0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u},
        {1u, 2u, 3u, 4u},
    };
    const std::vector<std::array<std::uint32_t, 2>> keys = {
        {0u, 0u}, {0xffffffffu, 0xffffffffu}, {0xa4093822u, 0x299f31d0u}, {42u, 7u}};
    for (const auto& c : counters)
        for (const auto& k : keys) REQUIRE(philox4x32_10(c, k) == reference_philox(c, k));
}

TEST_CASE("identical stream key gives a bit-identical draw sequence") {
    RngStream a(123, 456);
    RngStream b(123, 456);
    for (int i = 0; i < 100; ++i) REQUIRE(a.next_u64() == b.next_u64());
}

TEST_CASE("distinct streams and seeds decorrelate") {
    RngStream a(123, 456);
    RngStream b(123, 457);
    RngStream c(124, 456);
    std::set<std::uint64_t> values;
    for (int i = 0; i < 64; ++i) {
        values.insert(a.next_u64());
        values.insert(b.next_u64());
        values.insert(c.next_u64());
    }
    REQUIRE(values.size() == 3 * 64);  // no collisions across 192 draws
}

TEST_CASE("uniform draws live in [0,1) with the right mean") {
    RngStream rng(7, 1);
    double sum = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        sum += u;
    }
    REQUIRE(std::abs(sum / n - 0.5) < 0.003);  // 3 sigma ~ 0.0019
}

TEST_CASE("normal draws have standard moments") {
    RngStream rng(7, 2);
    CompensatedSum sum, sumsq;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double z = rng.normal();
        sum.add(z);
        sumsq.add(z * z);
    }
    const double mean = sum.value() / n;
    const double var = sumsq.value() / n - mean * mean;
    REQUIRE(std::abs(mean) < 0.004);        // 3 sigma = 0.003
    REQUIRE(std::abs(var - 1.0) < 0.005);   // 3 sigma ~ 0.0042
}

TEST_CASE("mix_stream separates composite ids") {
    std::set<std::uint64_t> ids;
    for (std::uint64_t i = 0; i < 50; ++i)
        for (std::uint64_t t = 0; t < 50; ++t)
            ids.insert(mix_stream(mix_stream(stream_domain::particle, i), t));
    REQUIRE(ids.size() == 50 * 50);
}

TEST_CASE("derive_cell_seed is stable and collision-free on small grids") {
    REQUIRE(derive_cell_seed(42, 0, 0) == derive_cell_seed(42, 0, 0));
    std::set<std::uint64_t> seeds;
    for (std::uint64_t n = 0; n < 16; ++n)
        for (std::uint64_t s = 0; s < 128; ++s) seeds.insert(derive_cell_seed(42, n, s));
    REQUIRE(seeds.size() == 16 * 128);
}
