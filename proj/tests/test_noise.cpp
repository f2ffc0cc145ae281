#include <catch2/catch_amalgamated.hpp>

#include "test_util.hpp"

using namespace pfplan;
using namespace pfplan::testing;

TEST_CASE("coin sample mean concentrates") {
    const NoiseDistribution coin = coin_pm1();
    RngStream rng(11, 1);
    CompensatedSum sum;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) sum.add(coin.sample(rng)[0]);
    const double mean = sum.value() / n;
    REQUIRE(mean >= -0.004);  // 3 sigma band = 0.003, with slack
    REQUIRE(mean <= 0.004);
}

TEST_CASE("gaussian sample variance concentrates") {
    const NoiseDistribution g = unit_gaussian();
    RngStream rng(11, 2);
    CompensatedSum sum, sumsq;
    const int n = 1000000;
    for (int i = 0; i < n; ++i) {
        const double z = g.sample(rng)[0];
        sum.add(z);
        sumsq.add(z * z);
    }
    const double mean = sum.value() / n;
    const double var = sumsq.value() / n - mean * mean;
    REQUIRE(var >= 0.995);
    REQUIRE(var <= 1.005);
}

TEST_CASE("single-atom distribution always returns its atom") {
    const NoiseDistribution d = point_mass_zero();
    RngStream rng(11, 3);
    for (int i = 0; i < 100; ++i) REQUIRE(d.sample(rng)[0] == 0.0);
}

TEST_CASE("sampling is deterministic per stream key") {
    const NoiseDistribution g = unit_gaussian();
    RngStream a(99, 5), b(99, 5);
    for (int i = 0; i < 50; ++i) REQUIRE(g.sample(a)[0] == g.sample(b)[0]);
}

TEST_CASE("standard normal density at the origin") {
    const NoiseDistribution g = unit_gaussian();
    REQUIRE(g.density(scalar(0.0)) == Catch::Approx(0.3989422804014327).epsilon(1e-12));
}

TEST_CASE("atomic density returns masses under exact matching") {
    const NoiseDistribution coin = coin_pm1();
    REQUIRE(coin.density(scalar(1.0)) == 0.5);
    REQUIRE(coin.density(scalar(-1.0)) == 0.5);
    REQUIRE(coin.density(scalar(0.0)) == 0.0);
    const NoiseDistribution dirac = point_mass_zero();
    REQUIRE(dirac.density(scalar(0.0)) == 1.0);
    REQUIRE(dirac.density(scalar(1.0)) == 0.0);
}

TEST_CASE("atomic masses sum to one and log-density is consistent") {
    const NoiseDistribution d = NoiseDistribution::finite_support(
        {scalar(-2.0), scalar(0.5), scalar(1.5)}, {0.25, 0.5, 0.25}, 0.5);
    CompensatedSum total;
    for (std::size_t k = 0; k < d.atom_count(); ++k) {
        total.add(d.density(d.atom_point(k)));
        REQUIRE(d.log_density(d.atom_point(k)) ==
                Catch::Approx(std::log(d.atom_mass(k))).margin(1e-12));
    }
    REQUIRE(total.value() == Catch::Approx(1.0).margin(1e-12));
    REQUIRE(d.log_density(scalar(0.75)) == kNegInf);  // on-lattice, off-support
    REQUIRE(d.log_density(scalar(0.3)) == kNegInf);   // off-lattice
}

TEST_CASE("finite-support construction rejects bad inputs") {
    REQUIRE_THROWS_AS(NoiseDistribution::finite_support({scalar(0.0)}, {0.5}), Error);
    REQUIRE_THROWS_AS(
        NoiseDistribution::finite_support({scalar(0.0), scalar(0.0)}, {0.5, 0.5}), Error);
    REQUIRE_THROWS_AS(NoiseDistribution::finite_support({scalar(0.3)}, {1.0}, 1.0), Error);
    REQUIRE_THROWS_AS(
        NoiseDistribution::diagonal_gaussian(scalar(0.0), scalar(0.0)), Error);
}

TEST_CASE("gaussian mgf check passes with ratio exactly one at the boundary") {
    const NoiseDistribution g = unit_gaussian();  // variance 1 = 1/m with m = 1
    RngStream rng(13, 1);
    const auto report = mgf_bound_check(g, 1.0, 200, rng);
    REQUIRE(report.pass);
    REQUIRE(report.max_ratio == 1.0);
}

TEST_CASE("rademacher satisfies the unit sub-gaussian bound") {
    RngStream rng(13, 2);
    const auto report = mgf_bound_check(coin_pm1(), 1.0, 200, rng);
    REQUIRE(report.pass);
    REQUIRE(report.max_ratio <= 1.0);
}

TEST_CASE("overdeclared sub-gaussian parameter fails the mgf check") {
    RngStream rng(13, 3);
    const auto report = mgf_bound_check(unit_gaussian(), 2.0, 200, rng);
    REQUIRE_FALSE(report.pass);
    REQUIRE(report.max_ratio > 1.0);
}

TEST_CASE("finite-support mean is the mass-weighted atom average") {
    REQUIRE(coin01().mean()[0] == 0.5);
    REQUIRE(coin_pm1().mean()[0] == 0.0);
}

TEST_CASE("declared sub-gaussian parameters are certified") {
    // Every declared m in the shipped distributions must pass its own
    // certificate: the {0,1} coin centers to +/-1/2, giving m = 4.
    RngStream rng(13, 4);
    REQUIRE(mgf_bound_check(coin01(), 4.0, 300, rng).pass);
    REQUIRE(mgf_bound_check(coin_pm1(), 1.0, 300, rng).pass);
    REQUIRE(mgf_bound_check(unit_gaussian(), 1.0, 300, rng).pass);
}
