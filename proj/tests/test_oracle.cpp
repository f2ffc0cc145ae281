#include <catch2/catch_amalgamated.hpp>

#include "grid_oracle.hpp"
#include "test_util.hpp"

using namespace pfplan;
using namespace pfplan::testing;

TEST_CASE("kalman conjugacy on the scalar one-step case") {
    // A=1, B=1, x0=0, u0=0, q=r=1, o1=2: prior mean 0, gain q/(q+r)=1/2.
    const SystemSpec spec = scalar_gaussian_system(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1);
    const auto result = kalman_posterior_mean(spec, {scalar(2.0)}, {scalar(0.0)});
    REQUIRE(result.mean[0] == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(result.covariance(0, 0) == Catch::Approx(0.5).epsilon(1e-12));

    // Cross-check against the dense-grid posterior oracle.
    const auto grid = grid_posterior_scalar(
        spec, {scalar(2.0)}, {scalar(0.0)},
        [](int, double xi) { return gaussian_density(xi, 0.0, 1.0); },
        {uniform_grid(-10.0, 10.0, 100001)});
    REQUIRE(grid.state_mean == Catch::Approx(result.mean[0]).margin(1e-9));
}

TEST_CASE("kalman multi-step agrees with the grid oracle") {
    const SystemSpec spec = scalar_gaussian_system(0.9, 1.0, 1.0, 1.0, 1.0, 0.3, 2);
    const std::vector<Vec> obs = {scalar(1.4), scalar(-0.2)};
    const std::vector<Vec> actions = {scalar(0.5), scalar(-0.7)};
    const auto result = kalman_posterior_mean(spec, obs, actions);
    const auto grid = grid_posterior_scalar(
        spec, obs, actions, [](int, double xi) { return gaussian_density(xi, 0.0, 1.0); },
        {uniform_grid(-8.0, 8.0, 1601), uniform_grid(-8.0, 8.0, 1601)});
    REQUIRE(grid.state_mean == Catch::Approx(result.mean[0]).margin(1e-6));
}

TEST_CASE("kalman with zero-variance noise propagates exactly") {
    const SystemSpec spec = zero_noise_system(0.7, 1.0, 1.0, 2.0, 4);
    std::vector<Vec> obs, actions;
    Vec x = spec.x0;
    for (int t = 0; t < 4; ++t) {
        actions.push_back(scalar(0.3));
        x = step_state(spec, t, x, actions.back(), scalar(0.0));
        obs.push_back(observe(spec, t + 1, x, scalar(0.0)));
        const auto result = kalman_posterior_mean(spec, obs, actions);
        REQUIRE(result.mean[0] == x[0]);  // exact propagation, no update math
        REQUIRE(result.covariance(0, 0) == 0.0);
    }
}

TEST_CASE("kalman with uninformative observations returns the prior mean") {
    const SystemSpec spec = scalar_gaussian_system(1.0, 1.0, 1.0, 1.0, 1e18, 0.0, 1);
    const auto result = kalman_posterior_mean(spec, {scalar(2.0)}, {scalar(0.0)});
    REQUIRE(std::abs(result.mean[0]) < 1e-9);
}

TEST_CASE("kalman rejects multi-atom noise") {
    RngStream rng(41, 9);
    const SystemSpec spec = random_two_atom_system(rng, 2);
    REQUIRE_THROWS_AS(kalman_posterior_mean(spec, {scalar(0.0)}, {scalar(0.0)}), Error);
}

TEST_CASE("enumeration on the hard instance") {
    const LowerBoundInstance inst = build_lowerbound_process(3);
    const std::vector<Vec> zero_actions(3, scalar(0.0));
    SECTION("o1 = 1 identifies the +1 atom") {
        const auto post = enumerate_posterior_mean(inst.spec, {scalar(1.0)}, {scalar(0.0)});
        REQUIRE(post.gamma == 0.5);
        REQUIRE(post.noise_means[0][0] == 1.0);
        REQUIRE(post.posterior_mean[0] == 1.0);
    }
    SECTION("o1 = 0 is impossible") {
        REQUIRE_THROWS_AS(enumerate_posterior_mean(inst.spec, {scalar(0.0)}, {scalar(0.0)}),
                          ImpossibleObservationError);
    }
    SECTION("gamma_t = 2^-t on the conditioned record") {
        const auto gammas =
            likelihood_gamma(inst.spec, inst.conditioned_observations, zero_actions);
        for (int t = 1; t <= 3; ++t)
            REQUIRE(gammas[static_cast<std::size_t>(t) - 1] == std::ldexp(1.0, -t));
        // Sanity bound for atomic observation noise: the per-step likelihood
        // factor is at most the largest observation mass (here 1).
        for (int t = 2; t <= 3; ++t)
            REQUIRE(gammas[static_cast<std::size_t>(t) - 1] <=
                    gammas[static_cast<std::size_t>(t) - 2] * 1.0);
    }
    SECTION("impossible record reports zero, not an error") {
        // From x_1 = 1 the walk can only reach {0, 2}; observing 4 is
        // impossible and zeroes every later gamma.
        const auto gammas =
            likelihood_gamma(inst.spec, {scalar(1.0), scalar(4.0), scalar(5.0)}, zero_actions);
        REQUIRE(gammas[0] == 0.5);
        REQUIRE(gammas[1] == 0.0);
        REQUIRE(gammas[2] == 0.0);
    }
    SECTION("a zigzag record is possible and has gamma_t = 2^-t") {
        const auto gammas =
            likelihood_gamma(inst.spec, {scalar(1.0), scalar(0.0), scalar(1.0)}, zero_actions);
        REQUIRE(gammas[0] == 0.5);
        REQUIRE(gammas[1] == 0.25);
        REQUIRE(gammas[2] == 0.125);
    }
}

TEST_CASE("enumeration with symmetric likelihoods splits the posterior") {
    // xi uniform on {0,1}, gaussian observation, o1 = 0.5: both atoms equally
    // likely, so the posterior noise mean is 1/2.
    const SystemSpec spec = SystemSpec::time_invariant(
        Mat::Identity(1, 1), Mat::Zero(1, 1), Mat::Identity(1, 1), coin01(), unit_gaussian(),
        scalar(0.0), 1);
    const auto post = enumerate_posterior_mean(spec, {scalar(0.5)}, {scalar(0.0)});
    REQUIRE(post.noise_means[0][0] == Catch::Approx(0.5).epsilon(1e-12));
    REQUIRE(post.posterior_mean[0] == Catch::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("enumeration matches a narrow gaussian-mixture grid posterior") {
    // Two-atom transition noise vs its narrow two-component mixture
    // relaxation: posterior means agree to 1e-6.
    RngStream rng(41, 1);
    const SystemSpec spec = SystemSpec::time_invariant(
        Mat::Constant(1, 1, 0.8), Mat::Constant(1, 1, 1.0), Mat::Identity(1, 1), coin_pm1(),
        unit_gaussian(), scalar(0.2), 2);
    const std::vector<Vec> actions = {scalar(0.4), scalar(-0.3)};
    const std::vector<Vec> obs = {scalar(0.9), scalar(-0.5)};
    const auto post = enumerate_posterior_mean(spec, obs, actions);
    const double sigma = 1e-4;
    const auto mixture = [sigma](int, double xi) {
        return 0.5 * gaussian_density(xi, -1.0, sigma * sigma) +
               0.5 * gaussian_density(xi, 1.0, sigma * sigma);
    };
    const auto grid = two_window_grid(1.0, 8.0 * sigma, 801);
    const auto gp = grid_posterior_scalar(spec, obs, actions, mixture, {grid, grid});
    REQUIRE(gp.state_mean == Catch::Approx(post.posterior_mean[0]).margin(1e-6));
    REQUIRE(gp.noise_means[0] == Catch::Approx(post.noise_means[0][0]).margin(1e-6));
    REQUIRE(gp.noise_means[1] == Catch::Approx(post.noise_means[1][0]).margin(1e-6));
}

TEST_CASE("reference filter approaches the kalman posterior") {
    const SystemSpec spec = scalar_gaussian_system(0.9, 1.0, 1.0, 1.0, 1.0, 0.0, 5);
    const Policy policy = Policy::linear(Mat::Constant(1, 1, -0.5));
    std::vector<double> err_small, err_large;
    for (int s = 0; s < 20; ++s) {
        const std::uint64_t seed = derive_cell_seed(911, 0, static_cast<std::uint64_t>(s));
        const NoiseRecord record = draw_noise_record(spec, seed);
        const PlannerResult run = run_pf_planner(spec, policy, 500, seed + 1, record);
        const auto kalman =
            kalman_posterior_mean(spec, run.trajectory.observations, run.trajectory.actions);
        const Vec small = reference_filter_mean(spec, run.trajectory.observations,
                                                run.trajectory.actions, 1000, seed + 2);
        const Vec large = reference_filter_mean(spec, run.trajectory.observations,
                                                run.trajectory.actions, 100000, seed + 3);
        err_small.push_back(std::abs(small[0] - kalman.mean[0]));
        err_large.push_back(std::abs(large[0] - kalman.mean[0]));
    }
    REQUIRE(median(err_large) < median(err_small));
    REQUIRE(median(err_large) < 0.05);
}

TEST_CASE("reference filter converges to the enumeration posterior") {
    RngStream rng(41, 3);
    const SystemSpec spec = random_two_atom_system(rng, 4);
    const Policy policy = random_scalar_policy(rng);
    const NoiseRecord record = draw_noise_record(spec, 271);
    const PlannerResult run = run_pf_planner(spec, policy, 200, 272, record);
    REQUIRE_FALSE(run.death_time);
    const auto exact =
        enumerate_posterior_mean(spec, run.trajectory.observations, run.trajectory.actions);
    std::vector<double> errs;
    for (int n_ref : {100, 10000, 1000000}) {
        CompensatedSum err;
        for (std::uint64_t s = 0; s < 5; ++s)
            err.add(std::abs(reference_filter_mean(spec, run.trajectory.observations,
                                                   run.trajectory.actions, n_ref,
                                                   mix_stream(273, s))[0] -
                             exact.posterior_mean[0]));
        errs.push_back(err.value() / 5.0);
    }
    REQUIRE(errs[2] < errs[0]);  // 100x more particles, ~10x less error
    REQUIRE(errs[2] < 0.01);
}

TEST_CASE("reference filter is exact on zero-noise systems") {
    const SystemSpec spec = zero_noise_system(1.0, 1.0, 1.0, 1.0, 4);
    std::vector<Vec> obs, actions;
    Vec x = spec.x0;
    for (int t = 0; t < 4; ++t) {
        actions.push_back(scalar(-0.25));
        x = step_state(spec, t, x, actions.back(), scalar(0.0));
        obs.push_back(observe(spec, t + 1, x, scalar(0.0)));
    }
    for (int n_ref : {1, 10, 1000})
        REQUIRE(reference_filter_mean(spec, obs, actions, n_ref, 5)[0] == x[0]);
}

TEST_CASE("kalman and reference filter agree on a 2-d system") {
    Mat A(2, 2), B(2, 1);
    A << 0.9, 0.1, 0.0, 0.8;
    B << 1.0, 0.5;
    Vec mu_var(2);
    mu_var << 1.0, 0.5;
    Mat G(1, 2);
    G << -0.3, -0.1;
    const Policy policy = Policy::linear(G);

    SECTION("partial observation (obs_dim = 1)") {
        Mat C(1, 2);
        C << 1.0, 0.0;
        const SystemSpec spec = SystemSpec::time_invariant(
            A, B, C, NoiseDistribution::diagonal_gaussian(Vec::Zero(2), mu_var, 1.0),
            NoiseDistribution::diagonal_gaussian(Vec::Zero(1), Vec::Ones(1)), Vec::Zero(2), 4);
        for (std::uint64_t s = 0; s < 5; ++s) {
            const NoiseRecord rec = draw_noise_record(spec, mix_stream(77, s));
            const PlannerResult run = run_pf_planner(spec, policy, 400, mix_stream(78, s), rec);
            const auto kal = kalman_posterior_mean(spec, run.trajectory.observations,
                                                   run.trajectory.actions);
            const Vec ref =
                reference_filter_mean(spec, run.trajectory.observations, run.trajectory.actions,
                                      200000, mix_stream(79, s));
            REQUIRE((ref - kal.mean).norm() <= 0.05);  // measured worst ~ 0.021
        }
    }
    SECTION("full observation (obs_dim = 2)") {
        const SystemSpec spec = SystemSpec::time_invariant(
            A, B, Mat::Identity(2, 2),
            NoiseDistribution::diagonal_gaussian(Vec::Zero(2), mu_var, 1.0),
            NoiseDistribution::diagonal_gaussian(Vec::Zero(2), Vec::Constant(2, 0.5)),
            Vec::Zero(2), 4);
        for (std::uint64_t s = 0; s < 3; ++s) {
            const NoiseRecord rec = draw_noise_record(spec, mix_stream(87, s));
            const PlannerResult run = run_pf_planner(spec, policy, 400, mix_stream(88, s), rec);
            const auto kal = kalman_posterior_mean(spec, run.trajectory.observations,
                                                   run.trajectory.actions);
            const Vec ref =
                reference_filter_mean(spec, run.trajectory.observations, run.trajectory.actions,
                                      200000, mix_stream(89, s));
            REQUIRE((ref - kal.mean).norm() <= 0.05);
        }
        // Coupled 2-d run: exercises the matrix-gain update and the
        // divergence identity (enforced internally) end to end.
        OracleKind kalman_oracle;
        const CoupledRun run =
            run_coupled(spec, policy, RewardFunction::avg_l1(), 2000, kalman_oracle, 5);
        REQUIRE_FALSE(run.death_time);
        REQUIRE(run.reward_gap.has_value());
    }
}

TEST_CASE("oracle applicability rules") {
    OracleKind kalman{OracleType::kalman, 1 << 20, 1000};
    OracleKind enumeration{OracleType::enumeration, 1 << 20, 1000};
    OracleKind reference{OracleType::reference, 1 << 20, 1000};
    RngStream rng(41, 2);
    const SystemSpec atoms = random_two_atom_system(rng, 4);
    const SystemSpec gauss = scalar_gaussian_system(0.9, 1.0, 1.0, 1.0, 1.0, 0.0, 4);
    std::string why;
    REQUIRE_FALSE(oracle_applicable(atoms, kalman, &why));
    REQUIRE(oracle_applicable(atoms, enumeration, &why));
    REQUIRE(oracle_applicable(atoms, reference, &why));
    REQUIRE(oracle_applicable(gauss, kalman, &why));
    REQUIRE_FALSE(oracle_applicable(gauss, enumeration, &why));
    // Budget: 2^30 paths exceed the default budget through the product rule.
    const SystemSpec deep = SystemSpec::time_invariant(
        Mat::Identity(1, 1), Mat::Zero(1, 1), Mat::Identity(1, 1), coin_pm1(), unit_gaussian(),
        scalar(0.0), 30);
    OracleKind tight = enumeration;
    tight.max_paths = 1 << 10;
    REQUIRE_FALSE(oracle_applicable(deep, tight, &why));
}
