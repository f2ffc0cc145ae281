#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "pfplan/analysis.hpp"
#include "pfplan/config.hpp"
#include "pfplan/coupled.hpp"
#include "pfplan/harness.hpp"
#include "pfplan/lowerbound.hpp"

namespace pfplan {

struct PropertyResult {
    std::string name;
    bool pass = true;
    std::string detail;
};

namespace detail {

inline double rel_err(const Vec& a, const Vec& b) {
    const double scale = std::max({1.0, a.norm(), b.norm()});
    return (a - b).norm() / scale;
}

inline double uniform_in(RngStream& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.uniform();
}

// Random scalar system with two-atom transition noise and Gaussian
// observations: enumeration-exact, Kalman-free, well-scaled.
inline SystemSpec random_two_atom_system(RngStream& rng, int horizon) {
    const auto one = [](double v) { return Vec::Constant(1, v); };
    const NoiseDistribution mu = NoiseDistribution::finite_support(
        {one(-1.0), one(1.0)}, {0.5, 0.5}, 1.0, /*subgaussian_m=*/1.0);
    const NoiseDistribution eta = NoiseDistribution::diagonal_gaussian(one(0.0), one(1.0));
    return SystemSpec::time_invariant(Mat::Constant(1, 1, uniform_in(rng, 0.3, 1.0)),
                                      Mat::Constant(1, 1, uniform_in(rng, 0.2, 1.0)),
                                      Mat::Identity(1, 1), mu, eta,
                                      one(uniform_in(rng, -1.0, 1.0)), horizon);
}

inline Policy random_scalar_policy(RngStream& rng) {
    return Policy::linear(Mat::Constant(1, 1, uniform_in(rng, -0.8, -0.1)));
}

}  // namespace detail

// The invariant battery behind `validate`: deterministic randomized checks
// of the identities the library is built on, plus arithmetic regressions.
inline std::vector<PropertyResult> run_validation_suite(const RunConfig& config) {
    std::vector<PropertyResult> results;
    const std::uint64_t seed = config.master_seed();

    auto check = [&](const std::string& name, auto&& fn) {
        PropertyResult r;
        r.name = name;
        try {
            fn(r);
        } catch (const std::exception& e) {
            r.pass = false;
            r.detail = e.what();
        }
        results.push_back(std::move(r));
    };

    check("spec-validation", [&](PropertyResult& r) {
        for (const auto& [name, _] : preset_texts()) {
            if (name == "lowerbound") continue;  // no [system] section
            RunConfig preset{load_preset(name)};
            const auto violations = validate_spec(preset.system());
            if (!violations.empty()) {
                r.pass = false;
                r.detail = "preset " + name + ": " + violations.front();
                return;
            }
        }
        // A deliberately corrupted spec must be caught.
        RunConfig base{load_preset("gaussian")};
        SystemSpec corrupted = base.system();
        corrupted.A_seq.pop_back();
        const auto violations = validate_spec(corrupted);
        if (violations.empty()) {
            r.pass = false;
            r.detail = "corrupted A_seq length went undetected";
        }
    });

    check("decomposition-vs-iteration", [&](PropertyResult& r) {
        RngStream rng(seed, mix_stream(stream_domain::probe, 1));
        double worst = 0.0;
        for (int rep = 0; rep < 200; ++rep) {
            const int d = 1 + static_cast<int>(rng.next_u64() % 3);
            const int k = 1 + static_cast<int>(rng.next_u64() % 2);
            const int T = 2 + static_cast<int>(rng.next_u64() % 5);
            SystemSpec spec;
            spec.state_dim = d;
            spec.action_dim = k;
            spec.obs_dim = 1;
            spec.horizon = T;
            spec.x0 = Vec::NullaryExpr(d, [&](Eigen::Index) { return rng.normal(); });
            std::vector<Vec> actions, noises;
            Vec x = spec.x0;
            for (int t = 0; t < T; ++t) {
                spec.A_seq.push_back(
                    Mat::NullaryExpr(d, d, [&](Eigen::Index, Eigen::Index) {
                        return detail::uniform_in(rng, -1.0, 1.0);
                    }));
                spec.B_seq.push_back(
                    Mat::NullaryExpr(d, k, [&](Eigen::Index, Eigen::Index) {
                        return detail::uniform_in(rng, -1.0, 1.0);
                    }));
                spec.C_seq.push_back(Mat::Ones(1, d));
                actions.push_back(Vec::NullaryExpr(k, [&](Eigen::Index) { return rng.normal(); }));
                noises.push_back(Vec::NullaryExpr(d, [&](Eigen::Index) { return rng.normal(); }));
                x = step_state(spec, t, x, actions.back(), noises.back());
            }
            worst = std::max(worst, detail::rel_err(decompose_state(spec, actions, noises, T), x));
        }
        r.pass = worst <= 1e-12;
        r.detail = "max relative error " + format_double(worst);
    });

    check("estimate-reconstruction", [&](PropertyResult& r) {
        RngStream rng(seed, mix_stream(stream_domain::probe, 2));
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            const SystemSpec spec = detail::random_two_atom_system(rng, 5);
            const Policy policy = detail::random_scalar_policy(rng);
            const NoiseRecord record = draw_noise_record(spec, rng.next_u64());
            const PlannerResult run = run_pf_planner(spec, policy, 64, rng.next_u64(), record);
            for (std::size_t t = 1; t < run.estimates.size(); ++t) {
                const std::vector<Vec> actions(run.trajectory.actions.begin(),
                                               run.trajectory.actions.begin() +
                                                   static_cast<std::ptrdiff_t>(t));
                const Vec rebuilt =
                    decompose_state(spec, actions, run.noise_estimates[t], static_cast<int>(t));
                worst = std::max(worst, detail::rel_err(rebuilt, run.estimates[t]));
            }
        }
        r.pass = worst <= 1e-9;
        r.detail = "max relative error " + format_double(worst);
    });

    check("coupling-likelihood-identity", [&](PropertyResult& r) {
        RngStream rng(seed, mix_stream(stream_domain::probe, 3));
        OracleKind oracle;
        oracle.type = OracleType::enumeration;
        double worst = 0.0;
        for (int rep = 0; rep < 50; ++rep) {
            const SystemSpec spec = detail::random_two_atom_system(rng, 4);
            const Policy policy = detail::random_scalar_policy(rng);
            const CoupledRun run = run_coupled(spec, policy, RewardFunction::avg_l1(), 64, oracle,
                                               rng.next_u64());
            for (int t = 1; t <= spec.horizon; ++t) {
                const auto tu = static_cast<std::size_t>(t);
                const std::vector<Vec> obs_a(run.approx.observations.begin(),
                                             run.approx.observations.begin() + tu);
                const std::vector<Vec> act_a(run.approx.actions.begin(),
                                             run.approx.actions.begin() + tu);
                const std::vector<Vec> obs_i(run.ideal.observations.begin(),
                                             run.ideal.observations.begin() + tu);
                const std::vector<Vec> act_i(run.ideal.actions.begin(),
                                             run.ideal.actions.begin() + tu);
                const auto post_a = enumerate_posterior_mean(spec, obs_a, act_a);
                const auto post_i = enumerate_posterior_mean(spec, obs_i, act_i);
                const double scale = std::max({1e-300, post_a.gamma, post_i.gamma});
                worst = std::max(worst, std::abs(post_a.gamma - post_i.gamma) / scale);
                for (int s = 0; s < t; ++s) {
                    const auto su = static_cast<std::size_t>(s);
                    worst = std::max(worst, (post_a.gamma_vec[su] - post_i.gamma_vec[su]).norm() /
                                                scale);
                }
            }
        }
        r.pass = worst <= 1e-12;
        r.detail = "max relative deviation " + format_double(worst);
    });

    check("divergence-attribution", [&](PropertyResult& r) {
        // run_coupled enforces the identity internally and throws on a
        // violation; completing these runs is the check.
        RngStream rng(seed, mix_stream(stream_domain::probe, 4));
        OracleKind oracle;
        oracle.type = OracleType::enumeration;
        for (int rep = 0; rep < 50; ++rep) {
            const SystemSpec spec = detail::random_two_atom_system(rng, 5);
            run_coupled(spec, detail::random_scalar_policy(rng), RewardFunction::avg_l1(), 32,
                        oracle, rng.next_u64());
        }
        r.detail = "50 coupled runs";
    });

    check("envelope-dominance", [&](PropertyResult& r) {
        RngStream rng(seed, mix_stream(stream_domain::probe, 5));
        OracleKind oracle;
        oracle.type = OracleType::enumeration;
        for (int rep = 0; rep < 50; ++rep) {
            const SystemSpec spec = detail::random_two_atom_system(rng, 5);
            const Policy policy = detail::random_scalar_policy(rng);
            const CoupledRun run =
                run_coupled(spec, policy, RewardFunction::avg_l1(), 32, oracle, rng.next_u64());
            if (run.death_time) continue;
            const BoundParams params = growth_constants_from(spec, policy);
            for (const PolicyClass pc : {PolicyClass::lipschitz, PolicyClass::linear}) {
                const auto gap = action_gap_measure(run, params, pc);
                if (!gap.dominated) {
                    r.pass = false;
                    r.detail = "violation in replication " + std::to_string(rep);
                    return;
                }
            }
        }
        r.detail = "50 coupled runs, both policy classes";
    });

    check("bound-arithmetic", [&](PropertyResult& r) {
        BoundParams a;
        a.c_a = 1.0;
        a.rho_a = 1.0;
        a.horizon = 3;
        if (sigma_a(a, 3) != 3.0) {
            r.pass = false;
            r.detail = "Sigma_a^(3) != 3";
            return;
        }
        BoundParams b;
        b.c_a = 0.5;
        b.c_b = 1.0;
        b.lg = 0.5;  // C_a + C_b L_g = 1
        if (sigma_ab(b, 3) != 2.0) {
            r.pass = false;
            r.detail = "Sigma_ab^(2) != 2";
            return;
        }
        if (delta_t_lipschitz(1.0, 1.0, 1.0, 3.0, 2.0) != 36.0) {
            r.pass = false;
            r.detail = "Delta_3 != 36";
            return;
        }
        // Stable regime: doubling T must grow the particle expression by at
        // most a fixed power of two.
        BoundParams stable;
        stable.c_a = 0.9;
        stable.rho_a = 1.0;
        stable.c_b = 0.2;
        stable.lg = 0.5;  // C_a + C_b L_g = 1
        for (int T = 4; T <= 32; T *= 2) {
            stable.horizon = T;
            const double n_t = bound_calculator(stable, PolicyClass::lipschitz).n_expression;
            stable.horizon = 2 * T;
            const double n_2t = bound_calculator(stable, PolicyClass::lipschitz).n_expression;
            if (n_2t / n_t > 512.0) {
                r.pass = false;
                r.detail = "N expression grew faster than T^9 at T=" + std::to_string(T);
                return;
            }
        }
        r.detail = "regression set exact";
    });

    check("concentration", [&](PropertyResult& r) {
        const double beta = config.cfg.get_double("validate.beta", 0.25);
        if (beta > 0.5)
            throw ConfigError("validate.beta violates the concentration hypothesis beta <= 1/2");
        const double beta_prime = config.cfg.get_double("validate.beta_prime", 1.5);
        const int replications = config.cfg.get_int("validate.replications", 400);
        RunConfig preset{load_preset("two-atom")};
        const SystemSpec spec = preset.system();
        const Policy policy = preset.policy();
        const NoiseRecord record =
            draw_noise_record(spec, mix_stream(seed, stream_domain::probe));
        const PlannerResult pilot = run_pf_planner(spec, policy, 256, seed, record);
        const auto report = concentration_experiment(
            spec, pilot.trajectory.observations, pilot.trajectory.actions, 500, beta, beta_prime,
            replications, mix_stream(seed, 6), config.jobs());
        r.pass = report.pass;
        std::ostringstream detail;
        detail << "threshold " << format_double(report.threshold) << ", " << report.cells.size()
               << " (t,s) cells";
        r.detail = detail.str();
    });

    check("atomic-density", [&](PropertyResult& r) {
        RunConfig preset{load_preset("appendix-c")};
        const NoiseDistribution mu = preset.noise("transition_noise");
        double total = 0.0;
        for (std::size_t k = 0; k < mu.atom_count(); ++k) total += mu.density(mu.atom_point(k));
        if (std::abs(total - 1.0) > 1e-12) {
            r.pass = false;
            r.detail = "atom masses sum to " + format_double(total);
            return;
        }
        const Vec off = Vec::Constant(1, 0.5);
        if (mu.density(off) != 0.0 || mu.log_density(off) != kNegInf) {
            r.pass = false;
            r.detail = "off-support query returned nonzero mass";
        }
    });

    check("lowerbound-exact-weights", [&](PropertyResult& r) {
        const LowerBoundInstance inst = build_lowerbound_process(8);
        const Policy policy = Policy::linear(Mat::Zero(1, 1), 1.0);
        const PlannerResult run =
            run_pf_planner(inst.spec, policy, 64, mix_stream(seed, 7), inst.conditioned_noise);
        const int steps = run.death_time ? *run.death_time : inst.horizon;
        for (int i = 0; i < run.ensemble.count(); ++i) {
            const double w = run.ensemble.log_weight(i);
            if (w != 0.0 && w != kNegInf) {
                r.pass = false;
                r.detail = "weight drifted off the lattice: " + format_double(w);
                return;
            }
            if (w == 0.0) {
                for (int s = 0; s < steps; ++s)
                    if (run.ensemble.noise_at(s)(0, i) != 1.0) {
                        r.pass = false;
                        r.detail = "surviving particle drew a -1";
                        return;
                    }
            }
        }
        const auto gammas = likelihood_gamma(inst.spec, inst.conditioned_observations,
                                             std::vector<Vec>(static_cast<std::size_t>(inst.horizon),
                                                              Vec::Zero(1)));
        for (int t = 1; t <= inst.horizon; ++t)
            if (gammas[static_cast<std::size_t>(t) - 1] != std::ldexp(1.0, -t)) {
                r.pass = false;
                r.detail = "gamma_t != 2^-t at t=" + std::to_string(t);
                return;
            }
        r.detail = "weights on {0, 1}, gamma_t = 2^-t exactly";
    });

    return results;
}

inline CommandResult cmd_validate(const RunConfig& config) {
    const auto results = run_validation_suite(config);
    CommandResult out;
    std::ostringstream summary;
    bool all_pass = true;
    for (const auto& r : results) {
        summary << (r.pass ? "PASS" : "FAIL") << "  " << r.name;
        if (!r.detail.empty()) summary << "  (" << r.detail << ")";
        summary << "\n";
        all_pass = all_pass && r.pass;
    }
    out.summary = summary.str();
    out.exit_code = all_pass ? 0 : 1;
    return out;
}

}  // namespace pfplan
