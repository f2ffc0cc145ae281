#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <vector>

#include "pfplan/model.hpp"
#include "pfplan/parallel.hpp"
#include "pfplan/pf.hpp"

namespace pfplan {

// The hard instance for particle survival: d = 1, x0 = 0, A = 1, B = 0,
// transition noise a fair coin on {-1, +1}, observation o_t = x_t exactly
// (Dirac observation noise). Conditioned on the record o_t = t, a particle
// keeps nonzero weight iff every one of its draws came up +1, which happens
// with probability p = 2^-T. All arithmetic stays on the integer lattice, so
// weights are exactly 0 or 1.
struct LowerBoundInstance {
    int horizon = 0;
    SystemSpec spec;
    std::vector<Vec> conditioned_observations;  // o_t = t, t = 1..T
    NoiseRecord conditioned_noise;              // xi_t = +1, zeta_t = 0
    double p = 0.0;                             // 2^-T, exact (a power of two)
};

inline LowerBoundInstance build_lowerbound_process(int horizon) {
    if (horizon < 1) throw Error("lower-bound instance requires T >= 1");
    LowerBoundInstance inst;
    inst.horizon = horizon;
    const auto one = [](double v) { return Vec::Constant(1, v); };
    const NoiseDistribution coin = NoiseDistribution::finite_support(
        {one(1.0), one(-1.0)}, {0.5, 0.5}, /*lattice_scale=*/1.0, /*subgaussian_m=*/1.0);
    const NoiseDistribution exact_obs = NoiseDistribution::dirac(one(0.0));
    inst.spec = SystemSpec::time_invariant(Mat::Identity(1, 1), Mat::Zero(1, 1),
                                           Mat::Identity(1, 1), coin, exact_obs, one(0.0),
                                           horizon);
    for (int t = 1; t <= horizon; ++t)
        inst.conditioned_observations.push_back(one(static_cast<double>(t)));
    inst.conditioned_noise.xi.assign(static_cast<std::size_t>(horizon), one(1.0));
    inst.conditioned_noise.zeta.assign(static_cast<std::size_t>(horizon), one(0.0));
    inst.p = std::ldexp(1.0, -horizon);
    return inst;
}

// P[at least one of N particles draws +1 at every step] = 1 - (1 - p)^N.
inline double survival_probability_exact_p(double p, long long particle_count) {
    if (!(p >= 0.0 && p <= 1.0)) throw Error("survival probability requires p in [0, 1]");
    if (particle_count < 0) throw Error("survival probability requires N >= 0");
    return 1.0 - std::pow(1.0 - p, static_cast<double>(particle_count));
}

inline double survival_probability_exact(int horizon, long long particle_count) {
    if (horizon < 1) throw Error("survival probability requires T >= 1");
    return survival_probability_exact_p(std::ldexp(1.0, -horizon), particle_count);
}

struct DeathExperimentReport {
    int horizon = 0;
    int particle_count = 0;
    int replications = 0;
    double empirical_survival = 0.0;
    double exact_survival = 0.0;
    double k = 2.0;
    double union_bound = 0.5;     // 1/k
    bool bound_applicable = false;  // N <= 1/(2 k p)
    bool within_3sigma = false;
    bool bound_holds = true;  // empirical <= 1/k whenever applicable
};

// Runs the full planner on the conditioned record and counts how often any
// particle is still alive at T. The environment path is forced (not
// rejection-sampled): the conditioning event itself has probability 2^-T.
inline DeathExperimentReport run_death_experiment(int horizon, int particle_count,
                                                  int replications, std::uint64_t seed,
                                                  double k = 2.0, int jobs = 1) {
    if (replications < 1) throw Error("death experiment requires replications >= 1");
    if (particle_count < 1) throw Error("death experiment requires N >= 1");
    if (!(k > 1.0)) throw Error("death experiment requires k > 1");
    const LowerBoundInstance inst = build_lowerbound_process(horizon);
    const Policy policy = Policy::linear(Mat::Zero(1, 1), 1.0);

    std::atomic<long long> survived{0};
    parallel_for(jobs, static_cast<std::size_t>(replications), [&](std::size_t rep) {
        const std::uint64_t rep_seed =
            mix_stream(mix_stream(seed, stream_domain::replication), rep);
        const PlannerResult result =
            run_pf_planner(inst.spec, policy, particle_count, rep_seed, inst.conditioned_noise);
        if (!result.death_time && result.ensemble.alive()) survived.fetch_add(1);
    });

    DeathExperimentReport report;
    report.horizon = horizon;
    report.particle_count = particle_count;
    report.replications = replications;
    report.empirical_survival =
        static_cast<double>(survived.load()) / static_cast<double>(replications);
    report.exact_survival = survival_probability_exact(horizon, particle_count);
    report.k = k;
    report.union_bound = 1.0 / k;
    report.bound_applicable =
        static_cast<double>(particle_count) <= 1.0 / (2.0 * k * inst.p);
    const double q = report.exact_survival;
    const double sigma = std::sqrt(q * (1.0 - q) / static_cast<double>(replications));
    report.within_3sigma = std::abs(report.empirical_survival - q) <= 3.0 * sigma;
    report.bound_holds = !report.bound_applicable || report.empirical_survival <= report.union_bound;
    return report;
}

}  // namespace pfplan
