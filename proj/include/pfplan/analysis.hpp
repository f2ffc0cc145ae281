#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pfplan/coupled.hpp"
#include "pfplan/model.hpp"
#include "pfplan/oracle.hpp"
#include "pfplan/parallel.hpp"
#include "pfplan/pf.hpp"

namespace pfplan {

enum class PolicyClass { lipschitz, linear };

// Constants of the growth/stability assumptions plus the bound knobs.
struct BoundParams {
    double lr = 1.0;       // reward Lipschitz constant
    double lg = 1.0;       // policy Lipschitz constant / gain norm
    double c_a = 1.0;      // |prod A| <= c_a * rho_a^(window)
    double rho_a = 1.0;
    double c_b = 1.0;      // |B_t| <= c_b
    double c_ab = 1.0;     // |prod (A + B G)| <= c_ab * rho_ab^(window)
    double rho_ab = 1.0;
    double c_bg = 1.0;     // |B_t G| <= c_bg
    double subgaussian_m = 1.0;
    int state_dim = 1;
    int horizon = 1;
    double eps = 0.1;      // target reward accuracy, in (0, 1/2)
    double delta = 0.05;   // failure probability
    double p = 1.0;        // lower bound on the record likelihood gamma_t
};

inline void validate_params(const BoundParams& b) {
    if (b.horizon < 1) throw Error("bound params: horizon must be >= 1");
    auto pos = [](double v, const char* name) {
        if (!(v > 0.0)) throw Error(std::string("bound params: ") + name + " must be positive");
    };
    pos(b.lr, "L_r");
    pos(b.lg, "L_g");
    pos(b.c_a, "C_a");
    pos(b.rho_a, "rho_a");
    pos(b.c_b, "C_b");
    pos(b.c_ab, "C_ab");
    pos(b.rho_ab, "rho_ab");
    pos(b.c_bg, "C_bg");
    pos(b.subgaussian_m, "m");
    if (b.state_dim < 1) throw Error("bound params: state_dim must be >= 1");
    if (!(b.eps > 0.0 && b.eps < 0.5)) throw Error("bound params: eps must lie in (0, 1/2)");
    if (!(b.delta > 0.0 && b.delta < 1.0)) throw Error("bound params: delta must lie in (0, 1)");
    if (!(b.p > 0.0 && b.p <= 1.0)) throw Error("bound params: p must lie in (0, 1]");
}

namespace detail {

inline double power_sum(double base, int terms) {  // sum_{s=0}^{terms-1} base^s
    double sum = 0.0, pw = 1.0;
    for (int s = 0; s < terms; ++s) {
        sum += pw;
        pw *= base;
    }
    return sum;
}

}  // namespace detail

// Sigma_a^{(t)} = 1 + C_a sum_{s=0}^{t-2} rho_a^s; empty sum for t <= 1.
inline double sigma_a(const BoundParams& b, int t) {
    return 1.0 + b.c_a * detail::power_sum(b.rho_a, t - 1);
}

// Sigma_ab^{(t-1)} = sum_{s=0}^{t-2} (C_a + C_b L_g)^s; zero for t <= 1.
inline double sigma_ab(const BoundParams& b, int t) {
    return detail::power_sum(b.c_a + b.c_b * b.lg, t - 1);
}

// Sigma-bar_ab^{(t-1)} = 1 + C_ab sum_{s=0}^{t-3} rho_ab^s; equals 1 for t <= 2.
inline double sigma_ab_bar(const BoundParams& b, int t) {
    return 1.0 + b.c_ab * detail::power_sum(b.rho_ab, t - 2);
}

// Delta_T assembled from its aggregates: L_r L_g S_a (1 + C_b S_a) times the
// policy-class factor.
inline double delta_t_lipschitz(double lr, double lg, double c_b, double s_a, double s_ab) {
    return lr * lg * s_a * (1.0 + c_b * s_a) * (1.0 + lg * c_b * s_ab);
}

inline double delta_t_linear(double lr, double lg, double c_b, double c_bg, double s_a,
                             double s_ab_bar) {
    return lr * lg * s_a * (1.0 + c_b * s_a) * (1.0 + c_bg * s_ab_bar);
}

// M = sqrt((d/m)(1 + 2 sqrt(log b'/d) + 2 log b'/d)); the high-probability
// envelope of a centered sub-Gaussian noise norm. Requires beta_prime > 1.
inline double concentration_radius(int state_dim, double m, double beta_prime) {
    if (!(beta_prime > 1.0)) throw Error("beta_prime must exceed 1");
    const double d = static_cast<double>(state_dim);
    const double l = std::log(beta_prime) / d;
    return std::sqrt(d / m * (1.0 + 2.0 * std::sqrt(l) + 2.0 * l));
}

// Failure probability of the one-step noise-estimator concentration event:
// (d+1) exp(-N beta^2 gamma_t / 3) + N exp(-beta_prime).
inline double concentration_failure_bound(int state_dim, int particle_count, double beta,
                                          double gamma_t, double beta_prime) {
    return (state_dim + 1) * std::exp(-particle_count * beta * beta * gamma_t / 3.0) +
           particle_count * std::exp(-beta_prime);
}

struct BoundReport {
    PolicyClass policy_class = PolicyClass::lipschitz;
    double sigma_a = 0.0;
    double sigma_ab = 0.0;
    double sigma_ab_bar = 0.0;
    double delta_T = 0.0;
    // T^2 delta_T^2 d m^-1 eps^-2 p^-1: the expression inside the
    // soft-O. The hidden log factor is reported separately below and is
    // never folded into n_expression.
    double n_expression = 0.0;
    double log_factor = 0.0;  // log(d T / delta)
    double stable_system_n = 0.0;  // particle expression simplified for stable systems
    // Concentration-side prescriptions from the proof of the main bound.
    double beta_prime = 0.0;  // log(2 T^2 N / delta)
    double big_m = 0.0;       // M evaluated at that beta_prime
    double beta = 0.0;        // eps / (4 M T)
};

inline BoundReport bound_calculator(const BoundParams& b, PolicyClass policy_class) {
    validate_params(b);
    BoundReport r;
    r.policy_class = policy_class;
    const int T = b.horizon;
    const double d = static_cast<double>(b.state_dim);
    r.sigma_a = sigma_a(b, T);
    r.sigma_ab = sigma_ab(b, T);
    r.sigma_ab_bar = sigma_ab_bar(b, T);
    r.delta_T = policy_class == PolicyClass::lipschitz
                    ? delta_t_lipschitz(b.lr, b.lg, b.c_b, r.sigma_a, r.sigma_ab)
                    : delta_t_linear(b.lr, b.lg, b.c_b, b.c_bg, r.sigma_a, r.sigma_ab_bar);
    const double tt = static_cast<double>(T) * static_cast<double>(T);
    r.n_expression = tt * r.delta_T * r.delta_T * d / (b.subgaussian_m * b.eps * b.eps * b.p);
    r.log_factor = std::log(d * static_cast<double>(T) / b.delta);
    if (policy_class == PolicyClass::lipschitz) {
        const double t6 = tt * tt * tt;
        r.stable_system_n = t6 * d / b.subgaussian_m * b.lr * b.lr * b.lg * b.lg *
                        (1.0 + b.c_b * b.c_b * tt) / (b.eps * b.eps * b.p);
    } else {
        r.stable_system_n = tt * d / b.subgaussian_m * b.lr * b.lr * b.lg * b.lg /
                        (b.eps * b.eps * b.p) * (1.0 + b.c_a * b.c_a * tt) *
                        (1.0 + b.c_b * b.c_b + b.c_b * b.c_b * b.c_a * b.c_a * tt) *
                        (1.0 + b.c_bg * b.c_bg + b.c_bg * b.c_bg * b.c_ab * b.c_ab);
    }
    r.beta_prime = std::max(std::log(2.0 * tt * r.n_expression / b.delta), 1.0 + 1e-9);
    r.big_m = concentration_radius(b.state_dim, b.subgaussian_m, r.beta_prime);
    r.beta = b.eps / (4.0 * r.big_m * static_cast<double>(T));
    return r;
}

// Growth constants realized by a concrete system/policy pair, via products
// of per-step operator norms. Exact for scalar systems; conservative
// otherwise. Bound knobs (eps, delta, p, L_r) keep their defaults.
inline BoundParams growth_constants_from(const SystemSpec& spec, const Policy& policy) {
    BoundParams b;
    b.state_dim = spec.state_dim;
    b.horizon = spec.horizon;
    b.lg = policy.lipschitz_constant();
    double norm_a = 0.0, norm_b = 0.0, norm_ab = 0.0, norm_bg = 0.0;
    for (int t = 0; t < spec.horizon; ++t) {
        norm_a = std::max(norm_a, Policy::operator_norm(spec.A(t)));
        norm_b = std::max(norm_b, Policy::operator_norm(spec.B(t)));
        if (policy.is_linear()) {
            norm_ab = std::max(norm_ab, Policy::operator_norm(spec.A(t) + spec.B(t) * policy.gain()));
            norm_bg = std::max(norm_bg, Policy::operator_norm(spec.B(t) * policy.gain()));
        }
    }
    constexpr double floor = 1e-12;  // the assumptions require strictly positive constants
    b.c_a = b.rho_a = std::max(norm_a, floor);
    b.c_b = std::max(norm_b, floor);
    if (policy.is_linear()) {
        b.c_ab = b.rho_ab = std::max(norm_ab, floor);
        b.c_bg = std::max(norm_bg, floor);
    } else {
        b.c_ab = b.rho_ab = std::max(b.c_a + b.c_b * b.lg, floor);
        b.c_bg = std::max(b.c_b * b.lg, floor);
    }
    std::optional<double> m;
    for (const auto& noise : spec.transition_noise_seq)
        if (auto nm = noise.subgaussian_m()) m = m ? std::min(*m, *nm) : *nm;
    if (m) b.subgaussian_m = *m;
    return b;
}

inline std::vector<Vec> ensemble_noise_estimators(const ParticleEnsemble& ens) {
    return ens.noise_estimators();
}

struct ConcentrationCell {
    int t = 0;
    int s = 0;
    double exceed_freq = 0.0;
    double bound = 1.0;
    bool vacuous = true;
    bool pass = true;
};

struct ConcentrationReport {
    double beta = 0.0;
    double beta_prime = 0.0;
    double big_m = 0.0;
    double threshold = 0.0;  // 4 beta M
    int particle_count = 0;
    int replications = 0;
    int deaths = 0;
    std::vector<double> gamma;  // gamma_t, t = 1..T'
    std::vector<ConcentrationCell> cells;
    bool pass = true;
};

// Empirical check of the one-step concentration claim on a fixed
// (observation, action) record: over fresh ensembles, how often does
// |xi_hat_{t,s} - xi_tilde_{t,s}| exceed 4 beta M, versus the theoretical
// failure bound? Exact xi_tilde come from enumeration. Replications run in
// parallel; exceedance counters are plain sums, so the report is identical
// for any job count.
inline ConcentrationReport concentration_experiment(const SystemSpec& spec,
                                                    const std::vector<Vec>& observations,
                                                    const std::vector<Vec>& actions,
                                                    int particle_count, double beta,
                                                    double beta_prime, int replications,
                                                    std::uint64_t seed, int jobs = 1) {
    if (!(beta > 0.0 && beta <= 0.5)) throw Error("concentration check requires beta in (0, 1/2]");
    if (!(beta_prime > 1.0)) throw Error("concentration check requires beta_prime > 1");
    if (replications < 1) throw Error("concentration check requires replications >= 1");
    const int horizon = static_cast<int>(observations.size());
    if (static_cast<int>(actions.size()) != horizon)
        throw Error("concentration check: need one action per observation");

    std::optional<double> m;
    for (int t = 0; t < horizon; ++t) {
        const auto nm = spec.mu(t).subgaussian_m();
        if (!nm) throw Error("concentration check: transition noise lacks a declared sub-Gaussian m");
        m = m ? std::min(*m, *nm) : *nm;
    }

    ConcentrationReport report;
    report.beta = beta;
    report.beta_prime = beta_prime;
    report.big_m = concentration_radius(spec.state_dim, *m, beta_prime);
    report.threshold = 4.0 * beta * report.big_m;
    report.particle_count = particle_count;
    report.replications = replications;

    // Exact posterior noise means per prefix.
    std::vector<std::vector<Vec>> xi_tilde(static_cast<std::size_t>(horizon));
    for (int t = 1; t <= horizon; ++t) {
        const std::vector<Vec> obs_prefix(observations.begin(), observations.begin() + t);
        const std::vector<Vec> act_prefix(actions.begin(), actions.begin() + t);
        const auto post = enumerate_posterior_mean(spec, obs_prefix, act_prefix);
        xi_tilde[static_cast<std::size_t>(t) - 1] = post.noise_means;
        report.gamma.push_back(post.gamma);
    }

    const std::size_t pair_count =
        static_cast<std::size_t>(horizon) * static_cast<std::size_t>(horizon + 1) / 2;
    std::vector<std::atomic<int>> exceed(pair_count);
    for (auto& c : exceed) c.store(0);
    std::atomic<int> deaths{0};
    auto pair_index = [horizon](int t, int s) {
        return static_cast<std::size_t>((t - 1) * t / 2 + s);
    };

    parallel_for(jobs, static_cast<std::size_t>(replications), [&](std::size_t rep) {
        auto ens = ParticleEnsemble::init(
            spec, particle_count,
            mix_stream(mix_stream(seed, stream_domain::replication), rep), /*retain_history=*/true);
        bool dead = false;
        for (int t = 0; t < horizon; ++t) {
            const auto ts = static_cast<std::size_t>(t);
            if (!dead) {
                ens.step(spec, actions[ts], observations[ts]);
                dead = !ens.alive();
                if (dead) deaths.fetch_add(1);
            }
            if (dead) {  // count as exceedance for all remaining pairs
                for (int s = 0; s <= t; ++s) exceed[pair_index(t + 1, s)].fetch_add(1);
                continue;
            }
            const auto hats = ens.noise_estimators();
            const auto& tildes = xi_tilde[ts];
            for (int s = 0; s <= t; ++s) {
                const auto su = static_cast<std::size_t>(s);
                if ((hats[su] - tildes[su]).norm() > report.threshold)
                    exceed[pair_index(t + 1, s)].fetch_add(1);
            }
        }
    });
    report.deaths = deaths.load();

    for (int t = 1; t <= horizon; ++t) {
        for (int s = 0; s < t; ++s) {
            ConcentrationCell cell;
            cell.t = t;
            cell.s = s;
            cell.exceed_freq = static_cast<double>(exceed[pair_index(t, s)].load()) /
                               static_cast<double>(replications);
            cell.bound = concentration_failure_bound(spec.state_dim, particle_count, beta,
                                                     report.gamma[static_cast<std::size_t>(t) - 1],
                                                     beta_prime);
            cell.vacuous = cell.bound >= 1.0;
            const double slack =
                3.0 * std::sqrt(std::max(cell.bound * (1.0 - cell.bound), 0.0) /
                                static_cast<double>(replications));
            cell.pass = cell.vacuous || cell.exceed_freq <= cell.bound + slack;
            report.pass = report.pass && cell.pass;
            report.cells.push_back(cell);
        }
    }
    return report;
}

struct ActionGapReport {
    std::vector<double> measured;  // |u_hat_t - u*_t|
    std::vector<double> envelope;  // theoretical bound per t, scaled by eps_hat
    double eps_hat = 0.0;          // max_(t,s) |xi_hat_{t,s} - xi_tilde_{t,s}|
    bool dominated = true;
};

// Measures the realized action gaps of a coupled run against the
// error-accumulation envelopes, with eps_hat taken from the run itself.
// Requires an enumeration-backed run (exact xi_tilde) that did not die.
inline ActionGapReport action_gap_measure(const CoupledRun& run, const BoundParams& params,
                                          PolicyClass policy_class) {
    validate_params(params);
    if (run.death_time) throw Error("action gap measure: run died");
    if (run.xi_tilde.empty()) throw Error("action gap measure: run lacks exact noise posteriors");
    if (run.xi_hat.empty()) throw Error("action gap measure: run lacks particle noise history");
    ActionGapReport report;
    const std::size_t steps = std::min(run.approx.actions.size(), run.ideal.actions.size());
    for (std::size_t t = 1; t < std::min(run.xi_hat.size(), run.xi_tilde.size()); ++t)
        for (std::size_t s = 0; s < t; ++s)
            report.eps_hat = std::max(report.eps_hat,
                                      (run.xi_hat[t][s] - run.xi_tilde[t][s]).norm());
    for (std::size_t t = 0; t < steps; ++t) {
        report.measured.push_back((run.approx.actions[t] - run.ideal.actions[t]).norm());
        double env = 0.0;
        if (t >= 1) {
            const int ti = static_cast<int>(t);
            const double sa = sigma_a(params, ti);
            env = policy_class == PolicyClass::lipschitz
                      ? params.lg * sa * (1.0 + params.lg * params.c_b * sigma_ab(params, ti))
                      : params.lg * sa * (1.0 + params.c_bg * sigma_ab_bar(params, ti));
            env *= report.eps_hat;
        }
        report.envelope.push_back(env);
        if (report.measured[t] > env * (1.0 + 1e-9) + 1e-12) report.dominated = false;
    }
    return report;
}

}  // namespace pfplan
