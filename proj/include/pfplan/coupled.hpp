#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "pfplan/model.hpp"
#include "pfplan/oracle.hpp"
#include "pfplan/parallel.hpp"
#include "pfplan/pf.hpp"

namespace pfplan {

// The approximate (particle-filtering) and ideal (exact-inference) closed
// loops driven by one shared noise realization. The two trajectories share
// xi and zeta but see different observations once their states diverge;
// everything that differs between them is attributable to inference error.
struct CoupledRun {
    NoiseRecord noise;
    Trajectory approx;  // x_t, u_hat_t, o_t (partial if the run died)
    Trajectory ideal;   // x*_t, u*_t, o*_t
    std::vector<Vec> y_hat;
    std::vector<Vec> y_tilde;
    std::vector<std::vector<Vec>> xi_hat;    // per t: particle noise estimators
    std::vector<std::vector<Vec>> xi_tilde;  // per t: exact noise posteriors (enumeration only)
    std::optional<double> reward_approx;
    double reward_ideal = 0.0;
    std::optional<double> reward_gap;
    std::optional<int> death_time;
};

namespace detail {

// State-divergence identity: x_t - x*_t must equal the action-difference
// response sum_{s<t} (prod_{s'>s} A_{s'}) B_s (u_hat_s - u*_s). Rounding is
// the only admissible deviation, so a violation means a broken coupling.
inline void check_divergence_attribution(const SystemSpec& spec, const Trajectory& approx,
                                         const Trajectory& ideal) {
    const auto steps = std::min(approx.actions.size(), ideal.actions.size());
    Vec rhs(spec.state_dim);
    for (std::size_t t = 1; t <= steps; ++t) {
        rhs.setZero();
        Mat coeff = Mat::Identity(spec.state_dim, spec.state_dim);
        for (int s = static_cast<int>(t) - 1; s >= 0; --s) {
            const auto su = static_cast<std::size_t>(s);
            rhs.noalias() += coeff * (spec.B(s) * (approx.actions[su] - ideal.actions[su]));
            coeff = (coeff * spec.A(s)).eval();
        }
        const Vec lhs = approx.states[t] - ideal.states[t];
        const double scale =
            std::max({1.0, approx.states[t].norm(), ideal.states[t].norm(), rhs.norm()});
        if ((lhs - rhs).norm() > 1e-9 * scale)
            throw Error("coupled run: state divergence does not match the action differences");
    }
}

}  // namespace detail

// Draws one shared noise record, runs both closed loops against it, and
// measures the reward gap. Particle noise inside the filter stays fresh and
// independent of the shared record. A dead particle-filter run yields a
// partial approximate trajectory with death_time set and the gap missing.
inline CoupledRun run_coupled(const SystemSpec& spec, const Policy& policy,
                              const RewardFunction& reward, int particle_count,
                              const OracleKind& oracle, std::uint64_t seed) {
    require_valid(spec);
    std::string why;
    if (!oracle_applicable(spec, oracle, &why)) throw Error("oracle not applicable: " + why);

    CoupledRun run;
    run.noise = draw_noise_record(spec, mix_stream(seed, stream_domain::shared_noise));

    PlannerResult pf = run_pf_planner(spec, policy, particle_count,
                                      mix_stream(seed, stream_domain::planner), run.noise);
    run.approx = std::move(pf.trajectory);
    run.y_hat = std::move(pf.estimates);
    run.xi_hat = std::move(pf.noise_estimates);
    run.death_time = pf.death_time;

    // Ideal loop; the oracle estimate is recomputed from scratch each step.
    Trajectory& ideal = run.ideal;
    ideal.states.push_back(spec.x0);
    std::vector<Vec> obs_star;
    std::vector<Vec> act_star;
    Vec x_next(spec.state_dim);
    const std::uint64_t oracle_seed = mix_stream(seed, stream_domain::probe);
    for (int t = 0; t < spec.horizon; ++t) {
        Vec y_tilde;
        if (oracle.type == OracleType::enumeration) {
            const auto post = enumerate_posterior_mean(spec, obs_star, act_star, oracle.max_paths);
            y_tilde = post.posterior_mean;
            run.xi_tilde.push_back(post.noise_means);
        } else {
            y_tilde = oracle_estimate(spec, oracle, obs_star, act_star, oracle_seed);
        }
        run.y_tilde.push_back(y_tilde);
        const Vec action = policy.act(y_tilde);
        const auto ts = static_cast<std::size_t>(t);
        step_state_into(spec, t, ideal.states.back(), action, run.noise.xi[ts], x_next);
        const Vec obs = observe(spec, t + 1, x_next, run.noise.zeta[ts]);
        ideal.states.push_back(x_next);
        ideal.actions.push_back(action);
        ideal.observations.push_back(obs);
        ideal.transition_noises.push_back(run.noise.xi[ts]);
        ideal.observation_noises.push_back(run.noise.zeta[ts]);
        obs_star.push_back(obs);
        act_star.push_back(action);
    }

    run.reward_ideal = trajectory_reward(reward, run.ideal);
    if (!run.death_time) {
        run.reward_approx = trajectory_reward(reward, run.approx);
        run.reward_gap = std::abs(*run.reward_approx - run.reward_ideal);
    }
    detail::check_divergence_attribution(spec, run.approx, run.ideal);
    return run;
}

struct SweepCell {
    int run_id = 0;
    int particle_count = 0;
    int seed_index = 0;
    int horizon = 0;
    std::optional<double> reward_gap;
    std::optional<double> reward_approx;
    std::optional<double> reward_ideal;
    std::optional<int> died_at;
    std::optional<std::string> error;
    double wall_time_ms = 0.0;
};

// Full factorial (N, seed) sweep with one independent shared-noise draw per
// seed cell. Cell seeds derive from (master, N index, seed index), so the
// table is reproducible cell by cell and identical for any job count.
// Failed cells are recorded, not thrown.
inline std::vector<SweepCell> gap_sweep(const SystemSpec& spec, const Policy& policy,
                                        const RewardFunction& reward,
                                        const std::vector<int>& particle_counts, int seed_count,
                                        const OracleKind& oracle, std::uint64_t master_seed,
                                        int jobs = 1) {
    const std::size_t total = particle_counts.size() * static_cast<std::size_t>(seed_count);
    std::vector<SweepCell> cells(total);
    parallel_for(jobs, total, [&](std::size_t idx) {
        const std::size_t n_index = idx / static_cast<std::size_t>(seed_count);
        const std::size_t seed_index = idx % static_cast<std::size_t>(seed_count);
        SweepCell& cell = cells[idx];
        cell.run_id = static_cast<int>(idx);
        cell.particle_count = particle_counts[n_index];
        cell.seed_index = static_cast<int>(seed_index);
        cell.horizon = spec.horizon;
        const std::uint64_t cell_seed = derive_cell_seed(master_seed, n_index, seed_index);
        const auto start = std::chrono::steady_clock::now();
        try {
            CoupledRun run =
                run_coupled(spec, policy, reward, cell.particle_count, oracle, cell_seed);
            cell.reward_gap = run.reward_gap;
            cell.reward_approx = run.reward_approx;
            cell.reward_ideal = run.reward_ideal;
            cell.died_at = run.death_time;
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        cell.wall_time_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
    });
    return cells;
}

}  // namespace pfplan
