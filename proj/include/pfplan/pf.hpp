#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "pfplan/model.hpp"
#include "pfplan/numerics.hpp"

namespace pfplan {

// Weighted particle ensemble with log-space weights and no resampling.
// Particle i at time t draws its noise from the stream (seed, particle, i, t),
// so propagation is reproducible under any parallel schedule. Weights carry a
// separate common log-scale: rescaling all weights adjusts only that scalar,
// which makes the normalized estimate invariant to weight scaling by
// construction (the estimator never reads the scale).
class ParticleEnsemble {
  public:
    static constexpr std::int64_t kHistoryBudget = 10'000'000;  // d*N*T entries

    static ParticleEnsemble init(const SystemSpec& spec, int count, std::uint64_t seed) {
        const std::int64_t entries = static_cast<std::int64_t>(spec.state_dim) * count *
                                     static_cast<std::int64_t>(spec.horizon);
        return init(spec, count, seed, entries <= kHistoryBudget);
    }

    static ParticleEnsemble init(const SystemSpec& spec, int count, std::uint64_t seed,
                                 bool retain_history) {
        if (count < 1) throw Error("particle count must be at least 1");
        ParticleEnsemble e;
        e.seed_ = seed;
        e.t_ = 0;
        e.states_ = spec.x0.replicate(1, count);
        e.log_weights_.assign(static_cast<std::size_t>(count), 0.0);
        e.history_on_ = retain_history;
        return e;
    }

    int count() const noexcept { return static_cast<int>(states_.cols()); }
    int time() const noexcept { return t_; }
    const Mat& states() const noexcept { return states_; }
    bool history_enabled() const noexcept { return history_on_; }
    const Mat& noise_at(int s) const { return history_.at(static_cast<std::size_t>(s)); }

    // Total log-weight of particle i, common scale included.
    double log_weight(int i) const {
        return log_weights_.at(static_cast<std::size_t>(i)) + log_scale_;
    }

    void rescale_log_weights(double log_factor) noexcept { log_scale_ += log_factor; }

    bool alive() const noexcept {
        for (double w : log_weights_)
            if (w > kNegInf) return true;
        return false;
    }

    // Normalized weights relative to the max log-weight; zero for dead
    // particles. Throws once every particle is dead.
    std::vector<double> normalized_weights() const {
        double m = kNegInf;
        for (double w : log_weights_) m = std::max(m, w);
        if (m == kNegInf) throw ParticleDeathError(t_);
        std::vector<double> w(log_weights_.size());
        for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights_[i] - m);
        return w;
    }

    // Weighted state estimate sum_i w_i x_i / sum_i w_i, computed as an
    // anchored compensated sum in ascending particle order: exact when all
    // particles coincide and bit-stable across runs.
    Vec estimate_state() const { return weighted_mean(states_); }

    // Noise estimators: the same weighted average applied to the retained
    // per-particle noise draws, one vector per s = 0..t-1.
    std::vector<Vec> noise_estimators() const {
        if (!history_on_) throw Error("noise history retention is disabled");
        std::vector<Vec> out;
        out.reserve(history_.size());
        for (const auto& h : history_) out.push_back(weighted_mean(h));
        return out;
    }

    // log((1/N) sum_i w_i): the ensemble estimate of the record likelihood.
    double log_marginal_estimate() const {
        double m = kNegInf;
        for (double w : log_weights_) m = std::max(m, w);
        if (m == kNegInf) return kNegInf;
        CompensatedSum s;
        for (double w : log_weights_) s.add(std::exp(w - m));
        return log_scale_ + m + std::log(s.value()) - std::log(static_cast<double>(count()));
    }

    // One filter step: fresh transition noise per particle, propagate with
    // the shared action, then multiply each weight by the likelihood of the
    // next observation.
    void step(const SystemSpec& spec, const Eigen::Ref<const Vec>& action,
              const Eigen::Ref<const Vec>& next_obs) {
        if (t_ >= spec.horizon) throw IndexError("pf step past the horizon");
        if (action.size() != spec.action_dim)
            throw DimensionError("pf step: action dimension mismatch");
        if (next_obs.size() != spec.obs_dim)
            throw DimensionError("pf step: observation dimension mismatch");
        const int n = count();
        const NoiseDistribution& mu = spec.mu(t_);
        const NoiseDistribution& eta = spec.eta(t_ + 1);
        const Mat& C = spec.C(t_ + 1);
        Mat drawn;
        if (history_on_) drawn.resize(spec.state_dim, n);
        Vec xi(spec.state_dim);
        Vec x_next(spec.state_dim);
        Vec resid(spec.obs_dim);
        const std::uint64_t stream_t = static_cast<std::uint64_t>(t_);
        for (int i = 0; i < n; ++i) {
            RngStream rng(seed_, mix_stream(mix_stream(stream_domain::particle,
                                                       static_cast<std::uint64_t>(i)),
                                            stream_t));
            xi = mu.sample(rng);
            step_state_into(spec, t_, states_.col(i), action, xi, x_next);
            states_.col(i) = x_next;
            resid = next_obs;
            resid.noalias() -= C * x_next;
            log_weights_[static_cast<std::size_t>(i)] += eta.log_density(resid);
            if (history_on_) drawn.col(i) = xi;
        }
        if (history_on_) history_.push_back(std::move(drawn));
        ++t_;
    }

  private:
    Vec weighted_mean(const Mat& values) const {
        const std::vector<double> w = normalized_weights();
        const Eigen::Index dim = values.rows();
        Vec anchor = values.col(0);
        CompensatedSum den;
        std::vector<CompensatedSum> num(static_cast<std::size_t>(dim));
        for (int i = 0; i < count(); ++i) {
            const double wi = w[static_cast<std::size_t>(i)];
            den.add(wi);
            for (Eigen::Index j = 0; j < dim; ++j)
                num[static_cast<std::size_t>(j)].add(wi * (values(j, i) - anchor[j]));
        }
        Vec out(dim);
        const double d = den.value();
        for (Eigen::Index j = 0; j < dim; ++j)
            out[j] = anchor[j] + num[static_cast<std::size_t>(j)].value() / d;
        return out;
    }

    std::uint64_t seed_ = 0;
    int t_ = 0;
    Mat states_;                      // d x N
    std::vector<double> log_weights_;  // relative to log_scale_
    double log_scale_ = 0.0;
    bool history_on_ = true;
    std::vector<Mat> history_;  // history_[s].col(i) = xi_s^(i)
};

struct PlannerResult {
    Trajectory trajectory;                          // partial if the run died
    std::vector<Vec> estimates;                     // y_hat_t, t = 0..last
    std::vector<std::vector<Vec>> noise_estimates;  // per t: xi_hat_{t,s}, s < t
    ParticleEnsemble ensemble;                      // final ensemble
    std::optional<int> death_time;
};

// The full closed loop: estimate, act, let the environment consume the
// recorded true noise, observe, reweight. Particle noise is drawn fresh and
// independently of the record. On particle death the run halts with the
// death time recorded; no fallback estimate is substituted.
inline PlannerResult run_pf_planner(const SystemSpec& spec, const Policy& policy, int count,
                                    std::uint64_t seed, const NoiseRecord& environment) {
    require_valid(spec);
    if (static_cast<int>(environment.xi.size()) != spec.horizon ||
        static_cast<int>(environment.zeta.size()) != spec.horizon)
        throw Error("environment record length must equal the horizon");
    PlannerResult result;
    result.ensemble = ParticleEnsemble::init(spec, count, seed);
    Trajectory& traj = result.trajectory;
    traj.states.push_back(spec.x0);
    Vec x_next(spec.state_dim);
    for (int t = 0; t < spec.horizon; ++t) {
        Vec estimate;
        try {
            estimate = result.ensemble.estimate_state();
        } catch (const ParticleDeathError&) {
            result.death_time = t;
            break;
        }
        result.estimates.push_back(estimate);
        if (result.ensemble.history_enabled())
            result.noise_estimates.push_back(result.ensemble.noise_estimators());
        const Vec action = policy.act(estimate);
        const auto ts = static_cast<std::size_t>(t);
        step_state_into(spec, t, traj.states.back(), action, environment.xi[ts], x_next);
        const Vec obs = observe(spec, t + 1, x_next, environment.zeta[ts]);
        result.ensemble.step(spec, action, obs);
        traj.actions.push_back(action);
        traj.states.push_back(x_next);
        traj.observations.push_back(obs);
        traj.transition_noises.push_back(environment.xi[ts]);
        traj.observation_noises.push_back(environment.zeta[ts]);
    }
    // The loop never asks for an estimate at T, so weights that hit zero on
    // the final update would otherwise go unnoticed; that event is exactly
    // the death the sweeps measure.
    if (!result.death_time && !result.ensemble.alive()) result.death_time = spec.horizon;
    return result;
}

}  // namespace pfplan
