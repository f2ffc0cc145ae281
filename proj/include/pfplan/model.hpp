#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "pfplan/errors.hpp"
#include "pfplan/noise.hpp"
#include "pfplan/rng.hpp"

namespace pfplan {

// Time-varying partially observed linear system:
//   x_{t+1} = A_t x_t + B_t u_t + xi_t        t = 0..T-1,  xi_t ~ mu_t
//   o_t     = C_t x_t + zeta_t                t = 1..T,    zeta_t ~ eta_t
// x_0 is known exactly. A time-invariant system repeats one matrix T times.
struct SystemSpec {
    int state_dim = 0;   // d
    int action_dim = 0;  // k
    int obs_dim = 0;
    int horizon = 0;  // T
    std::vector<Mat> A_seq;                               // A_0..A_{T-1}, d x d
    std::vector<Mat> B_seq;                               // B_0..B_{T-1}, d x k
    std::vector<Mat> C_seq;                               // C_1..C_T, obs_dim x d
    std::vector<NoiseDistribution> transition_noise_seq;  // mu_0..mu_{T-1}
    std::vector<NoiseDistribution> obs_noise_seq;         // eta_1..eta_T
    Vec x0;

    static SystemSpec time_invariant(const Mat& A, const Mat& B, const Mat& C,
                                     const NoiseDistribution& mu, const NoiseDistribution& eta,
                                     Vec x0, int T) {
        SystemSpec s;
        s.state_dim = static_cast<int>(A.rows());
        s.action_dim = static_cast<int>(B.cols());
        s.obs_dim = static_cast<int>(C.rows());
        s.horizon = T;
        s.A_seq.assign(static_cast<std::size_t>(std::max(T, 0)), A);
        s.B_seq.assign(static_cast<std::size_t>(std::max(T, 0)), B);
        s.C_seq.assign(static_cast<std::size_t>(std::max(T, 0)), C);
        s.transition_noise_seq.assign(static_cast<std::size_t>(std::max(T, 0)), mu);
        s.obs_noise_seq.assign(static_cast<std::size_t>(std::max(T, 0)), eta);
        s.x0 = std::move(x0);
        return s;
    }

    // t in 0..T-1
    const Mat& A(int t) const { return A_seq[check_step(t)]; }
    const Mat& B(int t) const { return B_seq[check_step(t)]; }
    const NoiseDistribution& mu(int t) const { return transition_noise_seq[check_step(t)]; }
    // t in 1..T
    const Mat& C(int t) const { return C_seq[check_obs(t)]; }
    const NoiseDistribution& eta(int t) const { return obs_noise_seq[check_obs(t)]; }

  private:
    std::size_t check_step(int t) const {
        if (t < 0 || t >= horizon)
            throw IndexError("time index " + std::to_string(t) + " outside [0, T)");
        return static_cast<std::size_t>(t);
    }
    std::size_t check_obs(int t) const {
        if (t < 1 || t > horizon)
            throw IndexError("observation index " + std::to_string(t) + " outside [1, T]");
        return static_cast<std::size_t>(t - 1);
    }
};

// Structural checks, report style: the list is empty iff the spec is usable.
inline std::vector<std::string> validate_spec(const SystemSpec& spec) {
    std::vector<std::string> v;
    auto shape = [](const Mat& m) {
        return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
    };
    if (spec.state_dim < 1) v.push_back("state_dim must be positive");
    if (spec.action_dim < 1) v.push_back("action_dim must be positive");
    if (spec.obs_dim < 1) v.push_back("obs_dim must be positive");
    if (spec.horizon < 1) v.push_back("horizon must be positive");
    const auto T = static_cast<std::size_t>(std::max(spec.horizon, 0));
    if (spec.A_seq.size() != T)
        v.push_back("A_seq length is " + std::to_string(spec.A_seq.size()) + ", expected " +
                     std::to_string(spec.horizon));
    if (spec.B_seq.size() != T)
        v.push_back("B_seq length is " + std::to_string(spec.B_seq.size()) + ", expected " +
                     std::to_string(spec.horizon));
    if (spec.C_seq.size() != T)
        v.push_back("C_seq length is " + std::to_string(spec.C_seq.size()) + ", expected " +
                     std::to_string(spec.horizon));
    if (spec.transition_noise_seq.size() != T)
        v.push_back("transition_noise_seq length is " +
                     std::to_string(spec.transition_noise_seq.size()) + ", expected " +
                     std::to_string(spec.horizon));
    if (spec.obs_noise_seq.size() != T)
        v.push_back("obs_noise_seq length is " + std::to_string(spec.obs_noise_seq.size()) +
                     ", expected " + std::to_string(spec.horizon));
    for (std::size_t t = 0; t < spec.A_seq.size(); ++t) {
        const Mat& A = spec.A_seq[t];
        if (A.rows() != spec.state_dim || A.cols() != spec.state_dim)
            v.push_back("A_" + std::to_string(t) + " shape is " + shape(A) + ", expected " +
                         std::to_string(spec.state_dim) + "x" + std::to_string(spec.state_dim));
        else if (!A.allFinite())
            v.push_back("A_" + std::to_string(t) + " has non-finite entries");
    }
    for (std::size_t t = 0; t < spec.B_seq.size(); ++t) {
        const Mat& B = spec.B_seq[t];
        if (B.rows() != spec.state_dim || B.cols() != spec.action_dim)
            v.push_back("B_" + std::to_string(t) + " shape is " + shape(B) + ", expected " +
                         std::to_string(spec.state_dim) + "x" + std::to_string(spec.action_dim));
        else if (!B.allFinite())
            v.push_back("B_" + std::to_string(t) + " has non-finite entries");
    }
    for (std::size_t t = 0; t < spec.C_seq.size(); ++t) {
        const Mat& C = spec.C_seq[t];
        if (C.rows() != spec.obs_dim || C.cols() != spec.state_dim)
            v.push_back("C_" + std::to_string(t + 1) + " shape is " + shape(C) + ", expected " +
                         std::to_string(spec.obs_dim) + "x" + std::to_string(spec.state_dim));
        else if (!C.allFinite())
            v.push_back("C_" + std::to_string(t + 1) + " has non-finite entries");
    }
    for (std::size_t t = 0; t < spec.transition_noise_seq.size(); ++t)
        if (spec.transition_noise_seq[t].dim() != spec.state_dim)
            v.push_back("transition noise mu_" + std::to_string(t) + " dimension mismatch");
    for (std::size_t t = 0; t < spec.obs_noise_seq.size(); ++t)
        if (spec.obs_noise_seq[t].dim() != spec.obs_dim)
            v.push_back("observation noise eta_" + std::to_string(t + 1) + " dimension mismatch");
    if (spec.x0.size() != spec.state_dim)
        v.push_back("x0 size is " + std::to_string(spec.x0.size()) + ", expected " +
                     std::to_string(spec.state_dim));
    else if (!spec.x0.allFinite())
        v.push_back("x0 has non-finite entries");
    return v;
}

inline void require_valid(const SystemSpec& spec) {
    const auto violations = validate_spec(spec);
    if (violations.empty()) return;
    std::string msg = "invalid system spec:";
    for (const auto& s : violations) msg += " [" + s + "]";
    throw Error(msg);
}

// Shared stepping kernel. Every consumer (environment, particles, Kalman
// predict) funnels through this so that runs over identical inputs agree
// bit for bit.
inline void step_state_into(const SystemSpec& spec, int t, const Eigen::Ref<const Vec>& x,
                            const Eigen::Ref<const Vec>& u, const Eigen::Ref<const Vec>& xi,
                            Vec& out) {
    const Mat& A = spec.A(t);
    const Mat& B = spec.B(t);
    if (x.size() != spec.state_dim || xi.size() != spec.state_dim)
        throw DimensionError("step_state: state dimension mismatch");
    if (u.size() != spec.action_dim) throw DimensionError("step_state: action dimension mismatch");
    out.noalias() = A * x;
    out.noalias() += B * u;
    out += xi;
}

inline Vec step_state(const SystemSpec& spec, int t, const Eigen::Ref<const Vec>& x,
                      const Eigen::Ref<const Vec>& u, const Eigen::Ref<const Vec>& xi) {
    Vec out(spec.state_dim);
    step_state_into(spec, t, x, u, xi, out);
    return out;
}

// o_t = C_t x + zeta, t in 1..T.
inline Vec observe(const SystemSpec& spec, int t, const Eigen::Ref<const Vec>& x,
                   const Eigen::Ref<const Vec>& zeta) {
    const Mat& C = spec.C(t);
    if (x.size() != spec.state_dim) throw DimensionError("observe: state dimension mismatch");
    if (zeta.size() != spec.obs_dim)
        throw DimensionError("observe: observation dimension mismatch");
    Vec o(spec.obs_dim);
    o.noalias() = C * x;
    o += zeta;
    return o;
}

// x_t written as a function of x0, the noises xi_{0:t-1} and the actions
// u_{0:t-1}: sum_s prod_{s'>s} A_{s'} (xi_s + B_s u_s) + prod_s A_s x0.
// Agrees with the iterated step_state recursion up to rounding.
inline Vec decompose_state(const SystemSpec& spec, const std::vector<Vec>& actions,
                           const std::vector<Vec>& noises, int t) {
    if (t < 0 || t > spec.horizon) throw IndexError("decompose_state: t outside [0, T]");
    const auto n = static_cast<std::size_t>(t);
    if (actions.size() < n || noises.size() < n)
        throw Error("decompose_state: need actions and noises for all s < t");
    Vec acc = Vec::Zero(spec.state_dim);
    Mat coeff = Mat::Identity(spec.state_dim, spec.state_dim);  // prod A_{s+1..t-1}
    Vec term(spec.state_dim);
    for (int s = t - 1; s >= 0; --s) {
        term.noalias() = spec.B(s) * actions[static_cast<std::size_t>(s)];
        term += noises[static_cast<std::size_t>(s)];
        acc.noalias() += coeff * term;
        coeff = (coeff * spec.A(s)).eval();
    }
    acc.noalias() += coeff * spec.x0;
    return acc;
}

// Policy u = g(x): a gain matrix or an opaque Lipschitz map.
class Policy {
  public:
    static Policy linear(Mat G) {
        const double norm = operator_norm(G);
        return linear(std::move(G), norm);
    }

    static Policy linear(Mat G, double declared_lg) {
        if (!G.allFinite()) throw Error("policy gain has non-finite entries");
        Policy p;
        p.linear_ = true;
        p.lg_ = declared_lg;
        if (declared_lg < operator_norm(G) * (1.0 - 1e-12))
            throw Error("declared L_g is below the gain's operator norm");
        p.G_ = std::move(G);
        return p;
    }

    static Policy lipschitz(std::function<Vec(const Vec&)> fn, double lg) {
        if (lg <= 0.0) throw Error("declared L_g must be positive");
        Policy p;
        p.linear_ = false;
        p.fn_ = std::move(fn);
        p.lg_ = lg;
        return p;
    }

    Vec act(const Eigen::Ref<const Vec>& x) const {
        if (linear_) return G_ * x;
        return fn_(x);
    }

    bool is_linear() const noexcept { return linear_; }
    const Mat& gain() const {
        if (!linear_) throw Error("policy has no gain matrix");
        return G_;
    }
    double lipschitz_constant() const noexcept { return lg_; }

    static double operator_norm(const Mat& m) {
        if (m.size() == 0) return 0.0;
        Eigen::JacobiSVD<Mat> svd(m);
        return svd.singularValues()(0);
    }

  private:
    bool linear_ = true;
    Mat G_;
    std::function<Vec(const Vec&)> fn_;
    double lg_ = 0.0;
};

// Terminal reward r_T(x_{1:T}, u_{0:T-1}).
class RewardFunction {
  public:
    // Average l1 norm of the states (the "regret" of the simulation study);
    // actions are ignored. L_r = sqrt(d)/T via |x|_1 <= sqrt(d) |x|_2.
    static RewardFunction avg_l1() {
        RewardFunction r;
        r.kind_ = Kind::avg_l1;
        return r;
    }

    // L_r * (sum_t |x_t| + sum_t |u_t|), l2 norms.
    static RewardFunction sum_norm(double lr) {
        if (lr <= 0.0) throw Error("L_r must be positive");
        RewardFunction r;
        r.kind_ = Kind::sum_norm;
        r.lr_ = lr;
        return r;
    }

    static RewardFunction custom(
        std::function<double(const std::vector<Vec>&, const std::vector<Vec>&)> fn, double lr) {
        if (lr <= 0.0) throw Error("L_r must be positive");
        RewardFunction r;
        r.kind_ = Kind::custom;
        r.fn_ = std::move(fn);
        r.lr_ = lr;
        return r;
    }

    double evaluate(const std::vector<Vec>& states, const std::vector<Vec>& actions) const {
        switch (kind_) {
            case Kind::avg_l1: {
                if (states.empty()) throw Error("reward needs at least one state");
                CompensatedSum s;
                for (const auto& x : states) s.add(x.lpNorm<1>());
                return s.value() / static_cast<double>(states.size());
            }
            case Kind::sum_norm: {
                CompensatedSum s;
                for (const auto& x : states) s.add(x.norm());
                for (const auto& u : actions) s.add(u.norm());
                return lr_ * s.value();
            }
            case Kind::custom:
                return fn_(states, actions);
        }
        throw Error("unreachable reward kind");
    }

    double lipschitz_constant(int state_dim, int horizon) const {
        switch (kind_) {
            case Kind::avg_l1:
                return std::sqrt(static_cast<double>(state_dim)) / static_cast<double>(horizon);
            case Kind::sum_norm:
            case Kind::custom:
                return lr_;
        }
        throw Error("unreachable reward kind");
    }

  private:
    enum class Kind { avg_l1, sum_norm, custom };
    Kind kind_ = Kind::avg_l1;
    double lr_ = 1.0;
    std::function<double(const std::vector<Vec>&, const std::vector<Vec>&)> fn_;
};

inline double evaluate_reward(const RewardFunction& r, const std::vector<Vec>& states,
                              const std::vector<Vec>& actions) {
    return r.evaluate(states, actions);
}

// One realized closed-loop run.
struct Trajectory {
    std::vector<Vec> states;              // x_0..x_T
    std::vector<Vec> actions;             // u_0..u_{T-1}
    std::vector<Vec> observations;        // o_1..o_T
    std::vector<Vec> transition_noises;   // xi_0..xi_{T-1}
    std::vector<Vec> observation_noises;  // zeta_1..zeta_T

    std::vector<Vec> states_1T() const {
        return {states.begin() + (states.empty() ? 0 : 1), states.end()};
    }
};

inline double trajectory_reward(const RewardFunction& r, const Trajectory& traj) {
    return r.evaluate(traj.states_1T(), traj.actions);
}

// The realized environment noise of a run: xi[t] = xi_t, zeta[t] = zeta_{t+1}.
// Both closed loops of a coupled run consume the same record.
struct NoiseRecord {
    std::vector<Vec> xi;
    std::vector<Vec> zeta;
};

inline NoiseRecord draw_noise_record(const SystemSpec& spec, std::uint64_t seed) {
    NoiseRecord rec;
    rec.xi.reserve(static_cast<std::size_t>(spec.horizon));
    rec.zeta.reserve(static_cast<std::size_t>(spec.horizon));
    for (int t = 0; t < spec.horizon; ++t) {
        RngStream sx(seed, mix_stream(stream_domain::env_transition, static_cast<std::uint64_t>(t)));
        rec.xi.push_back(spec.mu(t).sample(sx));
        RngStream sz(seed,
                     mix_stream(stream_domain::env_observation, static_cast<std::uint64_t>(t)));
        rec.zeta.push_back(spec.eta(t + 1).sample(sz));
    }
    return rec;
}

// Replays (x0, actions, record) through the dynamics; used by the replay
// invariant checks and by conditioned runs.
inline Trajectory replay(const SystemSpec& spec, const std::vector<Vec>& actions,
                         const NoiseRecord& rec) {
    if (static_cast<int>(actions.size()) != spec.horizon ||
        static_cast<int>(rec.xi.size()) != spec.horizon ||
        static_cast<int>(rec.zeta.size()) != spec.horizon)
        throw Error("replay: actions/noise lengths must equal the horizon");
    Trajectory traj;
    traj.states.push_back(spec.x0);
    traj.actions = actions;
    traj.transition_noises = rec.xi;
    traj.observation_noises = rec.zeta;
    Vec x(spec.state_dim);
    for (int t = 0; t < spec.horizon; ++t) {
        step_state_into(spec, t, traj.states.back(), actions[static_cast<std::size_t>(t)],
                        rec.xi[static_cast<std::size_t>(t)], x);
        traj.states.push_back(x);
        traj.observations.push_back(
            observe(spec, t + 1, x, rec.zeta[static_cast<std::size_t>(t)]));
    }
    return traj;
}

}  // namespace pfplan
