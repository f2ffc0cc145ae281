#pragma once

#include <Eigen/Cholesky>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "pfplan/model.hpp"
#include "pfplan/pf.hpp"

namespace pfplan {

enum class OracleType { kalman, enumeration, reference };

struct OracleKind {
    OracleType type = OracleType::kalman;
    std::int64_t max_paths = std::int64_t{1} << 20;  // enumeration frontier budget
    int n_ref = 100000;                              // reference-filter particle count
};

namespace detail {

// Mean and diagonal covariance of a noise law the Kalman recursion accepts:
// a diagonal Gaussian, or a point mass treated as the zero-covariance limit.
inline std::pair<Vec, Vec> gaussian_moments(const NoiseDistribution& d) {
    if (d.is_gaussian()) return {d.gaussian_mean(), d.gaussian_variances()};
    if (d.is_point_mass()) return {d.atom_point(0), Vec::Zero(d.dim())};
    throw Error("Kalman oracle requires Gaussian (or degenerate) noise");
}

}  // namespace detail

struct KalmanResult {
    Vec mean;
    Mat covariance;
};

// Exact Bayesian filter for (degenerate-)Gaussian noise. Recursion: predict
// through the shared stepping kernel with the noise mean, inflate covariance
// by the transition covariance, then condition on o_{s+1}. Degenerate steps
// (zero innovation covariance with no state uncertainty in the observed
// directions) propagate exactly instead of inverting a singular matrix.
inline KalmanResult kalman_posterior_mean(const SystemSpec& spec, const std::vector<Vec>& observations,
                                          const std::vector<Vec>& actions) {
    const int t = static_cast<int>(observations.size());
    if (static_cast<int>(actions.size()) != t)
        throw Error("kalman: need exactly one action per observation");
    if (t > spec.horizon) throw IndexError("kalman: more observations than the horizon");
    KalmanResult r;
    r.mean = spec.x0;
    r.covariance = Mat::Zero(spec.state_dim, spec.state_dim);
    Vec x_pred(spec.state_dim);
    for (int s = 0; s < t; ++s) {
        const auto ss = static_cast<std::size_t>(s);
        const auto [mu_mean, mu_var] = detail::gaussian_moments(spec.mu(s));
        step_state_into(spec, s, r.mean, actions[ss], mu_mean, x_pred);
        r.mean = x_pred;
        const Mat& A = spec.A(s);
        r.covariance = A * r.covariance * A.transpose();
        r.covariance.diagonal() += mu_var;

        const auto [eta_mean, eta_var] = detail::gaussian_moments(spec.eta(s + 1));
        const Mat& C = spec.C(s + 1);
        if (observations[ss].size() != spec.obs_dim)
            throw DimensionError("kalman: observation dimension mismatch");
        Vec resid = observations[ss] - C * r.mean - eta_mean;
        Mat cross = r.covariance * C.transpose();  // P C^T
        Mat innovation = C * cross;
        innovation.diagonal() += eta_var;
        Eigen::LLT<Mat> llt(innovation);
        if (llt.info() != Eigen::Success) {
            if (cross.isZero(0.0)) continue;  // no state uncertainty to update
            throw Error("kalman: singular innovation covariance");
        }
        const Mat gain = llt.solve(cross.transpose()).transpose();  // P C^T S^-1
        r.mean += gain * resid;
        r.covariance -= gain * C * r.covariance;
        r.covariance = (0.5 * (r.covariance + r.covariance.transpose())).eval();
    }
    return r;
}

struct EnumerationResult {
    Vec posterior_mean;            // y_tilde_t
    std::vector<Vec> noise_means;  // xi_tilde_{t,s}, s = 0..t-1
    double gamma = 1.0;            // gamma_t
    std::vector<Vec> gamma_vec;    // Gamma_{t,s}, s = 0..t-1
};

namespace detail {

struct PathNode {
    Vec state;
    double weight;                // path mass times observation likelihood
    std::vector<double> noise;    // flattened xi'_{0..depth-1}
};

// Expands the finite-support noise tree in tandem with the observation
// likelihoods, pruning zero-weight paths before descending. Records
// gamma_t = sum of surviving path weights at every depth.
inline std::vector<PathNode> enumerate_frontier(const SystemSpec& spec,
                                                const std::vector<Vec>& observations,
                                                const std::vector<Vec>& actions,
                                                std::int64_t max_paths,
                                                std::vector<double>* gamma_per_depth) {
    const int t = static_cast<int>(observations.size());
    if (static_cast<int>(actions.size()) != t)
        throw Error("enumeration: need exactly one action per observation");
    if (t > spec.horizon) throw IndexError("enumeration: more observations than the horizon");
    std::int64_t product = 1;
    for (int s = 0; s < t; ++s) {
        const NoiseDistribution& mu = spec.mu(s);
        if (!mu.is_atomic())
            throw Error("enumeration oracle requires finite-support transition noise");
        product *= static_cast<std::int64_t>(mu.atom_count());
        if (product > max_paths) throw Error("enumeration path budget exceeded");
    }
    std::vector<PathNode> frontier{{spec.x0, 1.0, {}}};
    if (gamma_per_depth) gamma_per_depth->clear();
    const auto d = static_cast<std::size_t>(spec.state_dim);
    Vec x_next(spec.state_dim);
    Vec resid(spec.obs_dim);
    for (int s = 0; s < t; ++s) {
        const auto ss = static_cast<std::size_t>(s);
        const NoiseDistribution& mu = spec.mu(s);
        const Mat& C = spec.C(s + 1);
        std::vector<PathNode> next;
        next.reserve(frontier.size() * mu.atom_count());
        CompensatedSum gamma;
        for (const PathNode& node : frontier) {
            for (std::size_t k = 0; k < mu.atom_count(); ++k) {
                const Vec& xi = mu.atom_point(k);
                step_state_into(spec, s, node.state, actions[ss], xi, x_next);
                resid = observations[ss];
                resid.noalias() -= C * x_next;
                const double like = spec.eta(s + 1).density(resid);
                const double w = node.weight * mu.atom_mass(k) * like;
                if (w == 0.0) continue;  // eager pruning
                PathNode child;
                child.state = x_next;
                child.weight = w;
                child.noise = node.noise;
                child.noise.insert(child.noise.end(), xi.data(), xi.data() + d);
                gamma.add(w);
                next.push_back(std::move(child));
            }
        }
        if (static_cast<std::int64_t>(next.size()) > max_paths)
            throw Error("enumeration path budget exceeded");
        frontier = std::move(next);
        if (gamma_per_depth) gamma_per_depth->push_back(frontier.empty() ? 0.0 : gamma.value());
    }
    return frontier;
}

}  // namespace detail

// Exact posterior quantities over noise space: gamma_t, Gamma_{t,s}, the
// posterior noise means xi_tilde_{t,s} = Gamma_{t,s} / gamma_t, and the state
// estimate rebuilt from them through the state decomposition.
inline EnumerationResult enumerate_posterior_mean(const SystemSpec& spec,
                                                  const std::vector<Vec>& observations,
                                                  const std::vector<Vec>& actions,
                                                  std::int64_t max_paths = std::int64_t{1} << 20) {
    const int t = static_cast<int>(observations.size());
    EnumerationResult result;
    if (t == 0) {
        result.posterior_mean = spec.x0;
        return result;
    }
    const auto frontier = detail::enumerate_frontier(spec, observations, actions, max_paths, nullptr);
    CompensatedSum gamma;
    for (const auto& node : frontier) gamma.add(node.weight);
    result.gamma = frontier.empty() ? 0.0 : gamma.value();
    if (result.gamma <= 0.0) throw ImpossibleObservationError(t);
    const auto d = static_cast<std::size_t>(spec.state_dim);
    result.gamma_vec.reserve(static_cast<std::size_t>(t));
    result.noise_means.reserve(static_cast<std::size_t>(t));
    for (int s = 0; s < t; ++s) {
        std::vector<CompensatedSum> acc(d);
        for (const auto& node : frontier)
            for (std::size_t j = 0; j < d; ++j)
                acc[j].add(node.weight * node.noise[static_cast<std::size_t>(s) * d + j]);
        Vec g(spec.state_dim);
        for (std::size_t j = 0; j < d; ++j) g[static_cast<Eigen::Index>(j)] = acc[j].value();
        result.gamma_vec.push_back(g);
        result.noise_means.push_back(g / result.gamma);
    }
    result.posterior_mean = decompose_state(spec, actions, result.noise_means, t);
    return result;
}

// gamma_t for each t = 1..|observations|; zero entries mean the record is
// impossible under the model from that time on (reported, not thrown).
inline std::vector<double> likelihood_gamma(const SystemSpec& spec,
                                            const std::vector<Vec>& observations,
                                            const std::vector<Vec>& actions,
                                            std::int64_t max_paths = std::int64_t{1} << 20) {
    std::vector<double> gammas;
    detail::enumerate_frontier(spec, observations, actions, max_paths, &gammas);
    return gammas;
}

// Surrogate ideal-process estimator for noise outside the exact oracles'
// reach: a plain (non-planning) particle filter run over the given record.
// Approximate by nature; its error decays like 1/sqrt(N_ref).
inline Vec reference_filter_mean(const SystemSpec& spec, const std::vector<Vec>& observations,
                                 const std::vector<Vec>& actions, int n_ref, std::uint64_t seed) {
    const int t = static_cast<int>(observations.size());
    if (static_cast<int>(actions.size()) != t)
        throw Error("reference filter: need exactly one action per observation");
    auto ens = ParticleEnsemble::init(spec, n_ref, seed, /*retain_history=*/false);
    for (int s = 0; s < t; ++s) {
        const auto ss = static_cast<std::size_t>(s);
        ens.step(spec, actions[ss], observations[ss]);
    }
    return ens.estimate_state();
}

inline bool oracle_applicable(const SystemSpec& spec, const OracleKind& kind,
                              std::string* why = nullptr) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    switch (kind.type) {
        case OracleType::kalman:
            for (const auto& d : spec.transition_noise_seq)
                if (!d.is_gaussian() && !d.is_point_mass())
                    return fail("transition noise is neither Gaussian nor degenerate");
            for (const auto& d : spec.obs_noise_seq)
                if (!d.is_gaussian() && !d.is_point_mass())
                    return fail("observation noise is neither Gaussian nor degenerate");
            return true;
        case OracleType::enumeration: {
            std::int64_t product = 1;
            for (const auto& d : spec.transition_noise_seq) {
                if (!d.is_atomic()) return fail("transition noise is not finite-support");
                product *= static_cast<std::int64_t>(d.atom_count());
                if (product > kind.max_paths) return fail("path budget exceeded");
            }
            return true;
        }
        case OracleType::reference:
            return true;
    }
    return fail("unknown oracle kind");
}

// Dispatch on the configured oracle; `seed` feeds only the reference filter.
inline Vec oracle_estimate(const SystemSpec& spec, const OracleKind& kind,
                           const std::vector<Vec>& observations, const std::vector<Vec>& actions,
                           std::uint64_t seed) {
    switch (kind.type) {
        case OracleType::kalman:
            return kalman_posterior_mean(spec, observations, actions).mean;
        case OracleType::enumeration:
            return enumerate_posterior_mean(spec, observations, actions, kind.max_paths)
                .posterior_mean;
        case OracleType::reference:
            if (observations.empty()) return spec.x0;
            return reference_filter_mean(spec, observations, actions, kind.n_ref,
                                         mix_stream(seed, observations.size()));
    }
    throw Error("unknown oracle kind");
}

}  // namespace pfplan
