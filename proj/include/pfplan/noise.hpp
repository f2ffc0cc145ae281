#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "pfplan/errors.hpp"
#include "pfplan/numerics.hpp"
#include "pfplan/rng.hpp"

namespace pfplan {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using LatticeVec = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

enum class NoiseKind { continuous, atomic };

// A transition- or observation-noise law: either a diagonal Gaussian or a
// finite mixture of point masses. Atomic laws live on an integer lattice
// (point = lattice_scale * integer coordinates) so that support membership
// is decided by integer comparison, never by a float tolerance. `density`
// returns a probability density for the continuous variant and the point
// MASS for the atomic one; that value is exactly the particle-filter weight
// multiplier in both cases.
class NoiseDistribution {
  public:
    static NoiseDistribution diagonal_gaussian(Vec mean, Vec variances,
                                               std::optional<double> subgaussian_m = {}) {
        if (mean.size() == 0 || mean.size() != variances.size())
            throw DimensionError("diagonal_gaussian: mean/variance size mismatch");
        if (!mean.allFinite() || !variances.allFinite())
            throw Error("diagonal_gaussian: non-finite parameter");
        if ((variances.array() <= 0.0).any())
            throw Error("diagonal_gaussian: variances must be strictly positive");
        if (subgaussian_m && *subgaussian_m <= 0.0)
            throw Error("subgaussian_m must be positive");
        NoiseDistribution d;
        d.kind_ = NoiseKind::continuous;
        d.dim_ = mean.size();
        d.mean_ = std::move(mean);
        d.variances_ = std::move(variances);
        d.sd_ = d.variances_.cwiseSqrt();
        // log((2*pi*v_j)^-1/2) terms, precomputed.
        d.log_norm_const_ = 0.0;
        for (Eigen::Index j = 0; j < d.dim_; ++j)
            d.log_norm_const_ -= 0.5 * std::log(2.0 * 3.14159265358979323846 * d.variances_[j]);
        d.subgaussian_m_ = subgaussian_m;
        return d;
    }

    static NoiseDistribution finite_support(const std::vector<Vec>& points,
                                            const std::vector<double>& masses,
                                            double lattice_scale = 1.0,
                                            std::optional<double> subgaussian_m = {}) {
        if (points.empty() || points.size() != masses.size())
            throw Error("finite_support: need matching, nonempty points and masses");
        if (lattice_scale <= 0.0) throw Error("finite_support: lattice_scale must be positive");
        if (subgaussian_m && *subgaussian_m <= 0.0)
            throw Error("subgaussian_m must be positive");
        NoiseDistribution d;
        d.kind_ = NoiseKind::atomic;
        d.dim_ = points.front().size();
        d.scale_ = lattice_scale;
        d.subgaussian_m_ = subgaussian_m;
        double mass_sum = 0.0;
        for (std::size_t k = 0; k < points.size(); ++k) {
            const Vec& p = points[k];
            if (p.size() != d.dim_) throw DimensionError("finite_support: atom dimension mismatch");
            if (!p.allFinite()) throw Error("finite_support: non-finite atom");
            if (!(masses[k] > 0.0 && masses[k] <= 1.0))
                throw Error("finite_support: masses must lie in (0,1]");
            LatticeVec q(d.dim_);
            for (Eigen::Index j = 0; j < d.dim_; ++j) {
                q[j] = std::llround(p[j] / lattice_scale);
                if (static_cast<double>(q[j]) * lattice_scale != p[j])
                    throw Error("finite_support: atom is not on the declared lattice");
            }
            for (const auto& other : d.lattice_points_)
                if (other == q) throw Error("finite_support: atom points must be distinct");
            d.lattice_points_.push_back(std::move(q));
            d.masses_.push_back(masses[k]);
            mass_sum += masses[k];
        }
        if (std::abs(mass_sum - 1.0) > 1e-12)
            throw Error("finite_support: masses must sum to 1");
        d.points_.reserve(points.size());
        for (const auto& q : d.lattice_points_)
            d.points_.push_back(q.cast<double>() * lattice_scale);
        d.cumulative_.resize(d.masses_.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < d.masses_.size(); ++k) {
            acc += d.masses_[k];
            d.cumulative_[k] = acc;
        }
        d.cumulative_.back() = 1.0;
        return d;
    }

    // Point mass (the Dirac observation law of degenerate systems).
    static NoiseDistribution dirac(const Vec& point, double lattice_scale = 1.0) {
        return finite_support({point}, {1.0}, lattice_scale);
    }

    NoiseKind kind() const noexcept { return kind_; }
    Eigen::Index dim() const noexcept { return dim_; }
    bool is_gaussian() const noexcept { return kind_ == NoiseKind::continuous; }
    bool is_atomic() const noexcept { return kind_ == NoiseKind::atomic; }
    bool is_point_mass() const noexcept { return is_atomic() && masses_.size() == 1; }
    std::optional<double> subgaussian_m() const noexcept { return subgaussian_m_; }

    Vec mean() const {
        if (is_gaussian()) return mean_;
        Vec m = Vec::Zero(dim_);
        for (std::size_t k = 0; k < points_.size(); ++k) m += masses_[k] * points_[k];
        return m;
    }

    const Vec& gaussian_mean() const {
        require_gaussian();
        return mean_;
    }
    const Vec& gaussian_variances() const {
        require_gaussian();
        return variances_;
    }

    std::size_t atom_count() const {
        require_atomic();
        return points_.size();
    }
    const Vec& atom_point(std::size_t k) const {
        require_atomic();
        return points_.at(k);
    }
    double atom_mass(std::size_t k) const {
        require_atomic();
        return masses_.at(k);
    }
    double lattice_scale() const {
        require_atomic();
        return scale_;
    }

    Vec sample(RngStream& rng) const {
        if (is_gaussian()) {
            Vec z(dim_);
            for (Eigen::Index j = 0; j < dim_; ++j) z[j] = mean_[j] + sd_[j] * rng.normal();
            return z;
        }
        if (points_.size() == 1) {
            rng.next_u64();  // keep the draw count uniform across variants
            return points_[0];
        }
        const double u = rng.uniform();
        const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
        const auto k = static_cast<std::size_t>(
            std::min<std::ptrdiff_t>(it - cumulative_.begin(),
                                     static_cast<std::ptrdiff_t>(points_.size()) - 1));
        return points_[k];
    }

    double log_density(const Eigen::Ref<const Vec>& x) const {
        if (x.size() != dim_) throw DimensionError("density: dimension mismatch");
        if (is_gaussian()) {
            double e = log_norm_const_;
            for (Eigen::Index j = 0; j < dim_; ++j) {
                const double r = x[j] - mean_[j];
                e -= 0.5 * r * r / variances_[j];
            }
            return e;
        }
        const double m = atomic_mass_at(x);
        return m > 0.0 ? std::log(m) : kNegInf;
    }

    double density(const Eigen::Ref<const Vec>& x) const {
        if (x.size() != dim_) throw DimensionError("density: dimension mismatch");
        if (is_gaussian()) return std::exp(log_density(x));
        return atomic_mass_at(x);
    }

  private:
    NoiseDistribution() = default;

    void require_gaussian() const {
        if (!is_gaussian()) throw Error("noise distribution is not Gaussian");
    }
    void require_atomic() const {
        if (!is_atomic()) throw Error("noise distribution is not atomic");
    }

    double atomic_mass_at(const Eigen::Ref<const Vec>& x) const {
        LatticeVec q(dim_);
        for (Eigen::Index j = 0; j < dim_; ++j) {
            q[j] = std::llround(x[j] / scale_);
            if (static_cast<double>(q[j]) * scale_ != x[j]) return 0.0;  // off-lattice
        }
        for (std::size_t k = 0; k < lattice_points_.size(); ++k)
            if (lattice_points_[k] == q) return masses_[k];
        return 0.0;
    }

    NoiseKind kind_ = NoiseKind::continuous;
    Eigen::Index dim_ = 0;
    std::optional<double> subgaussian_m_;
    // gaussian
    Vec mean_, variances_, sd_;
    double log_norm_const_ = 0.0;
    // atomic
    double scale_ = 1.0;
    std::vector<LatticeVec> lattice_points_;
    std::vector<Vec> points_;
    std::vector<double> masses_;
    std::vector<double> cumulative_;
};

struct MgfCheckReport {
    bool pass = false;
    double max_ratio = 0.0;  // sup over probes of E[exp(u.(xi-E xi))] / exp(|u|^2/(2m))
    Vec worst_direction;
    int trials = 0;
};

// Checks the sub-Gaussian certificate E[e^{u.(xi-E xi)}] <= e^{|u|^2/(2m)}
// on random directions with |u| <= 3 sqrt(m). The MGF is evaluated in closed
// form for both variants, so the check is exact per probed direction.
inline MgfCheckReport mgf_bound_check(const NoiseDistribution& dist, double m_candidate,
                                      int trials, RngStream& rng) {
    if (m_candidate <= 0.0) throw Error("mgf_bound_check: m must be positive");
    if (trials < 1) throw Error("mgf_bound_check: trials must be >= 1");
    const Eigen::Index n = dist.dim();
    const Vec mu = dist.mean();
    const double half_inv_m = 0.5 / m_candidate;
    MgfCheckReport report;
    report.trials = trials;
    for (int trial = 0; trial < trials; ++trial) {
        Vec u(n);
        for (Eigen::Index j = 0; j < n; ++j) u[j] = rng.normal();
        const double norm = u.norm();
        if (norm == 0.0) continue;
        const double mag = rng.uniform() * 3.0 * std::sqrt(m_candidate);
        u *= mag / norm;

        double log_mgf;
        double log_bound = 0.0;
        if (dist.is_gaussian()) {
            // Same per-coordinate loop for both sides so the equality case
            // (variances exactly 1/m) reproduces ratio == 1.
            const Vec& v = dist.gaussian_variances();
            double e = 0.0;
            for (Eigen::Index j = 0; j < n; ++j) {
                e += u[j] * u[j] * (0.5 * v[j]);
                log_bound += u[j] * u[j] * half_inv_m;
            }
            log_mgf = e;
        } else {
            double best = kNegInf;
            std::vector<double> exponents(dist.atom_count());
            for (std::size_t k = 0; k < dist.atom_count(); ++k) {
                exponents[k] = u.dot(dist.atom_point(k) - mu) + std::log(dist.atom_mass(k));
                best = std::max(best, exponents[k]);
            }
            CompensatedSum s;
            for (double e : exponents) s.add(std::exp(e - best));
            log_mgf = best + std::log(s.value());
            log_bound = u.squaredNorm() * half_inv_m;
        }
        const double ratio = std::exp(log_mgf - log_bound);
        if (ratio > report.max_ratio) {
            report.max_ratio = ratio;
            report.worst_direction = u;
        }
    }
    report.pass = report.max_ratio <= 1.0 + 1e-9;
    return report;
}

}  // namespace pfplan
