#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "trace/rng.hpp"
#include "trace/schedule.hpp"

namespace trace {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

// Mixture of axis-aligned Gaussians. Diagonal covariances keep every
// diffused marginal closed-form, so this doubles as an exact score oracle.
class GmmDistribution {
public:
    struct Component {
        double weight;
        Vec mean;
        Vec cov_diag;
    };

    GmmDistribution(std::vector<Component> components, int dimension);

    int dimension() const { return dim_; }
    const std::vector<Component>& components() const { return comps_; }

    double log_density(const Vec& x) const;
    Vec clean_score(const Vec& x) const;

    // VP-diffused mixture at time t: means scaled by sqrt(alpha_bar),
    // covariances alpha_bar*Sigma_i + (1-alpha_bar)*I.
    GmmDistribution diffused(const NoiseSchedule& sched, double t) const;

    Vec noisy_score(const NoiseSchedule& sched, const Vec& x, double t) const;

    Vec sample(std::mt19937_64& eng) const;
    Mat sample_n(std::uint64_t seed, int n) const;

private:
    std::vector<Component> comps_;
    int dim_;
};

// A registered family of GMMs indexed by an integer condition id.
// A null condition means the equal-weight mixture of every member.
class GmmFamily {
public:
    void add(GmmDistribution gmm);
    int size() const { return static_cast<int>(members_.size()); }
    int dimension() const;
    const GmmDistribution& member(int id) const;
    const GmmDistribution& unconditional() const;

private:
    std::vector<GmmDistribution> members_;
    std::optional<GmmDistribution> uncond_;
};

struct Condition {
    std::optional<int> id;  // null -> unconditional

    static Condition none() { return Condition{std::nullopt}; }
    static Condition of(int id) { return Condition{id}; }
};

// epsilon <-> score conversions for the VP marginal at time t.
Vec eps_from_score(const Vec& score, const NoiseSchedule& sched, double t);
Vec score_from_eps(const Vec& eps, const NoiseSchedule& sched, double t);

// Classifier-free guidance: eps_u + w * (eps_c - eps_u).
Vec cfg_combine(const Vec& eps_cond, const Vec& eps_uncond, double w);

}  // namespace trace
