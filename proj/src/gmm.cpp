#include "trace/gmm.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace trace {
namespace {

double log_gaussian_diag(const Vec& x, const Vec& mean, const Vec& cov_diag) {
    double acc = -0.5 * x.size() * std::log(2.0 * M_PI);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        double d = x[i] - mean[i];
        acc -= 0.5 * (std::log(cov_diag[i]) + d * d / cov_diag[i]);
    }
    return acc;
}

}  // namespace

GmmDistribution::GmmDistribution(std::vector<Component> components,
                                 int dimension)
    : comps_(std::move(components)), dim_(dimension) {
    if (comps_.empty()) throw std::invalid_argument("empty mixture");
    double wsum = 0.0;
    for (const auto& c : comps_) {
        if (c.mean.size() != dim_ || c.cov_diag.size() != dim_)
            throw std::invalid_argument("component dimension mismatch");
        if ((c.cov_diag.array() <= 0.0).any())
            throw std::invalid_argument("covariance entries must be positive");
        wsum += c.weight;
    }
    if (std::abs(wsum - 1.0) > 1e-12)
        throw std::invalid_argument("mixture weights must sum to 1");
}

double GmmDistribution::log_density(const Vec& x) const {
    if (x.size() != dim_) throw std::invalid_argument("dimension mismatch");
    double max_lp = -std::numeric_limits<double>::infinity();
    std::vector<double> lps(comps_.size());
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        lps[k] = std::log(comps_[k].weight) +
                 log_gaussian_diag(x, comps_[k].mean, comps_[k].cov_diag);
        max_lp = std::max(max_lp, lps[k]);
    }
    double s = 0.0;
    for (double lp : lps) s += std::exp(lp - max_lp);
    return max_lp + std::log(s);
}

Vec GmmDistribution::clean_score(const Vec& x) const {
    if (x.size() != dim_) throw std::invalid_argument("dimension mismatch");
    if (!x.allFinite()) throw std::domain_error("non-finite input");
    // responsibility-weighted component scores, stabilized with log-sum-exp
    std::vector<double> lps(comps_.size());
    double max_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        lps[k] = std::log(comps_[k].weight) +
                 log_gaussian_diag(x, comps_[k].mean, comps_[k].cov_diag);
        max_lp = std::max(max_lp, lps[k]);
    }
    double norm = 0.0;
    for (double lp : lps) norm += std::exp(lp - max_lp);
    Vec score = Vec::Zero(dim_);
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        double resp = std::exp(lps[k] - max_lp) / norm;
        score.array() += resp * (comps_[k].mean - x).array() /
                         comps_[k].cov_diag.array();
    }
    return score;
}

GmmDistribution GmmDistribution::diffused(const NoiseSchedule& sched,
                                          double t) const {
    double ab = sched.alpha_bar(t);
    double root_ab = std::sqrt(ab);
    std::vector<Component> out;
    out.reserve(comps_.size());
    for (const auto& c : comps_) {
        out.push_back({c.weight, root_ab * c.mean,
                       (ab * c.cov_diag.array() + (1.0 - ab)).matrix()});
    }
    return GmmDistribution(std::move(out), dim_);
}

Vec GmmDistribution::noisy_score(const NoiseSchedule& sched, const Vec& x,
                                 double t) const {
    if (x.size() != dim_) throw std::invalid_argument("dimension mismatch");
    double ab = sched.alpha_bar(t);
    double root_ab = std::sqrt(ab);
    std::vector<double> lps(comps_.size());
    double max_lp = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        Vec mean = root_ab * comps_[k].mean;
        Vec cov = (ab * comps_[k].cov_diag.array() + (1.0 - ab)).matrix();
        lps[k] = std::log(comps_[k].weight) + log_gaussian_diag(x, mean, cov);
        max_lp = std::max(max_lp, lps[k]);
    }
    double norm = 0.0;
    for (double lp : lps) norm += std::exp(lp - max_lp);
    Vec score = Vec::Zero(dim_);
    for (std::size_t k = 0; k < comps_.size(); ++k) {
        double resp = std::exp(lps[k] - max_lp) / norm;
        Vec mean = root_ab * comps_[k].mean;
        Vec cov = (ab * comps_[k].cov_diag.array() + (1.0 - ab)).matrix();
        score.array() += resp * (mean - x).array() / cov.array();
    }
    return score;
}

Vec GmmDistribution::sample(std::mt19937_64& eng) const {
    double u = uniform(eng, 0.0, 1.0);
    std::size_t k = 0;
    double acc = 0.0;
    for (; k < comps_.size(); ++k) {
        acc += comps_[k].weight;
        if (u <= acc) break;
    }
    if (k == comps_.size()) k = comps_.size() - 1;
    Vec x(dim_);
    for (int i = 0; i < dim_; ++i)
        x[i] = comps_[k].mean[i] +
               std::sqrt(comps_[k].cov_diag[i]) * standard_normal(eng);
    return x;
}

Mat GmmDistribution::sample_n(std::uint64_t seed, int n) const {
    Mat out(n, dim_);
    for (int i = 0; i < n; ++i) {
        auto eng = make_engine(seed, stream::gmm_sample, i);
        out.row(i) = sample(eng).transpose();
    }
    return out;
}

void GmmFamily::add(GmmDistribution gmm) {
    if (!members_.empty() && gmm.dimension() != members_.front().dimension())
        throw std::invalid_argument("family members must share dimension");
    members_.push_back(std::move(gmm));
    // rebuild the equal-weight union mixture
    std::vector<GmmDistribution::Component> all;
    for (const auto& m : members_)
        for (auto c : m.components()) {
            c.weight /= static_cast<double>(members_.size());
            all.push_back(std::move(c));
        }
    uncond_.emplace(std::move(all), members_.front().dimension());
}

int GmmFamily::dimension() const {
    if (members_.empty()) throw std::logic_error("empty family");
    return members_.front().dimension();
}

const GmmDistribution& GmmFamily::member(int id) const {
    if (id < 0 || id >= size())
        throw std::out_of_range("condition id outside registry");
    return members_[id];
}

const GmmDistribution& GmmFamily::unconditional() const {
    if (!uncond_) throw std::logic_error("empty family");
    return *uncond_;
}

Vec eps_from_score(const Vec& score, const NoiseSchedule& sched, double t) {
    if (t <= 0.0) throw std::domain_error("eps_from_score undefined at t=0");
    return -std::sqrt(1.0 - sched.alpha_bar(t)) * score;
}

Vec score_from_eps(const Vec& eps, const NoiseSchedule& sched, double t) {
    if (t <= 0.0) throw std::domain_error("score_from_eps undefined at t=0");
    return -eps / std::sqrt(1.0 - sched.alpha_bar(t));
}

Vec cfg_combine(const Vec& eps_cond, const Vec& eps_uncond, double w) {
    if (eps_cond.size() != eps_uncond.size())
        throw std::invalid_argument("dimension mismatch");
    return eps_uncond + w * (eps_cond - eps_uncond);
}

}  // namespace trace
