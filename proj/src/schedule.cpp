#include "trace/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include "trace/rng.hpp"

namespace trace {
namespace {

constexpr double kQuadTol = 1e-10;
constexpr double kCosineS = 0.008;  // DDPM cosine offset

void check_time(double t) {
    if (!(t >= 0.0 && t <= 1.0))
        throw std::domain_error("time must lie in [0,1]");
}

template <typename F>
double adaptive_simpson(const F& f, double a, double b, double fa, double fm,
                        double fb, double whole, double tol, int depth) {
    if (depth > 60)
        throw std::runtime_error("quadrature failed to converge");
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (std::abs(left + right - whole) <= 15.0 * tol)
        return left + right + (left + right - whole) / 15.0;
    return adaptive_simpson(f, a, m, fa, flm, fm, left, tol * 0.5, depth + 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, tol * 0.5, depth + 1);
}

template <typename F>
double integrate(const F& f, double a, double b) {
    if (b <= a) return 0.0;
    double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(f, a, b, fa, fm, fb, whole, kQuadTol, 0);
}

}  // namespace

NoiseSchedule::NoiseSchedule(Kind kind, double beta_min, double beta_max)
    : kind_(kind), beta_min_(beta_min), beta_max_(beta_max) {
    if (beta_min <= 0.0 || beta_max < beta_min)
        throw std::invalid_argument("require 0 < beta_min <= beta_max");
    total_ = sigma2_raw(1.0);
}

double NoiseSchedule::beta(double t) const {
    check_time(t);
    switch (kind_) {
        case Kind::linear:
            return beta_min_ + (beta_max_ - beta_min_) * t;
        case Kind::cosine: {
            // beta = -d/dt log alpha_bar for the cosine alpha_bar curve,
            // clamped into [beta_min, beta_max] to tame the t->1 blow-up.
            double u = (t + kCosineS) / (1.0 + kCosineS) * (M_PI / 2.0);
            double b = M_PI / (1.0 + kCosineS) * std::tan(u);
            return std::fmin(beta_max_, std::fmax(beta_min_, b));
        }
    }
    throw std::logic_error("unreachable");
}

double NoiseSchedule::sigma2_raw(double t) const {
    if (kind_ == Kind::linear)
        return beta_min_ * t + 0.5 * (beta_max_ - beta_min_) * t * t;
    return integrate([this](double s) { return beta(s); }, 0.0, t);
}

std::pair<double, double> NoiseSchedule::accumulated_variances(double t) const {
    check_time(t);
    if (kind_ == Kind::linear) {
        double s2 = sigma2_raw(t);
        return {s2, total_ - s2};
    }
    double s2 = integrate([this](double s) { return beta(s); }, 0.0, t);
    double sb2 = integrate([this](double s) { return beta(s); }, t, 1.0);
    return {s2, sb2};
}

double NoiseSchedule::total_variance() const { return total_; }

double NoiseSchedule::alpha_bar(double t) const {
    check_time(t);
    return std::exp(-sigma2_raw(t));
}

std::pair<double, double> NoiseSchedule::bridge_coefficients(double t) const {
    auto [s2, sb2] = accumulated_variances(t);
    double total = s2 + sb2;
    if (total <= 0.0) return {1.0, 0.0};
    return {sb2 / total, s2 * sb2 / total};
}

double TimeSampler::sample_t(std::int64_t iter) const {
    if (iter < 0 || iter >= total_iterations)
        throw std::domain_error("iteration outside configured run length");
    auto eng = make_engine(rng_seed, stream::time_sampler,
                           static_cast<std::uint64_t>(iter));
    switch (mode) {
        case Mode::uniform:
            return uniform(eng, lo, hi);
        case Mode::annealed: {
            double frac = total_iterations > 1
                              ? static_cast<double>(iter) /
                                    static_cast<double>(total_iterations - 1)
                              : 1.0;
            double hi_eff = hi + frac * (lo + kFloorWidth - hi);
            return uniform(eng, lo, hi_eff);
        }
        case Mode::two_stage:
            return uniform(eng, lo, iter < stage_boundary ? hi : hi_late);
    }
    throw std::logic_error("unreachable");
}

double TimeSampler::sample_t_prime(std::int64_t iter) const {
    if (mode != Mode::two_stage)
        throw std::logic_error("t' sampling requires two_stage mode");
    if (iter < 0 || iter >= total_iterations)
        throw std::domain_error("iteration outside configured run length");
    auto eng = make_engine(rng_seed, stream::time_prime_sampler,
                           static_cast<std::uint64_t>(iter));
    return uniform(eng, lo, iter < stage_boundary ? hi : hi_late);
}

}  // namespace trace
