#pragma once

#include <cstdint>
#include <utility>

namespace trace {

// Continuous-time noise schedule beta(t) on t in [0,1] and the quantities
// derived from its running integrals:
//   sigma2(t)     = int_0^t beta
//   sigma_bar2(t) = int_t^1 beta
//   alpha_bar(t)  = exp(-sigma2(t))          (VP convention)
//   gamma(t)      = sigma_bar2 / (sigma2 + sigma_bar2)
//   big_sigma(t)  = sigma2 * sigma_bar2 / (sigma2 + sigma_bar2)
class NoiseSchedule {
public:
    enum class Kind { linear, cosine };

    NoiseSchedule(Kind kind, double beta_min, double beta_max);

    static NoiseSchedule linear(double beta_min = 0.1, double beta_max = 20.0) {
        return NoiseSchedule(Kind::linear, beta_min, beta_max);
    }
    static NoiseSchedule cosine(double beta_min = 0.1, double beta_max = 20.0) {
        return NoiseSchedule(Kind::cosine, beta_min, beta_max);
    }

    Kind kind() const { return kind_; }
    double beta_min() const { return beta_min_; }
    double beta_max() const { return beta_max_; }

    double beta(double t) const;

    // (sigma2, sigma_bar2); closed form for linear, adaptive quadrature
    // (abs tol 1e-10) for cosine.
    std::pair<double, double> accumulated_variances(double t) const;

    double total_variance() const;  // sigma2(1)

    double alpha_bar(double t) const;

    // (gamma, big_sigma)
    std::pair<double, double> bridge_coefficients(double t) const;

private:
    Kind kind_;
    double beta_min_;
    double beta_max_;
    double total_;  // cached sigma2(1)

    double sigma2_raw(double t) const;
};

// Draws bridge times t (uniform or annealed window) and denoising times t'
// (two-stage). Stateless per call: the draw is a pure function of
// (seed, iteration), so replays and parallel runs agree.
struct TimeSampler {
    enum class Mode { uniform, annealed, two_stage };

    Mode mode = Mode::uniform;
    double lo = 0.02;
    double hi = 0.5;
    double hi_late = 0.5;            // stage-2 upper edge (two_stage only)
    std::int64_t stage_boundary = 700;
    std::int64_t total_iterations = 1700;
    std::uint64_t rng_seed = 0;

    static constexpr double kFloorWidth = 0.01;  // annealed terminal window

    double sample_t(std::int64_t iter) const;
    double sample_t_prime(std::int64_t iter) const;
};

}  // namespace trace
