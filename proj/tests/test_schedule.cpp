#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <stdexcept>

#include "doctest.h"
#include "trace/schedule.hpp"

using namespace trace;

namespace {

// Independent quadrature oracle: plain trapezoid rule over n panels.
double trapezoid_beta(const NoiseSchedule& s, double a, double b, int n) {
    double h = (b - a) / n;
    double acc = 0.5 * (s.beta(a) + s.beta(b));
    for (int i = 1; i < n; ++i) acc += s.beta(a + i * h);
    return acc * h;
}

}  // namespace

TEST_CASE("linear beta endpoints and midpoint") {
    NoiseSchedule s = NoiseSchedule::linear(0.1, 20.0);
    CHECK(s.beta(0.0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.beta(1.0) == doctest::Approx(20.0).epsilon(1e-15));
    // closed-form interpolation, cross-checked with the endpoint midpoint
    CHECK(s.beta(0.5) == doctest::Approx(10.05).epsilon(1e-13));
    CHECK(s.beta(0.5) ==
          doctest::Approx(0.5 * (s.beta(0.0) + s.beta(1.0))).epsilon(1e-13));
    CHECK_THROWS_AS((void)s.beta(-0.01), std::domain_error);
    CHECK_THROWS_AS((void)s.beta(1.01), std::domain_error);
}

TEST_CASE("accumulated variances against a trapezoid oracle") {
    NoiseSchedule s = NoiseSchedule::linear(0.1, 20.0);
    auto [s2_0, sb2_0] = s.accumulated_variances(0.0);
    CHECK(s2_0 == 0.0);
    CHECK(sb2_0 == doctest::Approx(10.05).epsilon(1e-13));
    auto [s2_1, sb2_1] = s.accumulated_variances(1.0);
    CHECK(s2_1 == doctest::Approx(10.05).epsilon(1e-13));
    CHECK(sb2_1 == 0.0);

    auto [s2_h, sb2_h] = s.accumulated_variances(0.5);
    CHECK(s2_h == doctest::Approx(2.5375).epsilon(1e-13));
    CHECK(sb2_h == doctest::Approx(7.5125).epsilon(1e-13));
    // frozen oracle values from trapezoid integration at 1e6 panels
    CHECK(s2_h ==
          doctest::Approx(trapezoid_beta(s, 0.0, 0.5, 1000000)).epsilon(1e-10));
    CHECK(sb2_h ==
          doctest::Approx(trapezoid_beta(s, 0.5, 1.0, 1000000)).epsilon(1e-10));
}

TEST_CASE("cosine variances agree with the trapezoid oracle") {
    NoiseSchedule s = NoiseSchedule::cosine(0.1, 20.0);
    for (double t : {0.2, 0.5, 0.8}) {
        auto [s2, sb2] = s.accumulated_variances(t);
        CHECK(s2 ==
              doctest::Approx(trapezoid_beta(s, 0.0, t, 400000)).epsilon(1e-8));
        CHECK(sb2 ==
              doctest::Approx(trapezoid_beta(s, t, 1.0, 400000)).epsilon(1e-8));
    }
}

TEST_CASE("alpha_bar values") {
    NoiseSchedule s = NoiseSchedule::linear(0.1, 20.0);
    CHECK(s.alpha_bar(0.0) == 1.0);
    CHECK(s.alpha_bar(0.5) == doctest::Approx(std::exp(-2.5375)).epsilon(1e-13));
    CHECK(s.alpha_bar(1.0) == doctest::Approx(std::exp(-10.05)).epsilon(1e-13));
    // magnitudes from the closed-form exponents
    CHECK(s.alpha_bar(0.5) == doctest::Approx(0.07907).epsilon(1e-3));
    CHECK(s.alpha_bar(1.0) == doctest::Approx(4.32e-5).epsilon(1e-2));
}

TEST_CASE("bridge coefficients") {
    NoiseSchedule s = NoiseSchedule::linear(0.1, 20.0);
    auto [g0, S0] = s.bridge_coefficients(0.0);
    CHECK(g0 == 1.0);
    CHECK(S0 == 0.0);
    auto [g1, S1] = s.bridge_coefficients(1.0);
    CHECK(g1 == 0.0);
    CHECK(S1 == 0.0);
    auto [gh, Sh] = s.bridge_coefficients(0.5);
    // derived from the t=0.5 accumulated variances
    CHECK(gh == doctest::Approx(7.5125 / 10.05).epsilon(1e-13));
    CHECK(Sh == doctest::Approx(2.5375 * 7.5125 / 10.05).epsilon(1e-13));
}

TEST_CASE("mass identity, monotonicity, single interior maximum") {
    for (NoiseSchedule s :
         {NoiseSchedule::linear(0.1, 20.0), NoiseSchedule::cosine(0.1, 20.0)}) {
        double tol = s.kind() == NoiseSchedule::Kind::linear ? 1e-10 : 1e-8;
        double total = s.total_variance();
        double prev_ab = 2.0, prev_g = 2.0;
        for (int i = 0; i <= 100; ++i) {
            double t = i / 100.0;
            auto [s2, sb2] = s.accumulated_variances(t);
            CHECK(std::abs(s2 + sb2 - total) <= tol);
            double ab = s.alpha_bar(t);
            auto [g, S] = s.bridge_coefficients(t);
            CHECK(ab < prev_ab);
            CHECK(g < prev_g);
            if (i > 0 && i < 100) CHECK(S > 0.0);
            prev_ab = ab;
            prev_g = g;
        }
    }
}

TEST_CASE("big sigma rises then falls exactly once") {
    NoiseSchedule s = NoiseSchedule::linear(0.1, 20.0);
    bool falling = false;
    double prev = 0.0;
    for (int i = 1; i <= 100; ++i) {
        double S = s.bridge_coefficients(i / 100.0).second;
        if (S < prev) falling = true;
        if (falling) CHECK(S <= prev);  // no second rise
        prev = S;
    }
    CHECK(falling);
}

TEST_CASE("uniform t sampler stays in range and is deterministic") {
    TimeSampler sampler;
    sampler.mode = TimeSampler::Mode::uniform;
    sampler.lo = 0.02;
    sampler.hi = 0.5;
    sampler.total_iterations = 2000;
    sampler.rng_seed = 7;
    for (int i = 0; i < 2000; ++i) {
        double t = sampler.sample_t(i);
        CHECK(t >= 0.02);
        CHECK(t <= 0.5);
    }
    CHECK(sampler.sample_t(0) == sampler.sample_t(0));
    CHECK(sampler.sample_t(13) == sampler.sample_t(13));
}

TEST_CASE("annealed window shrinks to the floor") {
    TimeSampler sampler;
    sampler.mode = TimeSampler::Mode::annealed;
    sampler.lo = 0.02;
    sampler.hi = 0.5;
    sampler.total_iterations = 1700;
    sampler.rng_seed = 7;
    double t_last = sampler.sample_t(1699);
    CHECK(t_last >= 0.02);
    CHECK(t_last <= 0.03);

    // binned statistical monotonicity: per-bucket max never increases
    const int buckets = 10;
    const int reps = 1000;  // distinct seeds per bucket give >= 1000 draws
    double prev_max = 1.0;
    for (int b = 0; b < buckets; ++b) {
        double mx = 0.0;
        for (int r = 0; r < reps; ++r) {
            TimeSampler s2 = sampler;
            s2.rng_seed = 7 + r;
            std::int64_t iter = b * (1700 / buckets);
            mx = std::max(mx, s2.sample_t(iter));
        }
        CHECK(mx <= prev_max + 1e-12);
        prev_max = mx;
    }
}

TEST_CASE("two stage t prime sampler") {
    TimeSampler sampler;
    sampler.mode = TimeSampler::Mode::two_stage;
    sampler.lo = 0.02;
    sampler.hi = 0.7;
    sampler.hi_late = 0.5;
    sampler.stage_boundary = 700;
    sampler.total_iterations = 1700;
    sampler.rng_seed = 3;
    for (int i = 0; i < 700; i += 7) {
        double t = sampler.sample_t_prime(i);
        CHECK(t >= 0.02);
        CHECK(t <= 0.7);
    }
    for (int i = 700; i < 1700; i += 7) {
        double t = sampler.sample_t_prime(i);
        CHECK(t >= 0.02);
        CHECK(t <= 0.5);
    }
    CHECK(sampler.sample_t_prime(42) == sampler.sample_t_prime(42));

    TimeSampler wrong = sampler;
    wrong.mode = TimeSampler::Mode::uniform;
    CHECK_THROWS_AS((void)wrong.sample_t_prime(0), std::logic_error);
}
