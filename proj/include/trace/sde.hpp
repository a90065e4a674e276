#pragma once

#include <cstdint>

#include "trace/gmm.hpp"
#include "trace/schedule.hpp"
#include "trace/score_model.hpp"

namespace trace {

struct SdeSpec {
    const NoiseSchedule* schedule = nullptr;
    int n_steps = 1000;
    std::uint64_t rng_seed = 0;
};

struct PathEnsemble {
    enum class Provenance { forward, reverse };

    Mat samples;  // n_paths x dimension
    double time = 0.0;
    Provenance provenance = Provenance::forward;
};

// Euler-Maruyama for the VP forward SDE dX = -1/2 beta X dt + sqrt(beta) dW,
// integrated from t=0 to t_end. Per-path RNG streams derive from
// (seed, path index): serial and parallel execution agree bitwise.
PathEnsemble simulate_forward(const SdeSpec& spec, const Mat& x0_samples,
                              double t_end, Exec exec = Exec::parallel);

// Reverse-time SDE dX = [f - beta * score] dt + sqrt(beta) dW_bar,
// integrated from t=1 down to t_lo (default 0.02; the score blows up at 0).
PathEnsemble simulate_reverse(const SdeSpec& spec, const Mat& x1_samples,
                              const ScoreModel& score, const Condition& y,
                              double t_lo = 0.02, Exec exec = Exec::parallel);

// Drift of the SGM reverse SDE, f(x) - beta * grad log p(x,t), assembled
// from the mixture's noisy score. One half of the collapse cross-check;
// the bridge module builds the same drift through its Schrodinger factors.
Vec sgm_reverse_drift(const GmmDistribution& p, const NoiseSchedule& sched,
                      const Vec& x, double t);

}  // namespace trace
