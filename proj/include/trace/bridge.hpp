#pragma once

#include <functional>

#include "trace/gmm.hpp"
#include "trace/schedule.hpp"

namespace trace {

struct BridgeEndpoints {
    Vec x_target;  // X0 <- predicted clean target
    Vec x_source;  // X1 <- current rendering
};

struct BridgePosteriorParams {
    Vec mu;            // gamma * x_target + (1 - gamma) * x_source
    double big_sigma;  // sigma^2 sigma_bar^2 / (sigma^2 + sigma_bar^2)
    double sigma_t;    // sqrt(int_0^t beta)
};

// Degenerate Schrodinger factors of the SGM special case: Psi == 1 and
// Psi_hat equal to the diffused data density, so Psi * Psi_hat recovers
// the marginal by construction.
struct SchrodingerFactors {
    std::function<double(const Vec&, double)> psi;
    std::function<double(const Vec&, double)> psi_hat;
    std::function<double(const Vec&, double)> marginal;
    // backward drift f - beta * grad log Psi_hat, assembled independently
    // of the sde module's score path
    std::function<Vec(const Vec&, double)> backward_drift;
    std::function<Vec(const Vec&, double)> neg_grad_log_psi_hat;
};

BridgePosteriorParams posterior_params(const BridgeEndpoints& endpoints,
                                       const NoiseSchedule& sched, double t);

// x_t = mu + sqrt(Sigma) z. At t in {0,1} the variance is exactly zero and
// the endpoint is returned bitwise.
Vec posterior_sample(const BridgeEndpoints& endpoints,
                     const NoiseSchedule& sched, double t,
                     std::mt19937_64& eng);

// Requires alpha_bar(1) < 1e-3 so the t=1 marginal is close to N(0, I);
// otherwise the collapse premise fails and a config error is thrown.
SchrodingerFactors degenerate_factors(const GmmDistribution& p,
                                      const NoiseSchedule& sched);

// Pinned diffusion dX = beta_t (x_source - X)/sigma_bar_t^2 dt + sqrt(beta_t) dW
// from x_target at t=0; its time-t marginal is the analytic posterior.
// Integration stops at 1 - t_margin (the drift is stiff as sigma_bar -> 0).
Mat simulate_bridge_paths(const BridgeEndpoints& endpoints,
                          const NoiseSchedule& sched, int n_paths, int n_steps,
                          double t_checkpoint, std::uint64_t seed,
                          double t_margin = 1e-3, Exec exec = Exec::parallel);

}  // namespace trace
