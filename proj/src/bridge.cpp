#include "trace/bridge.hpp"

#include <cmath>
#include <stdexcept>

namespace trace {

BridgePosteriorParams posterior_params(const BridgeEndpoints& endpoints,
                                       const NoiseSchedule& sched, double t) {
    if (endpoints.x_target.size() != endpoints.x_source.size())
        throw std::invalid_argument("endpoint dimension mismatch");
    auto [gamma, big_sigma] = sched.bridge_coefficients(t);
    auto [s2, sb2] = sched.accumulated_variances(t);
    (void)sb2;
    BridgePosteriorParams out;
    out.mu = gamma * endpoints.x_target + (1.0 - gamma) * endpoints.x_source;
    out.big_sigma = big_sigma;
    out.sigma_t = std::sqrt(s2);
    return out;
}

Vec posterior_sample(const BridgeEndpoints& endpoints,
                     const NoiseSchedule& sched, double t,
                     std::mt19937_64& eng) {
    if (t == 0.0) return endpoints.x_target;
    if (t == 1.0) return endpoints.x_source;
    BridgePosteriorParams p = posterior_params(endpoints, sched, t);
    double sd = std::sqrt(p.big_sigma);
    Vec x = p.mu;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        x[i] += sd * standard_normal(eng);
    return x;
}

SchrodingerFactors degenerate_factors(const GmmDistribution& p,
                                      const NoiseSchedule& sched) {
    if (sched.alpha_bar(1.0) >= 1e-3)
        throw std::invalid_argument(
            "degenerate factors need alpha_bar(1) < 1e-3; the t=1 marginal "
            "is not close enough to N(0, I)");

    SchrodingerFactors f;
    f.psi = [](const Vec&, double) { return 1.0; };
    f.psi_hat = [p, &sched](const Vec& x, double t) {
        return std::exp(p.diffused(sched, t).log_density(x));
    };
    f.marginal = f.psi_hat;
    // grad log Psi_hat computed via the diffused mixture's clean score:
    // a separate route from GmmDistribution::noisy_score's inline formula.
    f.neg_grad_log_psi_hat = [p, &sched](const Vec& x, double t) {
        return Vec(-p.diffused(sched, t).clean_score(x));
    };
    f.backward_drift = [p, &sched](const Vec& x, double t) {
        double b = sched.beta(t);
        Vec grad_log_psi_hat = p.diffused(sched, t).clean_score(x);
        return Vec(-0.5 * b * x - b * grad_log_psi_hat);
    };
    return f;
}

Mat simulate_bridge_paths(const BridgeEndpoints& endpoints,
                          const NoiseSchedule& sched, int n_paths, int n_steps,
                          double t_checkpoint, std::uint64_t seed,
                          double t_margin, Exec exec) {
    if (n_steps < 100) throw std::invalid_argument("n_steps >= 100");
    if (endpoints.x_target.size() != endpoints.x_source.size())
        throw std::invalid_argument("endpoint dimension mismatch");
    double t_end = std::fmin(t_checkpoint, 1.0 - t_margin);
    if (t_end <= 0.0) throw std::domain_error("checkpoint must be positive");

    const int dim = static_cast<int>(endpoints.x_target.size());
    const double dt = t_end / n_steps;
    Mat out(n_paths, dim);

#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int pidx = 0; pidx < n_paths; ++pidx) {
        auto eng = make_engine(seed, stream::bridge_path, pidx);
        Vec x = endpoints.x_target;
        for (int s = 0; s < n_steps; ++s) {
            double t = s * dt;
            double b = sched.beta(t);
            auto [s2, sb2] = sched.accumulated_variances(t);
            (void)s2;
            double diff = std::sqrt(b * dt);
            for (int i = 0; i < dim; ++i) {
                double drift = b * (endpoints.x_source[i] - x[i]) / sb2;
                x[i] += drift * dt + diff * standard_normal(eng);
            }
            if (!x.allFinite())
                throw std::runtime_error("bridge path blow-up near t=1");
        }
        out.row(pidx) = x.transpose();
    }
    return out;
}

}  // namespace trace
