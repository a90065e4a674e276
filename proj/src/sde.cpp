#include "trace/sde.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace trace {
namespace {

void check_finite(const Vec& x, int step, const char* what) {
    if (!x.allFinite())
        throw std::runtime_error(std::string(what) +
                                 ": NaN/Inf at step " + std::to_string(step));
}

}  // namespace

PathEnsemble simulate_forward(const SdeSpec& spec, const Mat& x0_samples,
                              double t_end, Exec exec) {
    if (!spec.schedule) throw std::invalid_argument("null schedule");
    if (spec.n_steps < 1) throw std::invalid_argument("n_steps >= 1");
    if (t_end < 0.0 || t_end > 1.0)
        throw std::domain_error("t_end must lie in [0,1]");

    const NoiseSchedule& sched = *spec.schedule;
    const int n_paths = static_cast<int>(x0_samples.rows());
    const int dim = static_cast<int>(x0_samples.cols());
    Mat out(n_paths, dim);

    if (t_end == 0.0) {
        out = x0_samples;
        return {out, 0.0, PathEnsemble::Provenance::forward};
    }

    const double dt = t_end / spec.n_steps;
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int p = 0; p < n_paths; ++p) {
        auto eng = make_engine(spec.rng_seed, stream::sde_path, p);
        Vec x = x0_samples.row(p).transpose();
        for (int s = 0; s < spec.n_steps; ++s) {
            double t = s * dt;
            double b = sched.beta(t);
            double diff = std::sqrt(b * dt);
            for (int i = 0; i < dim; ++i)
                x[i] += -0.5 * b * x[i] * dt + diff * standard_normal(eng);
            check_finite(x, s, "simulate_forward");
        }
        out.row(p) = x.transpose();
    }
    return {out, t_end, PathEnsemble::Provenance::forward};
}

PathEnsemble simulate_reverse(const SdeSpec& spec, const Mat& x1_samples,
                              const ScoreModel& score, const Condition& y,
                              double t_lo, Exec exec) {
    if (!spec.schedule) throw std::invalid_argument("null schedule");
    if (spec.n_steps < 1) throw std::invalid_argument("n_steps >= 1");
    if (t_lo <= 0.0 || t_lo >= 1.0)
        throw std::domain_error("t_lo must lie in (0,1)");

    const NoiseSchedule& sched = *spec.schedule;
    const int n_paths = static_cast<int>(x1_samples.rows());
    const int dim = static_cast<int>(x1_samples.cols());
    const ViewTransform view = ViewTransform::identity();
    Mat out(n_paths, dim);

    const double dt = (1.0 - t_lo) / spec.n_steps;
#pragma omp parallel for schedule(static) if (exec == Exec::parallel)
    for (int p = 0; p < n_paths; ++p) {
        auto eng = make_engine(spec.rng_seed, stream::sde_path, p);
        Vec x = x1_samples.row(p).transpose();
        for (int s = 0; s < spec.n_steps; ++s) {
            double t = 1.0 - s * dt;
            double b = sched.beta(t);
            Vec sc = score_from_eps(score.epsilon(x, t, y, view), sched, t);
            double diff = std::sqrt(b * dt);
            for (int i = 0; i < dim; ++i) {
                double drift = -0.5 * b * x[i] - b * sc[i];
                x[i] += -drift * dt + diff * standard_normal(eng);
            }
            check_finite(x, s, "simulate_reverse");
        }
        out.row(p) = x.transpose();
    }
    return {out, t_lo, PathEnsemble::Provenance::reverse};
}

Vec sgm_reverse_drift(const GmmDistribution& p, const NoiseSchedule& sched,
                      const Vec& x, double t) {
    double b = sched.beta(t);
    return -0.5 * b * x - b * p.noisy_score(sched, x, t);
}

}  // namespace trace
