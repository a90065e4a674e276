#include "trace/distill.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace trace {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Vec flatten(const Canvas& c) { return c.data; }

Canvas as_canvas(const Generator& gen, const Vec& v) {
    Canvas c(gen.canvas_height(), gen.canvas_width(), gen.canvas_channels());
    c.data = v;
    return c;
}

}  // namespace

DistillConfig DistillConfig::defaults() {
    DistillConfig cfg;
    cfg.t_sampler.mode = TimeSampler::Mode::annealed;
    cfg.t_sampler.lo = 0.02;
    cfg.t_sampler.hi = 0.5;
    cfg.t_sampler.total_iterations = cfg.total_iterations;
    cfg.t_prime_sampler.mode = TimeSampler::Mode::two_stage;
    cfg.t_prime_sampler.lo = 0.02;
    cfg.t_prime_sampler.hi = 0.7;
    cfg.t_prime_sampler.hi_late = 0.5;
    cfg.t_prime_sampler.stage_boundary = cfg.stage_boundary;
    cfg.t_prime_sampler.total_iterations = cfg.total_iterations;
    return cfg;
}

double DistillConfig::weight(const NoiseSchedule& sched, double t) const {
    switch (weight_fn) {
        case WeightKind::constant:
            return 1.0;
        case WeightKind::sigma_scaled:
            return std::sqrt(1.0 - sched.alpha_bar(t));
    }
    throw std::logic_error("unreachable");
}

PredictedTarget predict_x0(const Vec& x_rndr, double t_prime,
                           const Condition& y, const ViewTransform& c,
                           const ScoreModel& pretrained,
                           const NoiseSchedule& sched, bool renoise,
                           std::uint64_t noise_seed) {
    if (t_prime <= 0.0 || t_prime >= 1.0)
        throw std::domain_error("t' must lie in (0,1)");
    double ab = sched.alpha_bar(t_prime);
    Vec input = x_rndr;
    if (renoise) {
        auto eng = make_engine(noise_seed, stream::distill_noise, 0x4e01);
        for (Eigen::Index i = 0; i < input.size(); ++i)
            input[i] = std::sqrt(ab) * x_rndr[i] +
                       std::sqrt(1.0 - ab) * standard_normal(eng);
    }
    PredictedTarget out;
    out.t_prime = t_prime;
    out.eps_pretrain_output = pretrained.epsilon(input, t_prime, y, c);
    out.x0_pred = (x_rndr - std::sqrt(1.0 - ab) * out.eps_pretrain_output) /
                  std::sqrt(ab);
    return out;
}

Vec sds_grad(const Generator& gen, const Vec& theta, const ViewTransform& c,
             const Condition& y, const ScoreModel& pretrained,
             const NoiseSchedule& sched, const DistillConfig& cfg,
             std::int64_t iter) {
    Vec x_rndr = flatten(gen.render(theta, c));
    double t = cfg.t_sampler.sample_t(iter);
    double ab = sched.alpha_bar(t);

    auto eng = make_engine(cfg.rng_seed, stream::distill_noise, iter);
    Vec eps(x_rndr.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = standard_normal(eng);

    Vec x_t = std::sqrt(ab) * x_rndr + std::sqrt(1.0 - ab) * eps;
    Vec eps_pred = pretrained.epsilon(x_t, t, y, c);
    Vec canvas_grad = cfg.weight(sched, t) * (eps_pred - eps);
    return gen.render_vjp(theta, c, as_canvas(gen, canvas_grad));
}

TraceGradResult trace_grad(const Generator& gen, const Vec& theta,
                           const ViewTransform& c, const Condition& y,
                           const ScoreModel& pretrained,
                           const ScoreModel& adapter_model,
                           const NoiseSchedule& sched_bridge,
                           const NoiseSchedule& sched_pretrain,
                           const DistillConfig& cfg, std::int64_t iter) {
    Vec x_rndr = flatten(gen.render(theta, c));

    double t_prime = cfg.t_prime_sampler.sample_t_prime(iter);
    PredictedTarget pred =
        predict_x0(x_rndr, t_prime, y, c, pretrained, sched_pretrain,
                   cfg.renoise_before_predict,
                   cfg.rng_seed ^ static_cast<std::uint64_t>(iter));

    double t = cfg.t_sampler.sample_t(iter);
    BridgeEndpoints ends{pred.x0_pred, x_rndr};
    BridgePosteriorParams post = posterior_params(ends, sched_bridge, t);

    auto eng = make_engine(cfg.rng_seed, stream::distill_noise, iter);
    Vec z(x_rndr.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = standard_normal(eng);
    Vec x_t = post.mu + std::sqrt(post.big_sigma) * z;

    Vec eps_phi = adapter_model.epsilon(x_t, t, y, c);
    Vec residual = (x_t - x_rndr) / post.sigma_t;
    Vec canvas_grad = cfg.weight(sched_bridge, t) * (eps_phi - residual);

    TraceGradResult out;
    out.grad_theta = gen.render_vjp(theta, c, as_canvas(gen, canvas_grad));
    out.tuple = BridgeTuple{pred.x0_pred, x_rndr, y, c, t, x_t, z};
    return out;
}

Mat render_views(const Generator& gen, const Vec& theta, int n,
                 const ViewRanges& ranges, std::uint64_t seed) {
    const int dim = gen.canvas_height() * gen.canvas_width() *
                    gen.canvas_channels();
    Mat out(n, dim);
    for (int i = 0; i < n; ++i) {
        ViewTransform v = sample_view(ranges, seed, i);
        out.row(i) = flatten(gen.render(theta, v)).transpose();
    }
    return out;
}

RunRecord run_distillation(const DistillConfig& cfg, const Generator& gen,
                           const Vec& theta0, const ScoreModel& prior,
                           const Mlp* base_mlp, AdapterParams* adapter,
                           Method method, const NoiseSchedule& sched_bridge,
                           const NoiseSchedule& sched_pretrain,
                           const Mat& metric_reference,
                           const CheckpointHook& checkpoint) {
    if (theta0.size() != gen.param_count())
        throw std::invalid_argument("theta0 size mismatch");
    if (method == Method::trace && (!base_mlp || !adapter))
        throw std::invalid_argument("trace needs a base model and adapter");

    RunRecord record;
    record.seed = cfg.rng_seed;
    record.method = method;

    GuidedScoreModel guided(prior, cfg.cfg_weight);
    Condition y = Condition::of(cfg.condition_id);
    Vec theta = theta0;

    AdamState phi_opt;
    phi_opt.lr = cfg.eta_phi;

    auto measure = [&](const Vec& th) -> MetricPair {
        if (metric_reference.rows() == 0) return {kNaN, kNaN};
        Mat rendered = render_views(gen, th, cfg.metric_views,
                                    cfg.view_ranges, cfg.rng_seed);
        return eval_metrics(rendered, metric_reference);
    };

    for (std::int64_t iter = 0; iter < cfg.total_iterations; ++iter) {
        ViewTransform view = sample_view(cfg.view_ranges, cfg.rng_seed, iter);
        IterationRecord rec;
        rec.iter = iter;
        rec.t_prime = kNaN;
        rec.phi_loss = kNaN;
        rec.sliced_w1 = kNaN;
        rec.mmd = kNaN;

        Vec grad;
        if (method == Method::sds) {
            grad = sds_grad(gen, theta, view, y, guided, sched_pretrain, cfg,
                            iter);
            rec.t = cfg.t_sampler.sample_t(iter);
        } else {
            MlpScoreModel adapter_model(*base_mlp, adapter);
            TraceGradResult r =
                trace_grad(gen, theta, view, y, guided, adapter_model,
                           sched_bridge, sched_pretrain, cfg, iter);
            grad = r.grad_theta;
            rec.t = r.tuple.t;
            rec.t_prime = cfg.t_prime_sampler.sample_t_prime(iter);
            rec.phi_loss = bridge_score_step(*base_mlp, *adapter, r.tuple,
                                             phi_opt);
        }

        theta -= cfg.eta_theta * grad;
        rec.grad_norm = grad.norm();

        if (!theta.allFinite()) {
            record.aborted = true;
            record.abort_reason =
                "NaN in theta at iteration " + std::to_string(iter);
            record.iterations.push_back(rec);
            record.final_theta = theta;
            return record;
        }

        if (cfg.metric_interval > 0 &&
            (iter % cfg.metric_interval == 0 ||
             iter + 1 == cfg.total_iterations)) {
            MetricPair m = measure(theta);
            rec.sliced_w1 = m.sliced_w1;
            rec.mmd = m.mmd_rbf;
        }
        record.iterations.push_back(rec);

        if (checkpoint &&
            (iter == 0 || iter == cfg.total_iterations / 2 ||
             iter + 1 == cfg.total_iterations))
            checkpoint(iter, theta);
    }

    record.final_theta = theta;
    MetricPair final_m = measure(theta);
    record.final_sliced_w1 = final_m.sliced_w1;
    record.final_mmd = final_m.mmd_rbf;
    return record;
}

GradientFieldDump dump_gradient_field(const Generator& gen, const Vec& theta,
                                      Method method, const ScoreModel& prior,
                                      const Mlp* base_mlp,
                                      const AdapterParams* adapter,
                                      const NoiseSchedule& sched_bridge,
                                      const NoiseSchedule& sched_pretrain,
                                      const DistillConfig& cfg, int n_draws) {
    GuidedScoreModel guided(prior, cfg.cfg_weight);
    Condition y = Condition::of(cfg.condition_id);
    ViewTransform view = ViewTransform::identity();
    const int dim = gen.canvas_height() * gen.canvas_width() *
                    gen.canvas_channels();

    // Draw-indexed config clone so every draw gets its own (t, eps) pair.
    DistillConfig draw_cfg = cfg;
    draw_cfg.t_sampler.mode = TimeSampler::Mode::uniform;
    draw_cfg.t_sampler.total_iterations = n_draws;
    draw_cfg.t_prime_sampler.total_iterations = n_draws;
    draw_cfg.t_prime_sampler.stage_boundary = n_draws;  // stay in stage 1

    Vec x_rndr = gen.render(theta, view).data;
    Vec mean = Vec::Zero(dim);
    Vec m2 = Vec::Zero(dim);

    for (int d = 0; d < n_draws; ++d) {
        Vec canvas_grad;
        if (method == Method::sds) {
            double t = draw_cfg.t_sampler.sample_t(d);
            double ab = sched_pretrain.alpha_bar(t);
            auto eng = make_engine(draw_cfg.rng_seed, stream::distill_noise, d);
            Vec eps(dim);
            for (int i = 0; i < dim; ++i) eps[i] = standard_normal(eng);
            Vec x_t = std::sqrt(ab) * x_rndr + std::sqrt(1.0 - ab) * eps;
            canvas_grad = draw_cfg.weight(sched_pretrain, t) *
                          (guided.epsilon(x_t, t, y, view) - eps);
        } else {
            MlpScoreModel adapter_model(*base_mlp, adapter);
            TraceGradResult r =
                trace_grad(gen, theta, view, y, guided, adapter_model,
                           sched_bridge, sched_pretrain, draw_cfg, d);
            double t = r.tuple.t;
            Vec residual = (r.tuple.x_t - r.tuple.x_rndr) /
                           posterior_params({r.tuple.x0_pred, r.tuple.x_rndr},
                                            sched_bridge, t)
                               .sigma_t;
            canvas_grad =
                draw_cfg.weight(sched_bridge, t) *
                (adapter_model.epsilon(r.tuple.x_t, t, y, view) - residual);
        }
        // Welford accumulation per pixel
        Vec delta = canvas_grad - mean;
        mean += delta / (d + 1);
        m2.array() += delta.array() * (canvas_grad - mean).array();
    }

    GradientFieldDump out;
    out.signed_mean = Canvas(gen.canvas_height(), gen.canvas_width(),
                             gen.canvas_channels());
    out.signed_mean.data = mean;
    out.magnitude = out.signed_mean;
    out.magnitude.data = mean.cwiseAbs();
    out.draw_variance = (m2 / std::max(1, n_draws - 1)).mean();
    return out;
}

}  // namespace trace
