#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trace/bridge.hpp"
#include "trace/metrics.hpp"
#include "trace/nn.hpp"
#include "trace/render.hpp"
#include "trace/schedule.hpp"
#include "trace/score_model.hpp"

namespace trace {

enum class Method { sds, trace };
enum class WeightKind { constant, sigma_scaled };

struct DistillConfig {
    double cfg_weight = 20.0;
    WeightKind weight_fn = WeightKind::constant;
    TimeSampler t_sampler;        // bridge time t, annealed [0.02, 0.5]
    TimeSampler t_prime_sampler;  // denoising time t', two-stage
    std::int64_t total_iterations = 1700;
    std::int64_t stage_boundary = 700;
    double eta_theta = 1e-3;
    double eta_phi = 1e-3;
    int batch_views = 1;
    int condition_id = 0;
    std::int64_t metric_interval = 100;
    int metric_views = 64;
    bool renoise_before_predict = false;  // DDIM-style ablation, default off
    ViewRanges view_ranges = ViewRanges::identity_only();
    std::uint64_t rng_seed = 0;

    static DistillConfig defaults();  // paper-default samplers and counts

    double weight(const NoiseSchedule& sched, double t) const;
};

struct PredictedTarget {
    Vec x0_pred;
    double t_prime = 0.0;
    Vec eps_pretrain_output;
};

// One-step denoised target:
// x0_pred = (x_rndr - sqrt(1 - ab(t')) * eps(x_rndr, t', y)) / sqrt(ab(t')).
// The clean rendering is fed to the predictor as-is unless renoise is set.
PredictedTarget predict_x0(const Vec& x_rndr, double t_prime,
                           const Condition& y, const ViewTransform& c,
                           const ScoreModel& pretrained,
                           const NoiseSchedule& sched,
                           bool renoise = false,
                           std::uint64_t noise_seed = 0);

// Classic score distillation: w(t) (eps_pred - eps) pulled back through the
// render Jacobian. `pretrained` should already carry CFG if wanted.
Vec sds_grad(const Generator& gen, const Vec& theta, const ViewTransform& c,
             const Condition& y, const ScoreModel& pretrained,
             const NoiseSchedule& sched, const DistillConfig& cfg,
             std::int64_t iter);

struct TraceGradResult {
    Vec grad_theta;
    BridgeTuple tuple;  // consumed by the adapter update
};

// Bridge-residual distillation: w(t) (eps_phi(x_t) - (x_t - x_rndr)/sigma_t)
// through the render Jacobian, with x_t from the analytic bridge posterior
// between the one-step-denoised target and the rendering.
TraceGradResult trace_grad(const Generator& gen, const Vec& theta,
                           const ViewTransform& c, const Condition& y,
                           const ScoreModel& pretrained,
                           const ScoreModel& adapter_model,
                           const NoiseSchedule& sched_bridge,
                           const NoiseSchedule& sched_pretrain,
                           const DistillConfig& cfg, std::int64_t iter);

struct IterationRecord {
    std::int64_t iter = 0;
    double t = 0.0;
    double t_prime = 0.0;      // NaN for SDS
    double phi_loss = 0.0;     // NaN for SDS
    double grad_norm = 0.0;
    double sliced_w1 = 0.0;    // NaN when not measured this iteration
    double mmd = 0.0;
};

struct RunRecord {
    std::string config_digest;
    std::uint64_t seed = 0;
    Method method = Method::sds;
    bool aborted = false;
    std::string abort_reason;
    std::vector<IterationRecord> iterations;
    Vec final_theta;
    double final_sliced_w1 = 0.0;
    double final_mmd = 0.0;
};

// Full alternating loop: theta by plain gradient descent at eta_theta, and
// (for trace) one adapter step per iteration at eta_phi.
// `metric_reference` holds target samples in canvas space for sliced-W1.
using CheckpointHook = std::function<void(std::int64_t iter, const Vec& theta)>;

RunRecord run_distillation(const DistillConfig& cfg, const Generator& gen,
                           const Vec& theta0, const ScoreModel& prior,
                           const Mlp* base_mlp, AdapterParams* adapter,
                           Method method, const NoiseSchedule& sched_bridge,
                           const NoiseSchedule& sched_pretrain,
                           const Mat& metric_reference,
                           const CheckpointHook& checkpoint = {});

struct GradientFieldDump {
    Canvas signed_mean;
    Canvas magnitude;
    double draw_variance = 0.0;  // mean over pixels of variance across draws
};

GradientFieldDump dump_gradient_field(const Generator& gen, const Vec& theta,
                                      Method method, const ScoreModel& prior,
                                      const Mlp* base_mlp,
                                      const AdapterParams* adapter,
                                      const NoiseSchedule& sched_bridge,
                                      const NoiseSchedule& sched_pretrain,
                                      const DistillConfig& cfg,
                                      int n_draws = 256);

// Renders theta under `n` seeded views and stacks the flattened canvases.
Mat render_views(const Generator& gen, const Vec& theta, int n,
                 const ViewRanges& ranges, std::uint64_t seed);

}  // namespace trace
