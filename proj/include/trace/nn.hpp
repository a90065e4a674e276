#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "trace/bridge.hpp"
#include "trace/gmm.hpp"
#include "trace/score_model.hpp"

namespace trace {

// Fully-connected noise predictor with hand-derived backprop.
// Input layout: concat(x, 8-frequency sinusoidal embedding of t,
// condition one-hot (all zeros when unconditional), view coefficients
// relative to the identity transform).
struct Mlp {
    enum class Activation { tanh, silu };

    int x_dim = 0;
    int n_cond = 0;
    Activation act = Activation::tanh;
    std::vector<int> widths;  // input .. hidden .. output
    std::vector<Mat> weights;
    std::vector<Vec> biases;

    static constexpr int kTimeFeatures = 16;  // 8 frequencies, sin and cos
    static constexpr int kViewFeatures = 6;

    static int input_dim(int x_dim, int n_cond) {
        return x_dim + kTimeFeatures + n_cond + kViewFeatures;
    }

    static Mlp create(int x_dim, int n_cond, const std::vector<int>& hidden,
                      Activation act, std::uint64_t seed);

    static Vec assemble_input(int x_dim, int n_cond, const Vec& x, double t,
                              const Condition& y, const ViewTransform& c);

    std::size_t parameter_count() const;
    std::uint64_t weight_hash() const;  // order-sensitive hash of base params
};

// Low-rank residual on every layer: effective weight W + scale * A * B.
// A starts at zero so the adapted model initially equals the base model.
struct AdapterParams {
    int rank = 4;
    double scale = 1.0;
    std::vector<Mat> A;  // out x r
    std::vector<Mat> B;  // r x in

    static AdapterParams create(const Mlp& base, int rank, double scale,
                                std::uint64_t seed);
};

Vec mlp_forward(const Mlp& model, const AdapterParams* adapter, const Vec& x,
                double t, const Condition& y, const ViewTransform& c);

// Gradients of the batch-mean squared error (1/N) sum ||out - target||^2.
struct MlpGradient {
    std::vector<Mat> dW;  // base weights (empty when adapter_only)
    std::vector<Vec> db;
    std::vector<Mat> dA;  // adapter factors (empty when base spec)
    std::vector<Mat> dB;
    double loss = 0.0;  // mean squared error over the batch
};

enum class TrainScope { base, adapter };

struct MlpBatch {
    std::vector<Vec> x;
    std::vector<double> t;
    std::vector<Condition> y;
    std::vector<ViewTransform> c;
    std::vector<Vec> target;
};

MlpGradient mlp_grad(const Mlp& model, const AdapterParams* adapter,
                     const MlpBatch& batch, TrainScope scope);

struct AdamState {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<Mat> mW, vW;
    std::vector<Vec> mb, vb;
};

struct TrainHyper {
    std::int64_t steps = 20000;
    int batch_size = 128;
    double lr = 1e-3;
    double t_lo = 0.02;
    double t_hi = 0.98;
    double cond_dropout = 0.2;  // probability of training unconditionally
    std::uint64_t rng_seed = 0;
};

struct TrainReport {
    std::vector<double> losses;
    double wall_clock_seconds = 0.0;
};

// Denoising score matching:
// L = E || eps_hat(sqrt(ab) x0 + sqrt(1-ab) eps, t, y) - eps ||^2.
// The sampler draws a clean data point and its condition id.
using DataSampler = std::function<std::pair<Vec, int>(std::mt19937_64&)>;

TrainReport train_dsm(Mlp& model, const DataSampler& sampler, int n_cond,
                      const NoiseSchedule& sched, const TrainHyper& hyper);

TrainReport train_dsm(Mlp& model, const GmmFamily& family,
                      const NoiseSchedule& sched, const TrainHyper& hyper);

// Snapshot persistence: JSON manifest plus a flat text tensor dump with
// %.17g values, so save -> load round trips bit-exactly.
void save_model(const Mlp& model, const AdapterParams* adapter,
                const std::string& manifest_path, const std::string& data_path);
Mlp load_model(const std::string& manifest_path, const std::string& data_path,
               AdapterParams* adapter_out = nullptr);

// One bridge-score tuple: the adapter regresses onto the standard-normal
// draw used inside the posterior sample.
struct BridgeTuple {
    Vec x0_pred;
    Vec x_rndr;
    Condition y;
    ViewTransform c;
    double t = 0.5;
    Vec x_t;
    Vec z;
};

double bridge_score_step(const Mlp& base, AdapterParams& adapter,
                         const BridgeTuple& tuple, AdamState& opt);

// Streams tuples from a callback and takes one adapter step each;
// base weights are never touched.
template <typename Stream>
TrainReport train_bridge_score(const Mlp& base, AdapterParams& adapter,
                               Stream&& next_tuple, std::int64_t steps,
                               double lr) {
    AdamState opt;
    opt.lr = lr;
    TrainReport report;
    report.losses.reserve(steps);
    for (std::int64_t s = 0; s < steps; ++s)
        report.losses.push_back(bridge_score_step(base, adapter, next_tuple(s), opt));
    return report;
}

// ScoreModel facade over the (optionally adapted) MLP.
class MlpScoreModel : public ScoreModel {
public:
    MlpScoreModel(const Mlp& model, const AdapterParams* adapter = nullptr)
        : model_(&model), adapter_(adapter) {}

    Vec epsilon(const Vec& x, double t, const Condition& y,
                const ViewTransform& c) const override {
        return mlp_forward(*model_, adapter_, x, t, y, c);
    }
    int dimension() const override { return model_->x_dim; }

private:
    const Mlp* model_;
    const AdapterParams* adapter_;
};

}  // namespace trace
