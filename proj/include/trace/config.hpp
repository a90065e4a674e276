#pragma once

#include <memory>
#include <string>

#include "trace/distill.hpp"
#include "trace/gmm.hpp"
#include "trace/nn.hpp"
#include "trace/render.hpp"
#include "trace/schedule.hpp"

namespace trace {

// Declarative run description. Parsing is strict: unknown keys anywhere in
// the document are rejected, and cross-module dimension constraints are
// validated before any computation starts.
struct RunConfig {
    std::uint64_t seed = 0;

    NoiseSchedule::Kind schedule_kind = NoiseSchedule::Kind::linear;
    double beta_min = 0.1;
    double beta_max = 20.0;
    // the bridge may use its own schedule; defaults to the same values
    NoiseSchedule::Kind bridge_kind = NoiseSchedule::Kind::linear;
    double bridge_beta_min = 0.1;
    double bridge_beta_max = 20.0;

    struct GeneratorSpec {
        enum class Type { direct_field, splat2d };
        Type type = Type::direct_field;
        int height = 1;
        int width = 2;
        int channels = 1;
        int n_splats = 16;
        double background = 0.0;
        // explicit starting parameters; empty means the generator's
        // seeded random initialisation
        std::vector<double> theta_init;
    } generator;

    struct ModelSpec {
        std::vector<int> hidden = {64, 64};
        Mlp::Activation activation = Mlp::Activation::tanh;
        int adapter_rank = 4;
        double adapter_scale = 1.0;
    } model;

    int projection_latent_dim = 0;  // 0: prior lives directly on canvas space

    std::vector<std::vector<GmmDistribution::Component>> family_spec;

    DistillConfig distill = DistillConfig::defaults();
    TrainHyper train;
    std::int64_t dsm_pretrain_steps = 2000;
    int metric_samples = 4096;

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse_json(const std::string& text);
    std::string serialize() const;
    std::string digest() const;  // hash of the canonical serialization

    // Builders (validated against each other).
    NoiseSchedule make_schedule() const;
    NoiseSchedule make_bridge_schedule() const;
    GmmFamily make_family() const;
    std::unique_ptr<Generator> make_generator() const;
    Vec make_theta0(const Generator& gen) const;
    int canvas_dim() const;
    int prior_dim() const;  // dimension the GMM family must have
    void validate() const;
};

}  // namespace trace
