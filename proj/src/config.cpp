#include "trace/config.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "trace/io.hpp"

namespace trace {
namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& where) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw std::invalid_argument("unknown config key '" + it.key() +
                                        "' in " + where);
}

NoiseSchedule::Kind parse_kind(const std::string& s) {
    if (s == "linear") return NoiseSchedule::Kind::linear;
    if (s == "cosine") return NoiseSchedule::Kind::cosine;
    throw std::invalid_argument("unknown schedule kind: " + s);
}

TimeSampler::Mode parse_mode(const std::string& s) {
    if (s == "uniform") return TimeSampler::Mode::uniform;
    if (s == "annealed") return TimeSampler::Mode::annealed;
    if (s == "two_stage") return TimeSampler::Mode::two_stage;
    throw std::invalid_argument("unknown sampler mode: " + s);
}

const char* kind_name(NoiseSchedule::Kind k) {
    return k == NoiseSchedule::Kind::linear ? "linear" : "cosine";
}

const char* mode_name(TimeSampler::Mode m) {
    switch (m) {
        case TimeSampler::Mode::uniform: return "uniform";
        case TimeSampler::Mode::annealed: return "annealed";
        case TimeSampler::Mode::two_stage: return "two_stage";
    }
    return "?";
}

void parse_sampler(const json& j, TimeSampler& s, const std::string& where) {
    reject_unknown(j, {"mode", "lo", "hi", "hi_late"}, where);
    if (j.contains("mode")) s.mode = parse_mode(j.at("mode"));
    if (j.contains("lo")) s.lo = j.at("lo");
    if (j.contains("hi")) s.hi = j.at("hi");
    if (j.contains("hi_late")) s.hi_late = j.at("hi_late");
}

json sampler_json(const TimeSampler& s) {
    return {{"mode", mode_name(s.mode)},
            {"lo", s.lo},
            {"hi", s.hi},
            {"hi_late", s.hi_late}};
}

}  // namespace

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_json(ss.str());
}

RunConfig RunConfig::parse_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig cfg;
    reject_unknown(j,
                   {"seed", "schedule", "bridge_schedule", "generator",
                    "model", "projection_latent_dim", "gmm_family", "distill",
                    "train", "dsm_pretrain_steps", "metric_samples"},
                   "top level");

    if (j.contains("seed")) cfg.seed = j.at("seed");

    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        reject_unknown(s, {"kind", "beta_min", "beta_max"}, "schedule");
        if (s.contains("kind")) cfg.schedule_kind = parse_kind(s.at("kind"));
        if (s.contains("beta_min")) cfg.beta_min = s.at("beta_min");
        if (s.contains("beta_max")) cfg.beta_max = s.at("beta_max");
        // bridge defaults to the pretrained schedule unless overridden
        cfg.bridge_kind = cfg.schedule_kind;
        cfg.bridge_beta_min = cfg.beta_min;
        cfg.bridge_beta_max = cfg.beta_max;
    }
    if (j.contains("bridge_schedule")) {
        const json& s = j.at("bridge_schedule");
        reject_unknown(s, {"kind", "beta_min", "beta_max"}, "bridge_schedule");
        if (s.contains("kind")) cfg.bridge_kind = parse_kind(s.at("kind"));
        if (s.contains("beta_min")) cfg.bridge_beta_min = s.at("beta_min");
        if (s.contains("beta_max")) cfg.bridge_beta_max = s.at("beta_max");
    }

    if (j.contains("generator")) {
        const json& g = j.at("generator");
        reject_unknown(g,
                       {"type", "height", "width", "channels", "n_splats",
                        "background", "theta_init"},
                       "generator");
        if (g.contains("type")) {
            std::string t = g.at("type");
            if (t == "direct_field")
                cfg.generator.type = GeneratorSpec::Type::direct_field;
            else if (t == "splat2d")
                cfg.generator.type = GeneratorSpec::Type::splat2d;
            else
                throw std::invalid_argument("unknown generator type: " + t);
        }
        if (g.contains("height")) cfg.generator.height = g.at("height");
        if (g.contains("width")) cfg.generator.width = g.at("width");
        if (g.contains("channels")) cfg.generator.channels = g.at("channels");
        if (g.contains("n_splats")) cfg.generator.n_splats = g.at("n_splats");
        if (g.contains("background"))
            cfg.generator.background = g.at("background");
        if (g.contains("theta_init"))
            cfg.generator.theta_init =
                g.at("theta_init").get<std::vector<double>>();
    }

    if (j.contains("model")) {
        const json& m = j.at("model");
        reject_unknown(m, {"hidden", "activation", "adapter_rank",
                           "adapter_scale"},
                       "model");
        if (m.contains("hidden"))
            cfg.model.hidden = m.at("hidden").get<std::vector<int>>();
        if (m.contains("activation")) {
            std::string a = m.at("activation");
            if (a == "tanh")
                cfg.model.activation = Mlp::Activation::tanh;
            else if (a == "silu")
                cfg.model.activation = Mlp::Activation::silu;
            else
                throw std::invalid_argument("unknown activation: " + a);
        }
        if (m.contains("adapter_rank"))
            cfg.model.adapter_rank = m.at("adapter_rank");
        if (m.contains("adapter_scale"))
            cfg.model.adapter_scale = m.at("adapter_scale");
    }

    if (j.contains("projection_latent_dim"))
        cfg.projection_latent_dim = j.at("projection_latent_dim");

    if (j.contains("gmm_family")) {
        for (const json& member : j.at("gmm_family")) {
            std::vector<GmmDistribution::Component> comps;
            for (const json& c : member) {
                reject_unknown(c, {"weight", "mean", "cov_diag"},
                               "gmm component");
                GmmDistribution::Component comp;
                comp.weight = c.at("weight");
                auto mean = c.at("mean").get<std::vector<double>>();
                auto cov = c.at("cov_diag").get<std::vector<double>>();
                comp.mean = Eigen::Map<Vec>(mean.data(), mean.size());
                comp.cov_diag = Eigen::Map<Vec>(cov.data(), cov.size());
                comps.push_back(std::move(comp));
            }
            cfg.family_spec.push_back(std::move(comps));
        }
    }

    if (j.contains("distill")) {
        const json& d = j.at("distill");
        reject_unknown(d,
                       {"cfg_weight", "weight_fn", "total_iterations",
                        "stage_boundary", "eta_theta", "eta_phi", "batch_views",
                        "condition_id", "metric_interval", "metric_views",
                        "renoise_before_predict", "t_sampler",
                        "t_prime_sampler", "view"},
                       "distill");
        DistillConfig& dc = cfg.distill;
        if (d.contains("cfg_weight")) dc.cfg_weight = d.at("cfg_weight");
        if (d.contains("weight_fn")) {
            std::string w = d.at("weight_fn");
            if (w == "constant")
                dc.weight_fn = WeightKind::constant;
            else if (w == "sigma_scaled")
                dc.weight_fn = WeightKind::sigma_scaled;
            else
                throw std::invalid_argument("unknown weight_fn: " + w);
        }
        if (d.contains("total_iterations"))
            dc.total_iterations = d.at("total_iterations");
        if (d.contains("stage_boundary"))
            dc.stage_boundary = d.at("stage_boundary");
        if (d.contains("eta_theta")) dc.eta_theta = d.at("eta_theta");
        if (d.contains("eta_phi")) dc.eta_phi = d.at("eta_phi");
        if (d.contains("batch_views")) dc.batch_views = d.at("batch_views");
        if (d.contains("condition_id")) dc.condition_id = d.at("condition_id");
        if (d.contains("metric_interval"))
            dc.metric_interval = d.at("metric_interval");
        if (d.contains("metric_views")) dc.metric_views = d.at("metric_views");
        if (d.contains("renoise_before_predict"))
            dc.renoise_before_predict = d.at("renoise_before_predict");
        if (d.contains("t_sampler"))
            parse_sampler(d.at("t_sampler"), dc.t_sampler, "t_sampler");
        if (d.contains("t_prime_sampler"))
            parse_sampler(d.at("t_prime_sampler"), dc.t_prime_sampler,
                          "t_prime_sampler");
        if (d.contains("view")) {
            const json& v = d.at("view");
            reject_unknown(v,
                           {"scale_lo", "scale_hi", "rot_lo", "rot_hi",
                            "trans_lo", "trans_hi"},
                           "view");
            ViewRanges& r = dc.view_ranges;
            if (v.contains("scale_lo")) r.scale_lo = v.at("scale_lo");
            if (v.contains("scale_hi")) r.scale_hi = v.at("scale_hi");
            if (v.contains("rot_lo")) r.rot_lo = v.at("rot_lo");
            if (v.contains("rot_hi")) r.rot_hi = v.at("rot_hi");
            if (v.contains("trans_lo")) r.trans_lo = v.at("trans_lo");
            if (v.contains("trans_hi")) r.trans_hi = v.at("trans_hi");
        }
        dc.t_sampler.total_iterations = dc.total_iterations;
        dc.t_sampler.stage_boundary = dc.stage_boundary;
        dc.t_prime_sampler.total_iterations = dc.total_iterations;
        dc.t_prime_sampler.stage_boundary = dc.stage_boundary;
    }

    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t,
                       {"steps", "batch_size", "lr", "t_lo", "t_hi",
                        "cond_dropout"},
                       "train");
        if (t.contains("steps")) cfg.train.steps = t.at("steps");
        if (t.contains("batch_size")) cfg.train.batch_size = t.at("batch_size");
        if (t.contains("lr")) cfg.train.lr = t.at("lr");
        if (t.contains("t_lo")) cfg.train.t_lo = t.at("t_lo");
        if (t.contains("t_hi")) cfg.train.t_hi = t.at("t_hi");
        if (t.contains("cond_dropout"))
            cfg.train.cond_dropout = t.at("cond_dropout");
    }

    if (j.contains("dsm_pretrain_steps"))
        cfg.dsm_pretrain_steps = j.at("dsm_pretrain_steps");
    if (j.contains("metric_samples"))
        cfg.metric_samples = j.at("metric_samples");

    // seed threads through every stochastic component
    cfg.distill.rng_seed = cfg.seed;
    cfg.distill.t_sampler.rng_seed = cfg.seed;
    cfg.distill.t_prime_sampler.rng_seed = cfg.seed ^ 0x9e37;
    cfg.train.rng_seed = cfg.seed;

    cfg.validate();
    return cfg;
}

std::string RunConfig::serialize() const {
    json j;
    j["seed"] = seed;
    j["schedule"] = {{"kind", kind_name(schedule_kind)},
                     {"beta_min", beta_min},
                     {"beta_max", beta_max}};
    j["bridge_schedule"] = {{"kind", kind_name(bridge_kind)},
                            {"beta_min", bridge_beta_min},
                            {"beta_max", bridge_beta_max}};
    j["generator"] = {
        {"type", generator.type == GeneratorSpec::Type::direct_field
                     ? "direct_field"
                     : "splat2d"},
        {"height", generator.height},
        {"width", generator.width},
        {"channels", generator.channels},
        {"n_splats", generator.n_splats},
        {"background", generator.background},
        {"theta_init", generator.theta_init}};
    j["model"] = {{"hidden", model.hidden},
                  {"activation",
                   model.activation == Mlp::Activation::tanh ? "tanh" : "silu"},
                  {"adapter_rank", model.adapter_rank},
                  {"adapter_scale", model.adapter_scale}};
    j["projection_latent_dim"] = projection_latent_dim;
    json fam = json::array();
    for (const auto& member : family_spec) {
        json m = json::array();
        for (const auto& c : member) {
            std::vector<double> mean(c.mean.data(), c.mean.data() + c.mean.size());
            std::vector<double> cov(c.cov_diag.data(),
                                    c.cov_diag.data() + c.cov_diag.size());
            m.push_back({{"weight", c.weight}, {"mean", mean}, {"cov_diag", cov}});
        }
        fam.push_back(m);
    }
    j["gmm_family"] = fam;
    j["distill"] = {
        {"cfg_weight", distill.cfg_weight},
        {"weight_fn",
         distill.weight_fn == WeightKind::constant ? "constant" : "sigma_scaled"},
        {"total_iterations", distill.total_iterations},
        {"stage_boundary", distill.stage_boundary},
        {"eta_theta", distill.eta_theta},
        {"eta_phi", distill.eta_phi},
        {"batch_views", distill.batch_views},
        {"condition_id", distill.condition_id},
        {"metric_interval", distill.metric_interval},
        {"metric_views", distill.metric_views},
        {"renoise_before_predict", distill.renoise_before_predict},
        {"t_sampler", sampler_json(distill.t_sampler)},
        {"t_prime_sampler", sampler_json(distill.t_prime_sampler)},
        {"view",
         {{"scale_lo", distill.view_ranges.scale_lo},
          {"scale_hi", distill.view_ranges.scale_hi},
          {"rot_lo", distill.view_ranges.rot_lo},
          {"rot_hi", distill.view_ranges.rot_hi},
          {"trans_lo", distill.view_ranges.trans_lo},
          {"trans_hi", distill.view_ranges.trans_hi}}}};
    j["train"] = {{"steps", train.steps},
                  {"batch_size", train.batch_size},
                  {"lr", train.lr},
                  {"t_lo", train.t_lo},
                  {"t_hi", train.t_hi},
                  {"cond_dropout", train.cond_dropout}};
    j["dsm_pretrain_steps"] = dsm_pretrain_steps;
    j["metric_samples"] = metric_samples;
    return j.dump(2);
}

std::string RunConfig::digest() const {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a(serialize())));
    return buf;
}

NoiseSchedule RunConfig::make_schedule() const {
    return NoiseSchedule(schedule_kind, beta_min, beta_max);
}

NoiseSchedule RunConfig::make_bridge_schedule() const {
    return NoiseSchedule(bridge_kind, bridge_beta_min, bridge_beta_max);
}

GmmFamily RunConfig::make_family() const {
    GmmFamily fam;
    int dim = prior_dim();
    for (const auto& comps : family_spec)
        fam.add(GmmDistribution(comps, dim));
    return fam;
}

std::unique_ptr<Generator> RunConfig::make_generator() const {
    if (generator.type == GeneratorSpec::Type::direct_field)
        return std::make_unique<DirectFieldGenerator>(
            generator.height, generator.width, generator.channels);
    return std::make_unique<Splat2DGenerator>(
        generator.n_splats, generator.height, generator.width,
        generator.channels, generator.background);
}

Vec RunConfig::make_theta0(const Generator& gen) const {
    if (generator.theta_init.empty()) return gen.initial_theta(seed);
    Vec theta(generator.theta_init.size());
    for (Eigen::Index i = 0; i < theta.size(); ++i)
        theta[i] = generator.theta_init[static_cast<std::size_t>(i)];
    return theta;
}

int RunConfig::canvas_dim() const {
    return generator.height * generator.width * generator.channels;
}

int RunConfig::prior_dim() const {
    return projection_latent_dim > 0 ? projection_latent_dim : canvas_dim();
}

void RunConfig::validate() const {
    if (beta_min <= 0.0 || beta_max < beta_min)
        throw std::invalid_argument("schedule: need 0 < beta_min <= beta_max");
    if (bridge_beta_min <= 0.0 || bridge_beta_max < bridge_beta_min)
        throw std::invalid_argument("bridge schedule: bad beta range");
    if (family_spec.empty())
        throw std::invalid_argument("gmm_family must list at least one GMM");
    for (const auto& comps : family_spec)
        for (const auto& c : comps)
            if (c.mean.size() != prior_dim() || c.cov_diag.size() != prior_dim())
                throw std::invalid_argument(
                    "GMM component dimension must match the prior dimension");
    if (projection_latent_dim < 0 || projection_latent_dim > canvas_dim())
        throw std::invalid_argument("projection_latent_dim out of range");
    if (!generator.theta_init.empty() &&
        static_cast<int>(generator.theta_init.size()) !=
            make_generator()->param_count())
        throw std::invalid_argument(
            "theta_init length must match the generator parameter count");
    if (distill.total_iterations < 0)
        throw std::invalid_argument("total_iterations must be >= 0");
    if (distill.total_iterations > 0 &&
        (distill.stage_boundary <= 0 ||
         distill.stage_boundary >= distill.total_iterations))
        throw std::invalid_argument("need 0 < stage_boundary < total_iterations");
    if (distill.eta_theta <= 0.0 || distill.eta_phi <= 0.0)
        throw std::invalid_argument("learning rates must be positive");
    if (distill.condition_id < 0 ||
        distill.condition_id >= static_cast<int>(family_spec.size()))
        throw std::invalid_argument("condition_id outside registered family");
    if (!(distill.t_sampler.lo >= 0.0 &&
          distill.t_sampler.lo < distill.t_sampler.hi &&
          distill.t_sampler.hi <= 1.0))
        throw std::invalid_argument("t_sampler range invalid");
    if (model.adapter_rank < 1)
        throw std::invalid_argument("adapter rank must be >= 1");
}

}  // namespace trace
