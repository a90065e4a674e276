#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "trace/config.hpp"
#include "trace/io.hpp"
#include "trace/verify.hpp"

using namespace trace;

namespace {

std::string default_config_text() {
    std::ifstream in(std::string(TEST_CONFIG_DIR) + "/default.json");
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

TEST_CASE("shipped default config parses and validates") {
    RunConfig cfg = RunConfig::parse_json(default_config_text());
    CHECK(cfg.canvas_dim() == 2);
    CHECK(cfg.family_spec.size() == 2);
    CHECK(cfg.distill.cfg_weight == 20.0);
    CHECK(cfg.distill.total_iterations == 1700);
    CHECK(cfg.distill.stage_boundary == 700);
    CHECK(cfg.distill.t_prime_sampler.mode == TimeSampler::Mode::two_stage);
    CHECK(cfg.distill.t_sampler.mode == TimeSampler::Mode::annealed);
}

TEST_CASE("round trip is idempotent") {
    RunConfig cfg = RunConfig::parse_json(default_config_text());
    std::string once = cfg.serialize();
    RunConfig cfg2 = RunConfig::parse_json(once);
    std::string twice = cfg2.serialize();
    CHECK(once == twice);
    CHECK(cfg.digest() == cfg2.digest());
}

TEST_CASE("unknown keys are rejected at every level") {
    CHECK_THROWS_WITH_AS(
        (void)RunConfig::parse_json(
            R"({"seed": 0, "bogus": 1, "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        doctest::Contains("bogus"), std::invalid_argument);
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"schedule": {"kind": "linear", "betamax": 3}, "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"distill": {"cfg": 20}, "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        std::invalid_argument);
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1], "rho": 0}]]})"),
        std::invalid_argument);
}

TEST_CASE("cross-module validation") {
    // GMM dimension must match the canvas when no projection is set
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"generator": {"height": 1, "width": 3},
                "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        std::invalid_argument);
    // condition id outside the registered family
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"distill": {"condition_id": 3},
                "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        std::invalid_argument);
    // stage boundary must split the run
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"distill": {"total_iterations": 100, "stage_boundary": 100},
                "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        std::invalid_argument);
    // empty family
    CHECK_THROWS_AS((void)RunConfig::parse_json(R"({"seed": 1})"),
                    std::invalid_argument);
    // starting parameters must fit the generator
    CHECK_THROWS_AS(
        (void)RunConfig::parse_json(
            R"({"generator": {"theta_init": [0, 0, 0]},
                "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})"),
        std::invalid_argument);
}

TEST_CASE("seed threads into every sampler") {
    std::string text =
        R"({"seed": 42, "gmm_family": [[{"weight": 1.0, "mean": [0, 0], "cov_diag": [1, 1]}]]})";
    RunConfig cfg = RunConfig::parse_json(text);
    CHECK(cfg.distill.rng_seed == 42);
    CHECK(cfg.distill.t_sampler.rng_seed == 42);
    CHECK(cfg.distill.t_prime_sampler.rng_seed == (42 ^ 0x9e37));
    CHECK(cfg.train.rng_seed == 42);
}

TEST_CASE("builders produce consistent objects") {
    RunConfig cfg = RunConfig::parse_json(default_config_text());
    NoiseSchedule s = cfg.make_schedule();
    CHECK(s.beta(0.0) == 0.1);
    GmmFamily fam = cfg.make_family();
    CHECK(fam.size() == 2);
    auto gen = cfg.make_generator();
    CHECK(gen->param_count() == 2);
}

TEST_CASE("digest changes with content") {
    RunConfig a = RunConfig::parse_json(default_config_text());
    RunConfig b = a;
    b.seed = a.seed + 1;
    CHECK(a.digest() != b.digest());
}

TEST_CASE("format_double round trips doubles exactly") {
    for (double v : {0.1, 1.0 / 3.0, 2.5375, 1e-300, -7.25}) {
        CHECK(std::stod(format_double(v)) == v);
    }
    // identical values always print identically
    CHECK(format_double(0.30000000000000004) ==
          format_double(0.1 + 0.2));
}

TEST_CASE("verification suite passes on a clean build") {
    auto results = run_verification({.seed = 0, .gamma_perturbation = 0.0,
                                     .quick = true});
    CHECK(results.size() >= 12);
    for (const auto& r : results) {
        INFO(r.name);
        CHECK(r.pass);
    }
}

TEST_CASE("gamma fault injection trips the bridge-moment check") {
    auto results = run_verification({.seed = 0, .gamma_perturbation = 1e-3,
                                     .quick = true});
    bool bridge_failed = false;
    for (const auto& r : results)
        if (!r.pass && r.name.find("bridge") != std::string::npos)
            bridge_failed = true;
    CHECK(bridge_failed);
}

TEST_CASE("verification report is deterministic") {
    auto a = run_verification({.seed = 3, .gamma_perturbation = 0.0,
                               .quick = true});
    auto b = run_verification({.seed = 3, .gamma_perturbation = 0.0,
                               .quick = true});
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].name == b[i].name);
        CHECK(a[i].value == b[i].value);
        CHECK(a[i].pass == b[i].pass);
    }
}
