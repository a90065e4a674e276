#pragma once

#include <string>
#include <vector>

namespace trace {

struct CheckResult {
    std::string name;
    double value = 0.0;   // measured quantity
    double tolerance = 0.0;
    bool pass = false;
};

struct VerifyOptions {
    std::uint64_t seed = 0;
    // test hook: perturbs the gamma coefficient inside the bridge-moment
    // check so fault injection can be exercised
    double gamma_perturbation = 0.0;
    bool quick = false;  // smaller Monte-Carlo budgets
};

// Cross-module invariant suite: schedule identities, bridge moments,
// duality/collapse checks, finite-difference agreement for the renderer
// VJP and MLP backprop. Returns one result per check.
std::vector<CheckResult> run_verification(const VerifyOptions& opts = {});

}  // namespace trace
