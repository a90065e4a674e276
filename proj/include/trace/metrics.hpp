#pragma once

#include <cstdint>

#include "trace/gmm.hpp"

namespace trace {

struct MetricPair {
    double sliced_w1 = 0.0;
    double mmd_rbf = 0.0;
};

// Sliced Wasserstein-1 over n_projections random unit directions (sorted
// 1D transport) plus RBF-MMD with a median-heuristic bandwidth.
MetricPair eval_metrics(const Mat& samples_a, const Mat& samples_b,
                        int n_projections = 64, std::uint64_t seed = 0,
                        Exec exec = Exec::parallel);

double sliced_w1(const Mat& samples_a, const Mat& samples_b,
                 int n_projections = 64, std::uint64_t seed = 0,
                 Exec exec = Exec::parallel);

double mmd_rbf(const Mat& samples_a, const Mat& samples_b,
               Exec exec = Exec::parallel);

}  // namespace trace
