// Serial vs OpenMP timing for the parallel kernels. Each kernel is run in
// both modes on the same inputs; results are checked for bitwise equality
// before the speedup is reported.
#include <chrono>
#include <cstdio>
#include <functional>

#include "trace/bridge.hpp"
#include "trace/metrics.hpp"
#include "trace/render.hpp"
#include "trace/score_model.hpp"
#include "trace/sde.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

using namespace trace;

namespace {

double time_once(const std::function<void()>& fn) {
    auto start = std::chrono::steady_clock::now();
    fn();
    auto end = std::chrono::steady_clock::now();
    return std::chrono::duration<double>(end - start).count();
}

void report(const char* name, double serial_s, double parallel_s,
            bool identical) {
    std::printf("%-24s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n",
                name, serial_s, parallel_s, serial_s / parallel_s,
                identical ? "bitwise-equal" : "MISMATCH");
}

GmmFamily bimodal_family() {
    GmmFamily family;
    Vec m0(2), m1(2), cov(2);
    m0 << -2.0, 0.0;
    m1 << 2.0, 0.0;
    cov << 0.25, 0.25;
    family.add(GmmDistribution({{0.5, m0, cov}, {0.5, m1, cov}}, 2));
    return family;
}

}  // namespace

int main() {
#ifdef _OPENMP
    std::printf("OpenMP threads: %d\n", omp_get_max_threads());
#else
    std::printf("OpenMP not enabled; both modes run serially\n");
#endif

    NoiseSchedule sched(NoiseSchedule::Kind::linear, 0.1, 20.0);
    GmmFamily family = bimodal_family();
    const GmmDistribution& gmm = family.member(0);
    AnalyticScoreModel model(family, sched);

    {
        Mat x0 = gmm.sample_n(7, 4000);
        SdeSpec spec{&sched, 256, 7};
        PathEnsemble a, b;
        double ts = time_once(
            [&] { a = simulate_forward(spec, x0, 1.0, Exec::serial); });
        double tp = time_once(
            [&] { b = simulate_forward(spec, x0, 1.0, Exec::parallel); });
        report("sde forward", ts, tp, a.samples == b.samples);
    }
    {
        Mat x1 = Mat::Random(4000, 2) * 3.0;
        SdeSpec spec{&sched, 256, 7};
        PathEnsemble a, b;
        double ts = time_once([&] {
            a = simulate_reverse(spec, x1, model, Condition::none(), 0.02,
                                 Exec::serial);
        });
        double tp = time_once([&] {
            b = simulate_reverse(spec, x1, model, Condition::none(), 0.02,
                                 Exec::parallel);
        });
        report("sde reverse", ts, tp, a.samples == b.samples);
    }
    {
        Vec tgt(2), src(2);
        tgt << -2.0, 0.0;
        src << 2.0, 0.0;
        BridgeEndpoints ep{tgt, src};
        Mat a, b;
        double ts = time_once([&] {
            a = simulate_bridge_paths(ep, sched, 4000, 256, 0.5, 11, 1e-3,
                                      Exec::serial);
        });
        double tp = time_once([&] {
            b = simulate_bridge_paths(ep, sched, 4000, 256, 0.5, 11, 1e-3,
                                      Exec::parallel);
        });
        report("bridge paths", ts, tp, a == b);
    }
    {
        Splat2DGenerator gen(64, 128, 128);
        Vec theta = gen.initial_theta(3);
        Canvas a, b;
        double ts = 0, tp = 0;
        for (int r = 0; r < 20; ++r) {
            ts += time_once([&] {
                a = gen.render(theta, ViewTransform::identity(), Exec::serial);
            });
            tp += time_once([&] {
                b = gen.render(theta, ViewTransform::identity(),
                               Exec::parallel);
            });
        }
        report("splat render", ts, tp, a.data == b.data);

        Canvas grad(128, 128, 1);
        grad.data = Vec::Random(grad.size());
        Vec ga, gb;
        ts = tp = 0;
        for (int r = 0; r < 20; ++r) {
            ts += time_once([&] {
                ga = gen.render_vjp(theta, ViewTransform::identity(), grad,
                                    Exec::serial);
            });
            tp += time_once([&] {
                gb = gen.render_vjp(theta, ViewTransform::identity(), grad,
                                    Exec::parallel);
            });
        }
        report("splat vjp", ts, tp, ga == gb);
    }
    {
        Mat xs = gmm.sample_n(21, 8000);
        Mat ys = gmm.sample_n(22, 8000);
        double a = 0, b = 0;
        double ts = time_once([&] { a = sliced_w1(xs, ys, 64, 5, Exec::serial); });
        double tp = time_once(
            [&] { b = sliced_w1(xs, ys, 64, 5, Exec::parallel); });
        report("sliced w1", ts, tp, a == b);

        double ma = 0, mb = 0;
        ts = time_once([&] { ma = mmd_rbf(xs, ys, Exec::serial); });
        tp = time_once([&] { mb = mmd_rbf(xs, ys, Exec::parallel); });
        report("mmd rbf", ts, tp, ma == mb);
    }
    return 0;
}
