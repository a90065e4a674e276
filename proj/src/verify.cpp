#include "trace/verify.hpp"

#include <cmath>

#include "trace/bridge.hpp"
#include "trace/distill.hpp"
#include "trace/nn.hpp"
#include "trace/render.hpp"
#include "trace/sde.hpp"

namespace trace {
namespace {

GmmDistribution bimodal_2d() {
    Vec m1(2), m2(2), cov(2);
    m1 << -2.0, 0.0;
    m2 << 2.0, 0.0;
    cov << 0.25, 0.25;
    return GmmDistribution({{0.5, m1, cov}, {0.5, m2, cov}}, 2);
}

CheckResult check(const std::string& name, double value, double tol) {
    return {name, value, tol, value <= tol};
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& opts) {
    std::vector<CheckResult> out;
    NoiseSchedule lin = NoiseSchedule::linear();
    NoiseSchedule cos = NoiseSchedule::cosine();

    // schedule mass identity on a 101-point grid
    for (const auto& [sched, name, tol] :
         {std::tuple<const NoiseSchedule*, const char*, double>{
              &lin, "schedule.mass_identity.linear", 1e-10},
          {&cos, "schedule.mass_identity.cosine", 1e-8}}) {
        double total = sched->total_variance();
        double worst = 0.0;
        for (int i = 0; i <= 100; ++i) {
            auto [s2, sb2] = sched->accumulated_variances(i / 100.0);
            worst = std::fmax(worst, std::abs(s2 + sb2 - total));
        }
        out.push_back(check(name, worst, tol));
    }

    // monotone gamma and alpha_bar; single interior maximum of Sigma
    {
        double violations = 0.0;
        double prev_g = 2.0, prev_ab = 2.0;
        int sign_changes = 0;
        double prev_sigma = 0.0, prev_d = 0.0;
        for (int i = 0; i <= 100; ++i) {
            double t = i / 100.0;
            auto [g, S] = lin.bridge_coefficients(t);
            double ab = lin.alpha_bar(t);
            if (i > 0) {
                if (g >= prev_g) violations += 1.0;
                if (ab >= prev_ab) violations += 1.0;
                double d = S - prev_sigma;
                if (i > 1 && d * prev_d < 0.0) ++sign_changes;
                prev_d = d;
            }
            prev_g = g;
            prev_ab = ab;
            prev_sigma = S;
        }
        if (sign_changes != 1) violations += 1.0;
        out.push_back(check("schedule.monotone_shape", violations, 0.0));
    }

    // annealed window: per-bucket max of sampled t non-increasing
    {
        TimeSampler ts;
        ts.mode = TimeSampler::Mode::annealed;
        ts.lo = 0.02;
        ts.hi = 0.5;
        ts.total_iterations = 10000;
        ts.rng_seed = opts.seed;
        double prev_max = 1.0, violations = 0.0;
        for (int b = 0; b < 10; ++b) {
            double bucket_max = 0.0;
            for (int i = 0; i < 1000; ++i)
                bucket_max = std::fmax(bucket_max, ts.sample_t(b * 1000 + i));
            if (bucket_max > prev_max + 1e-12) violations += 1.0;
            prev_max = bucket_max;
        }
        out.push_back(check("schedule.annealed_window", violations, 0.0));
    }

    // bridge endpoint pinning, bitwise
    {
        Vec a(2), b(2);
        a << 0.3, -1.2;
        b << 4.0, 2.5;
        BridgeEndpoints ends{a, b};
        auto eng = make_engine(opts.seed, stream::bridge_path, 1);
        Vec s0 = posterior_sample(ends, lin, 0.0, eng);
        Vec s1 = posterior_sample(ends, lin, 1.0, eng);
        double mism = (s0.array() != a.array()).any() +
                      (s1.array() != b.array()).any();
        out.push_back(check("bridge.endpoint_pinning", mism, 0.0));
    }

    // bridge posterior moments by Monte Carlo (with the fault-injection hook)
    {
        // endpoints far apart so a 1e-3 gamma fault moves the mean well
        // outside the Monte-Carlo band
        Vec a = Vec::Zero(2), b(2);
        b << 40.0, 0.0;
        BridgeEndpoints ends{a, b};
        double t = 0.5;
        auto [gamma, big_sigma] = lin.bridge_coefficients(t);
        gamma += opts.gamma_perturbation;
        Vec mu = gamma * a + (1.0 - gamma) * b;
        int n = opts.quick ? 200000 : 400000;
        Vec sum = Vec::Zero(2), sumsq = Vec::Zero(2);
        auto eng = make_engine(opts.seed, stream::bridge_path, 2);
        for (int i = 0; i < n; ++i) {
            Vec s = posterior_sample(ends, lin, t, eng);
            sum += s;
            sumsq.array() += s.array().square();
        }
        Vec mean = sum / n;
        Vec var = sumsq / n - mean.array().square().matrix();
        double se = 4.0 * std::sqrt(big_sigma / n);
        double mean_err = (mean - mu).cwiseAbs().maxCoeff();
        double var_err =
            ((var.array() - big_sigma).abs() / big_sigma).maxCoeff();
        out.push_back(check("bridge.posterior_mean_mc", mean_err, se));
        out.push_back(check("bridge.posterior_var_mc", var_err, 0.05));
    }

    // pinned-SDE marginal vs closed form at t = 0.5
    {
        Vec a = Vec::Zero(1), b(1);
        b << 3.0;
        BridgeEndpoints ends{a, b};
        double t = 0.5;
        int n = opts.quick ? 5000 : 20000;
        Mat paths = simulate_bridge_paths(ends, lin, n, 400, t, opts.seed);
        BridgePosteriorParams post = posterior_params(ends, lin, t);
        double mean = paths.col(0).mean();
        double var =
            (paths.col(0).array() - mean).square().sum() / (paths.rows() - 1);
        double se = 4.0 * std::sqrt(post.big_sigma / n) + 4.0 * 3.0 / 400.0;
        out.push_back(check("bridge.sde_marginal_mean",
                            std::abs(mean - post.mu[0]), se));
        out.push_back(check("bridge.sde_marginal_var",
                            std::abs(var - post.big_sigma) / post.big_sigma,
                            0.05));
    }

    // degenerate duality residual and drift collapse on a grid
    {
        GmmDistribution gmm = bimodal_2d();
        SchrodingerFactors f = degenerate_factors(gmm, lin);
        double worst_dual = 0.0, worst_drift = 0.0;
        for (int ti = 1; ti <= 9; ++ti) {
            double t = ti / 10.0;
            for (int i = 0; i < 50; ++i)
                for (int j = 0; j < 50; ++j) {
                    Vec x(2);
                    x << -4.0 + 8.0 * i / 49.0, -4.0 + 8.0 * j / 49.0;
                    double q = f.marginal(x, t);
                    worst_dual = std::fmax(
                        worst_dual, std::abs(f.psi(x, t) * f.psi_hat(x, t) - q));
                    Vec d1 = f.backward_drift(x, t);
                    Vec d2 = sgm_reverse_drift(gmm, lin, x, t);
                    worst_drift =
                        std::fmax(worst_drift, (d1 - d2).cwiseAbs().maxCoeff());
                }
        }
        out.push_back(check("bridge.duality_residual", worst_dual, 1e-12));
        out.push_back(check("collapse.drift_agreement", worst_drift, 1e-12));
    }

    // noisy GMM score vs finite differences of the diffused log-density
    {
        GmmDistribution gmm = bimodal_2d();
        auto eng = make_engine(opts.seed, stream::metric_proj, 3);
        double worst = 0.0;
        for (int k = 0; k < 100; ++k) {
            Vec x(2);
            x << uniform(eng, -3.0, 3.0), uniform(eng, -3.0, 3.0);
            double t = uniform(eng, 0.05, 0.95);
            Vec score = gmm.noisy_score(lin, x, t);
            GmmDistribution diff = gmm.diffused(lin, t);
            const double h = 1e-5;
            for (int d = 0; d < 2; ++d) {
                Vec xp = x, xm = x;
                xp[d] += h;
                xm[d] -= h;
                double fd =
                    (diff.log_density(xp) - diff.log_density(xm)) / (2.0 * h);
                worst = std::fmax(worst, std::abs(fd - score[d]) /
                                             std::fmax(1e-8, std::abs(score[d])));
            }
        }
        out.push_back(check("score.noisy_vs_fd", worst, 1e-5));
    }

    // eps <-> score round trip
    {
        auto eng = make_engine(opts.seed, stream::metric_proj, 4);
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            Vec e(3);
            e << standard_normal(eng), standard_normal(eng),
                standard_normal(eng);
            double t = uniform(eng, 0.05, 1.0);
            Vec rt = eps_from_score(score_from_eps(e, lin, t), lin, t);
            worst = std::fmax(worst, (rt - e).cwiseAbs().maxCoeff());
        }
        out.push_back(check("score.eps_round_trip", worst, 1e-12));
    }

    // splat renderer VJP vs central finite differences
    {
        int scenes = opts.quick ? 3 : 5;
        Splat2DGenerator gen(6, 12, 12, 1);
        double worst = 0.0;
        for (int s = 0; s < scenes; ++s) {
            Vec theta = gen.initial_theta(opts.seed + s);
            ViewTransform v = sample_view(ViewRanges{}, opts.seed, 100 + s);
            auto eng = make_engine(opts.seed, stream::metric_proj, 200 + s);
            Canvas gc(12, 12, 1);
            for (int i = 0; i < gc.size(); ++i)
                gc.data[i] = standard_normal(eng);
            Vec vjp = gen.render_vjp(theta, v, gc);
            auto loss = [&](const Vec& th) {
                return gen.render(th, v).data.dot(gc.data);
            };
            const double h = 1e-4;
            for (Eigen::Index i = 0; i < theta.size(); ++i) {
                Vec tp = theta, tm = theta;
                tp[i] += h;
                tm[i] -= h;
                double fd = (loss(tp) - loss(tm)) / (2.0 * h);
                double scale = std::fmax(1e-6, std::abs(fd));
                worst = std::fmax(worst, std::abs(fd - vjp[i]) / scale);
            }
        }
        out.push_back(check("render.vjp_vs_fd", worst, 1e-4));
    }

    // MLP backprop vs central finite differences
    {
        Mlp model = Mlp::create(2, 2, {8, 8}, Mlp::Activation::tanh, opts.seed);
        AdapterParams adapter = AdapterParams::create(model, 2, 1.0, opts.seed);
        // give A nonzero entries so adapter gradients are exercised
        for (auto& a : adapter.A) a.setConstant(0.05);
        auto eng = make_engine(opts.seed, stream::metric_proj, 5);
        MlpBatch batch;
        for (int i = 0; i < 4; ++i) {
            Vec x(2), tgt(2);
            x << standard_normal(eng), standard_normal(eng);
            tgt << standard_normal(eng), standard_normal(eng);
            batch.x.push_back(x);
            batch.t.push_back(uniform(eng, 0.1, 0.9));
            batch.y.push_back(Condition::of(static_cast<int>(eng() % 2)));
            batch.c.push_back(ViewTransform::identity());
            batch.target.push_back(tgt);
        }
        auto batch_loss = [&](const Mlp& m, const AdapterParams* ad) {
            double l = 0.0;
            for (std::size_t i = 0; i < batch.x.size(); ++i)
                l += (mlp_forward(m, ad, batch.x[i], batch.t[i], batch.y[i],
                                  batch.c[i]) -
                      batch.target[i])
                         .squaredNorm();
            return l / batch.x.size();
        };
        const double h = 1e-5;
        double worst = 0.0;
        MlpGradient gb = mlp_grad(model, &adapter, batch, TrainScope::base);
        for (std::size_t l = 0; l < model.weights.size(); ++l)
            for (Eigen::Index i = 0; i < model.weights[l].size(); ++i) {
                Mlp mp = model, mm = model;
                mp.weights[l].data()[i] += h;
                mm.weights[l].data()[i] -= h;
                double fd =
                    (batch_loss(mp, &adapter) - batch_loss(mm, &adapter)) /
                    (2.0 * h);
                double scale = std::fmax(1e-6, std::abs(fd));
                worst = std::fmax(
                    worst, std::abs(fd - gb.dW[l].data()[i]) / scale);
            }
        MlpGradient ga = mlp_grad(model, &adapter, batch, TrainScope::adapter);
        for (std::size_t l = 0; l < adapter.A.size(); ++l)
            for (Eigen::Index i = 0; i < adapter.A[l].size(); ++i) {
                AdapterParams ap = adapter, am = adapter;
                ap.A[l].data()[i] += h;
                am.A[l].data()[i] -= h;
                double fd =
                    (batch_loss(model, &ap) - batch_loss(model, &am)) /
                    (2.0 * h);
                double scale = std::fmax(1e-6, std::abs(fd));
                worst = std::fmax(
                    worst, std::abs(fd - ga.dA[l].data()[i]) / scale);
            }
        out.push_back(check("nn.backprop_vs_fd", worst, 1e-5));
    }

    // predict_x0 algebraic inversion
    {
        NoiseSchedule& sched = lin;
        struct PlantedModel : ScoreModel {
            Vec x_star;
            const NoiseSchedule* s;
            Vec epsilon(const Vec& x, double t, const Condition&,
                        const ViewTransform&) const override {
                double ab = s->alpha_bar(t);
                return (x - std::sqrt(ab) * x_star) / std::sqrt(1.0 - ab);
            }
            int dimension() const override {
                return static_cast<int>(x_star.size());
            }
        } planted;
        planted.s = &sched;
        planted.x_star = Vec(2);
        planted.x_star << 1.25, -0.5;
        Vec x_rndr(2);
        x_rndr << 0.7, 0.9;
        PredictedTarget pred =
            predict_x0(x_rndr, 0.37, Condition::none(),
                       ViewTransform::identity(), planted, sched);
        // the planted eps inverts to (x_rndr - sqrt(1-ab) eps)/sqrt(ab)
        double ab = sched.alpha_bar(0.37);
        Vec expect = (x_rndr - std::sqrt(1.0 - ab) *
                                   planted.epsilon(x_rndr, 0.37,
                                                   Condition::none(),
                                                   ViewTransform::identity())) /
                     std::sqrt(ab);
        out.push_back(check("distill.predict_x0_inversion",
                            (pred.x0_pred - expect).cwiseAbs().maxCoeff(),
                            1e-12));
    }

    // Eq.1 / Eq.4 zero-residual fixed points give bitwise-zero gradients
    {
        DirectFieldGenerator gen(1, 2, 1);
        Vec theta(2);
        theta << 0.4, -0.3;
        DistillConfig cfg = DistillConfig::defaults();
        cfg.rng_seed = opts.seed;
        // SDS with eps_pred == eps: stub echoes the injected noise
        struct EchoModel : ScoreModel {
            const DistillConfig* cfg;
            Vec epsilon(const Vec&, double, const Condition&,
                        const ViewTransform&) const override {
                auto eng = make_engine(cfg->rng_seed, stream::distill_noise, 0);
                Vec e(2);
                e << standard_normal(eng), standard_normal(eng);
                return e;
            }
            int dimension() const override { return 2; }
        } echo;
        echo.cfg = &cfg;
        NoiseSchedule& sched = lin;
        Vec g1 = sds_grad(gen, theta, ViewTransform::identity(),
                          Condition::none(), echo, sched, cfg, 0);
        out.push_back(check("distill.sds_fixed_point",
                            g1.cwiseAbs().maxCoeff() == 0.0 ? 0.0 : 1.0, 0.0));
        // TraCe with eps_phi == (x_t - x_rndr)/sigma_t
        struct ResidualModel : ScoreModel {
            Vec x_rndr;
            const NoiseSchedule* s;
            Vec epsilon(const Vec& x, double t, const Condition&,
                        const ViewTransform&) const override {
                auto [s2, sb2] = s->accumulated_variances(t);
                (void)sb2;
                return (x - x_rndr) / std::sqrt(s2);
            }
            int dimension() const override { return 2; }
        } resid;
        resid.s = &sched;
        resid.x_rndr = gen.render(theta, ViewTransform::identity()).data;
        GmmFamily fam;
        {
            Vec m = Vec::Zero(2), cv = Vec::Ones(2);
            fam.add(GmmDistribution({{1.0, m, cv}}, 2));
        }
        AnalyticScoreModel prior(fam, sched);
        TraceGradResult r =
            trace_grad(gen, theta, ViewTransform::identity(), Condition::of(0),
                       prior, resid, sched, sched, cfg, 0);
        out.push_back(check("distill.trace_fixed_point",
                            r.grad_theta.cwiseAbs().maxCoeff() == 0.0 ? 0.0
                                                                      : 1.0,
                            0.0));
    }

    return out;
}

}  // namespace trace
