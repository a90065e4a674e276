// Command-line entry points tying the library into reproducible runs:
//   verify          invariant suite, machine-readable report
//   train-score     DSM-train the tiny MLP, write a snapshot
//   distill         full SDS/TraCe optimization run
//   sweep           cross product over (method, cfg weight, seed)
//   dump-gradients  SDS vs TraCe canvas-gradient fields side by side
//   plot            re-render plots from an existing sweep CSV
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "trace/config.hpp"
#include "trace/io.hpp"
#include "trace/verify.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

using namespace trace;

struct Experiment {
    RunConfig cfg;
    NoiseSchedule sched;
    NoiseSchedule bridge_sched;
    GmmFamily family;
    std::unique_ptr<Generator> gen;
    Mat projection;  // empty when the prior lives directly on canvas space
    std::unique_ptr<ScoreModel> prior;
    Mat metric_reference;

    explicit Experiment(const RunConfig& c)
        : cfg(c),
          sched(c.make_schedule()),
          bridge_sched(c.make_bridge_schedule()),
          family(c.make_family()),
          gen(c.make_generator()) {
        if (cfg.projection_latent_dim > 0) {
            projection = ProjectedScoreModel::random_projection(
                cfg.canvas_dim(), cfg.projection_latent_dim, cfg.seed);
            prior = std::make_unique<ProjectedScoreModel>(family, sched,
                                                          projection);
        } else {
            prior = std::make_unique<AnalyticScoreModel>(family, sched);
        }
        const GmmDistribution& target =
            family.member(cfg.distill.condition_id);
        Mat latent = target.sample_n(cfg.seed ^ 0xfeed, cfg.metric_samples);
        metric_reference = cfg.projection_latent_dim > 0
                               ? Mat(latent * projection.transpose())
                               : latent;
    }

    // Clean-data sampler for DSM pretraining, lifted through the
    // projection when one is configured.
    DataSampler data_sampler() const {
        const GmmFamily* fam = &family;
        if (cfg.projection_latent_dim > 0) {
            Mat proj = projection;
            return [fam, proj](std::mt19937_64& eng) {
                int id = static_cast<int>(eng() % fam->size());
                return std::pair<Vec, int>{proj * fam->member(id).sample(eng),
                                           id};
            };
        }
        return [fam](std::mt19937_64& eng) {
            int id = static_cast<int>(eng() % fam->size());
            return std::pair<Vec, int>{fam->member(id).sample(eng), id};
        };
    }

    Mlp pretrain_base() const {
        Mlp base = Mlp::create(cfg.canvas_dim(), family.size(),
                               cfg.model.hidden, cfg.model.activation,
                               cfg.seed);
        if (cfg.dsm_pretrain_steps > 0) {
            TrainHyper h = cfg.train;
            h.steps = cfg.dsm_pretrain_steps;
            train_dsm(base, data_sampler(), family.size(), sched, h);
        }
        return base;
    }
};

void write_final_renders(const Experiment& exp, const Vec& theta,
                         const std::string& out_dir) {
    for (int v = 0; v < 8; ++v) {
        ViewTransform view = sample_view(exp.cfg.distill.view_ranges,
                                         exp.cfg.seed ^ 0xf1a1, v);
        Canvas canvas = exp.gen->render(theta, view);
        write_pgm(canvas, out_dir + "/render_view" + std::to_string(v) +
                              ".pgm");
    }
    Mat theta_row(1, theta.size());
    theta_row.row(0) = theta.transpose();
    write_csv(theta_row, out_dir + "/final_theta.csv");
}

RunRecord do_distill(const Experiment& exp, Method method,
                     const std::string& out_dir) {
    ensure_dir(out_dir);
    Mlp base;
    AdapterParams adapter;
    const Mlp* base_ptr = nullptr;
    AdapterParams* adapter_ptr = nullptr;
    if (method == Method::trace) {
        base = exp.pretrain_base();
        adapter = AdapterParams::create(base, exp.cfg.model.adapter_rank,
                                        exp.cfg.model.adapter_scale,
                                        exp.cfg.seed);
        base_ptr = &base;
        adapter_ptr = &adapter;
    }

    Vec theta0 = exp.cfg.make_theta0(*exp.gen);
    CheckpointHook hook = [&](std::int64_t iter, const Vec& theta) {
        GradientFieldDump dump = dump_gradient_field(
            *exp.gen, theta, method, *exp.prior, base_ptr, adapter_ptr,
            exp.bridge_sched, exp.sched, exp.cfg.distill);
        std::string tag = "iter" + std::to_string(iter);
        write_signed_ppm(dump.signed_mean,
                         out_dir + "/grad_mean_" + tag + ".ppm");
        write_pgm(dump.magnitude, out_dir + "/grad_mag_" + tag + ".pgm");
    };

    RunRecord record = run_distillation(
        exp.cfg.distill, *exp.gen, theta0, *exp.prior, base_ptr, adapter_ptr,
        method, exp.bridge_sched, exp.sched, exp.metric_reference, hook);
    record.config_digest = exp.cfg.digest();

    write_run_record(record, out_dir + "/record.jsonl");
    write_final_renders(exp, record.final_theta, out_dir);
    if (method == Method::trace)
        save_model(base, &adapter, out_dir + "/model_manifest.json",
                   out_dir + "/model_weights.tsv");
    return record;
}

int cmd_verify(const std::string& out_dir, std::uint64_t seed, bool quick) {
    auto results = run_verification({.seed = seed,
                                     .gamma_perturbation = 0.0,
                                     .quick = quick});
    nlohmann::json report = nlohmann::json::array();
    bool all_pass = true;
    for (const auto& r : results) {
        std::printf("%-34s value=%.6e tol=%.6e %s\n", r.name.c_str(), r.value,
                    r.tolerance, r.pass ? "PASS" : "FAIL");
        report.push_back({{"check", r.name},
                          {"value", r.value},
                          {"tolerance", r.tolerance},
                          {"pass", r.pass}});
        all_pass = all_pass && r.pass;
    }
    if (!out_dir.empty()) {
        ensure_dir(out_dir);
        std::ofstream out(out_dir + "/verify_report.json");
        out << report.dump(2) << "\n";
    }
    std::printf("%zu checks, %s\n", results.size(),
                all_pass ? "all passed" : "FAILURES present");
    return all_pass ? 0 : 1;
}

int cmd_train_score(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    Experiment exp(cfg);
    Mlp model = Mlp::create(cfg.canvas_dim(), exp.family.size(),
                            cfg.model.hidden, cfg.model.activation, cfg.seed);
    TrainReport report = train_dsm(model, exp.data_sampler(),
                                   exp.family.size(), exp.sched, cfg.train);
    save_model(model, nullptr, out_dir + "/model_manifest.json",
               out_dir + "/model_weights.tsv");
    Mat losses(report.losses.size(), 1);
    for (std::size_t i = 0; i < report.losses.size(); ++i)
        losses(i, 0) = report.losses[i];
    write_csv(losses, out_dir + "/dsm_losses.csv", {"loss"});
    std::printf("trained %lld steps, final loss %.6f (%.1f s)\n",
                static_cast<long long>(cfg.train.steps),
                report.losses.empty() ? 0.0 : report.losses.back(),
                report.wall_clock_seconds);
    return 0;
}

int cmd_distill(const RunConfig& cfg, Method method,
                const std::string& out_dir) {
    Experiment exp(cfg);
    RunRecord record = do_distill(exp, method, out_dir);
    if (record.aborted) {
        std::fprintf(stderr, "run aborted: %s (partial record kept)\n",
                     record.abort_reason.c_str());
        return 2;
    }
    std::printf("final sliced-W1 %.6f  mmd %.6f\n", record.final_sliced_w1,
                record.final_mmd);
    return 0;
}

struct SweepRow {
    std::string method;
    double cfg_weight;
    std::uint64_t seed;
    std::string status;
    double sliced_w1 = std::nan("");
    double mmd = std::nan("");
};

int cmd_sweep(const RunConfig& base_cfg, const std::vector<std::string>& methods,
              const std::vector<double>& cfg_weights,
              const std::vector<std::uint64_t>& seeds,
              const std::string& out_dir, int jobs) {
    ensure_dir(out_dir);
    struct Job {
        std::string method;
        double w;
        std::uint64_t seed;
    };
    std::vector<Job> jobs_list;
    for (const auto& m : methods)
        for (double w : cfg_weights)
            for (std::uint64_t s : seeds) jobs_list.push_back({m, w, s});
    std::vector<SweepRow> rows(jobs_list.size());

#ifdef _OPENMP
    omp_set_num_threads(std::max(1, jobs));
#else
    (void)jobs;
#endif
#pragma omp parallel for schedule(dynamic)
    for (std::size_t i = 0; i < jobs_list.size(); ++i) {
        const Job& job = jobs_list[i];
        SweepRow row;
        row.method = job.method;
        row.cfg_weight = job.w;
        row.seed = job.seed;
        try {
            RunConfig cfg = base_cfg;
            cfg.seed = job.seed;
            cfg.distill.cfg_weight = job.w;
            cfg.distill.rng_seed = job.seed;
            cfg.distill.t_sampler.rng_seed = job.seed;
            cfg.distill.t_prime_sampler.rng_seed = job.seed ^ 0x9e37;
            cfg.train.rng_seed = job.seed;
            Experiment exp(cfg);
            char tag[96];
            std::snprintf(tag, sizeof(tag), "%s/%s_cfg%g_seed%llu",
                          out_dir.c_str(), job.method.c_str(), job.w,
                          static_cast<unsigned long long>(job.seed));
            Method m = job.method == "sds" ? Method::sds : Method::trace;
            RunRecord rec = do_distill(exp, m, tag);
            row.status = rec.aborted ? "aborted" : "ok";
            row.sliced_w1 = rec.final_sliced_w1;
            row.mmd = rec.final_mmd;
        } catch (const std::exception& e) {
            row.status = std::string("error: ") + e.what();
        }
        rows[i] = row;
    }

    std::ofstream csv(out_dir + "/sweep.csv");
    csv << "method,cfg,seed,status,final_sliced_w1,final_mmd\n";
    for (const auto& r : rows)
        csv << r.method << "," << format_double(r.cfg_weight) << "," << r.seed
            << "," << r.status << "," << format_double(r.sliced_w1) << ","
            << format_double(r.mmd) << "\n";
    csv.close();

    // stability summary: mean and variance over seeds at each (method, cfg)
    std::ofstream summary(out_dir + "/stability.csv");
    summary << "method,cfg,mean_sliced_w1,var_sliced_w1,n\n";
    for (const auto& m : methods)
        for (double w : cfg_weights) {
            double sum = 0, sumsq = 0;
            int n = 0;
            for (const auto& r : rows)
                if (r.method == m && r.cfg_weight == w && r.status == "ok") {
                    sum += r.sliced_w1;
                    sumsq += r.sliced_w1 * r.sliced_w1;
                    ++n;
                }
            if (n == 0) continue;
            double mean = sum / n;
            double var = n > 1 ? (sumsq - n * mean * mean) / (n - 1) : 0.0;
            summary << m << "," << format_double(w) << ","
                    << format_double(mean) << "," << format_double(var) << ","
                    << n << "\n";
        }
    summary.close();

    // metric-vs-cfg line plot, one series per method
    std::vector<double> xs(cfg_weights.begin(), cfg_weights.end());
    std::vector<std::vector<double>> ys;
    for (const auto& m : methods) {
        std::vector<double> series;
        for (double w : cfg_weights) {
            double sum = 0;
            int n = 0;
            for (const auto& r : rows)
                if (r.method == m && r.cfg_weight == w && r.status == "ok") {
                    sum += r.sliced_w1;
                    ++n;
                }
            series.push_back(n ? sum / n : std::nan(""));
        }
        ys.push_back(series);
    }
    write_line_plot(xs, ys, methods, out_dir + "/metric_vs_cfg.ppm");
    std::printf("sweep complete: %zu runs -> %s/sweep.csv\n", rows.size(),
                out_dir.c_str());
    return 0;
}

int cmd_dump_gradients(const RunConfig& cfg, const std::string& out_dir) {
    ensure_dir(out_dir);
    Experiment exp(cfg);
    Mlp base = exp.pretrain_base();
    AdapterParams adapter = AdapterParams::create(
        base, cfg.model.adapter_rank, cfg.model.adapter_scale, cfg.seed);
    Vec theta = cfg.make_theta0(*exp.gen);

    GradientFieldDump sds = dump_gradient_field(
        *exp.gen, theta, Method::sds, *exp.prior, nullptr, nullptr,
        exp.bridge_sched, exp.sched, cfg.distill);
    GradientFieldDump trc = dump_gradient_field(
        *exp.gen, theta, Method::trace, *exp.prior, &base, &adapter,
        exp.bridge_sched, exp.sched, cfg.distill);

    write_signed_ppm(sds.signed_mean, out_dir + "/sds_grad_mean.ppm");
    write_pgm(sds.magnitude, out_dir + "/sds_grad_mag.pgm");
    write_signed_ppm(trc.signed_mean, out_dir + "/trace_grad_mean.ppm");
    write_pgm(trc.magnitude, out_dir + "/trace_grad_mag.pgm");

    std::ofstream rep(out_dir + "/gradient_variance.txt");
    rep << "sds_draw_variance " << format_double(sds.draw_variance) << "\n"
        << "trace_draw_variance " << format_double(trc.draw_variance) << "\n";
    std::printf("draw variance: sds %.6e, trace %.6e\n", sds.draw_variance,
                trc.draw_variance);
    return 0;
}

int cmd_plot(const std::string& csv_path, const std::string& out_dir) {
    std::ifstream in(csv_path);
    if (!in) {
        std::fprintf(stderr, "cannot open %s\n", csv_path.c_str());
        return 1;
    }
    ensure_dir(out_dir);
    std::string line;
    std::getline(in, line);  // header
    std::vector<std::string> methods;
    std::vector<double> cfgs;
    std::map<std::pair<std::string, double>, std::pair<double, int>> agg;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string method, cfg_s, seed_s, status, w1_s, mmd_s;
        std::getline(ss, method, ',');
        std::getline(ss, cfg_s, ',');
        std::getline(ss, seed_s, ',');
        std::getline(ss, status, ',');
        std::getline(ss, w1_s, ',');
        std::getline(ss, mmd_s, ',');
        if (status != "ok") continue;
        double cfg = std::stod(cfg_s), w1 = std::stod(w1_s);
        auto& slot = agg[{method, cfg}];
        slot.first += w1;
        slot.second += 1;
        if (std::find(methods.begin(), methods.end(), method) == methods.end())
            methods.push_back(method);
        if (std::find(cfgs.begin(), cfgs.end(), cfg) == cfgs.end())
            cfgs.push_back(cfg);
    }
    std::sort(cfgs.begin(), cfgs.end());
    std::vector<std::vector<double>> ys;
    for (const auto& m : methods) {
        std::vector<double> series;
        for (double c : cfgs) {
            auto it = agg.find({m, c});
            series.push_back(it != agg.end() && it->second.second
                                 ? it->second.first / it->second.second
                                 : std::nan(""));
        }
        ys.push_back(series);
    }
    write_line_plot(cfgs, ys, methods, out_dir + "/metric_vs_cfg.ppm");
    std::printf("wrote %s/metric_vs_cfg.ppm\n", out_dir.c_str());
    return 0;
}

RunConfig load_config(const std::string& path, std::optional<std::uint64_t> seed) {
    RunConfig cfg = RunConfig::parse_file(path);
    if (seed) {
        cfg.seed = *seed;
        cfg.distill.rng_seed = *seed;
        cfg.distill.t_sampler.rng_seed = *seed;
        cfg.distill.t_prime_sampler.rng_seed = *seed ^ 0x9e37;
        cfg.train.rng_seed = *seed;
    }
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tractable Schrodinger-bridge score distillation lab"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "out", method_s = "trace",
                csv_path;
    std::optional<std::uint64_t> seed_override;
    int jobs = 1;
    bool quick = false;
    std::vector<std::string> methods = {"sds", "trace"};
    std::vector<double> cfg_weights = {5, 7.5, 10, 15, 20, 25, 50, 100};
    std::vector<std::uint64_t> seeds = {0, 1, 2};

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* opt = sub->add_option("--config", config_path, "config file");
        if (needs_config) opt->required();
        sub->add_option("--out", out_dir, "output directory");
        sub->add_option("--seed", seed_override, "seed override");
    };

    auto* verify = app.add_subcommand("verify", "run the invariant suite");
    add_common(verify, false);
    verify->add_flag("--quick", quick, "smaller Monte-Carlo budgets");

    auto* train = app.add_subcommand("train-score", "DSM-train the MLP");
    add_common(train, true);

    auto* distill = app.add_subcommand("distill", "run one distillation");
    add_common(distill, true);
    distill->add_option("--method", method_s, "sds | trace")
        ->check(CLI::IsMember({"sds", "trace"}));

    auto* sweep = app.add_subcommand("sweep", "method x cfg x seed sweep");
    add_common(sweep, true);
    sweep->add_option("--methods", methods, "methods to run");
    sweep->add_option("--cfg-weights", cfg_weights, "guidance weights");
    sweep->add_option("--seeds", seeds, "seeds");
    sweep->add_option("--jobs", jobs, "parallel workers");

    auto* dump = app.add_subcommand("dump-gradients", "gradient-field dump");
    add_common(dump, true);

    auto* plot = app.add_subcommand("plot", "plot from a sweep CSV");
    plot->add_option("--csv", csv_path, "sweep.csv path")->required();
    plot->add_option("--out", out_dir, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) {
            std::uint64_t seed = seed_override.value_or(
                config_path.empty() ? 0
                                    : RunConfig::parse_file(config_path).seed);
            return cmd_verify(out_dir, seed, quick);
        }
        if (train->parsed())
            return cmd_train_score(load_config(config_path, seed_override),
                                   out_dir);
        if (distill->parsed())
            return cmd_distill(load_config(config_path, seed_override),
                               method_s == "sds" ? Method::sds : Method::trace,
                               out_dir);
        if (sweep->parsed())
            return cmd_sweep(load_config(config_path, seed_override), methods,
                             cfg_weights, seeds, out_dir, jobs);
        if (dump->parsed())
            return cmd_dump_gradients(load_config(config_path, seed_override),
                                      out_dir);
        if (plot->parsed()) return cmd_plot(csv_path, out_dir);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
