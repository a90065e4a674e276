#include "trace/nn.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace trace {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double activate(Mlp::Activation act, double z) {
    return act == Mlp::Activation::tanh ? std::tanh(z) : z * sigmoid(z);
}

double activate_prime(Mlp::Activation act, double z) {
    if (act == Mlp::Activation::tanh) {
        double a = std::tanh(z);
        return 1.0 - a * a;
    }
    double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

Mat effective_weight(const Mlp& model, const AdapterParams* adapter,
                     std::size_t layer) {
    if (!adapter || adapter->scale == 0.0) return model.weights[layer];
    return model.weights[layer] +
           adapter->scale * adapter->A[layer] * adapter->B[layer];
}

struct ForwardCache {
    std::vector<Vec> activations;      // a_0 .. a_L (a_0 = input)
    std::vector<Vec> preactivations;   // z_0 .. z_{L-1}
};

Vec forward_cached(const Mlp& model, const AdapterParams* adapter,
                   const Vec& input, ForwardCache* cache) {
    const std::size_t n_layers = model.weights.size();
    Vec a = input;
    if (cache) cache->activations.push_back(a);
    for (std::size_t l = 0; l < n_layers; ++l) {
        Vec z = effective_weight(model, adapter, l) * a + model.biases[l];
        if (cache) cache->preactivations.push_back(z);
        if (l + 1 < n_layers) {
            a.resize(z.size());
            for (Eigen::Index i = 0; i < z.size(); ++i)
                a[i] = activate(model.act, z[i]);
        } else {
            a = z;
        }
        if (cache) cache->activations.push_back(a);
    }
    return a;
}

void adam_update_mat(Mat& param, const Mat& grad, Mat& m, Mat& v,
                     const AdamState& s) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v.array().matrix() +
        (1.0 - s.beta2) * grad.array().square().matrix();
    double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    param.array() -=
        s.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps);
}

void adam_update_vec(Vec& param, const Vec& grad, Vec& m, Vec& v,
                     const AdamState& s) {
    m = s.beta1 * m + (1.0 - s.beta1) * grad;
    v = s.beta2 * v.array().matrix() +
        (1.0 - s.beta2) * grad.array().square().matrix();
    double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    param.array() -=
        s.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + s.eps);
}

}  // namespace

Mlp Mlp::create(int x_dim, int n_cond, const std::vector<int>& hidden,
                Activation act, std::uint64_t seed) {
    Mlp m;
    m.x_dim = x_dim;
    m.n_cond = n_cond;
    m.act = act;
    m.widths.push_back(input_dim(x_dim, n_cond));
    for (int h : hidden) m.widths.push_back(h);
    m.widths.push_back(x_dim);
    for (std::size_t l = 0; l + 1 < m.widths.size(); ++l) {
        int n_out = m.widths[l + 1], n_in = m.widths[l];
        auto eng = make_engine(seed, stream::nn_init, l);
        double sd = std::sqrt(1.0 / n_in);
        Mat w(n_out, n_in);
        for (int i = 0; i < n_out; ++i)
            for (int j = 0; j < n_in; ++j) w(i, j) = sd * standard_normal(eng);
        m.weights.push_back(std::move(w));
        m.biases.push_back(Vec::Zero(n_out));
    }
    return m;
}

Vec Mlp::assemble_input(int x_dim, int n_cond, const Vec& x, double t,
                        const Condition& y, const ViewTransform& c) {
    if (x.size() != x_dim) throw std::invalid_argument("input dim mismatch");
    Vec in(input_dim(x_dim, n_cond));
    in.head(x_dim) = x;
    for (int k = 0; k < kTimeFeatures / 2; ++k) {
        double f = std::pow(2.0, k) * M_PI * t;
        in[x_dim + 2 * k] = std::sin(f);
        in[x_dim + 2 * k + 1] = std::cos(f);
    }
    Vec onehot = Vec::Zero(n_cond);
    if (y.id) {
        if (*y.id < 0 || *y.id >= n_cond)
            throw std::out_of_range("condition id outside model range");
        onehot[*y.id] = 1.0;
    }
    in.segment(x_dim + kTimeFeatures, n_cond) = onehot;
    // view features relative to the identity transform
    Eigen::Matrix<double, 6, 1> vc = c.coefficients();
    vc(0) -= 1.0;
    vc(3) -= 1.0;
    in.tail(kViewFeatures) = vc;
    return in;
}

std::size_t Mlp::parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights.size(); ++l)
        n += weights[l].size() + biases[l].size();
    return n;
}

std::uint64_t Mlp::weight_hash() const {
    std::uint64_t h = 1469598103934665603ULL;  // FNV offset basis
    auto mix = [&h](double d) {
        std::uint64_t bits;
        std::memcpy(&bits, &d, sizeof(bits));
        for (int i = 0; i < 8; ++i) {
            h ^= (bits >> (8 * i)) & 0xff;
            h *= 1099511628211ULL;
        }
    };
    for (std::size_t l = 0; l < weights.size(); ++l) {
        for (Eigen::Index i = 0; i < weights[l].size(); ++i)
            mix(weights[l].data()[i]);
        for (Eigen::Index i = 0; i < biases[l].size(); ++i)
            mix(biases[l][i]);
    }
    return h;
}

AdapterParams AdapterParams::create(const Mlp& base, int rank, double scale,
                                    std::uint64_t seed) {
    // low-rank relative to the hidden widths; the tiny in/out dims of toy
    // problems do not cap the rank
    int min_hidden = base.widths[1];
    for (std::size_t l = 1; l + 1 < base.widths.size(); ++l)
        min_hidden = std::min(min_hidden, base.widths[l]);
    if (rank < 1 || rank >= min_hidden)
        throw std::invalid_argument(
            "adapter rank must satisfy 1 <= r < min hidden width");
    AdapterParams p;
    p.rank = rank;
    p.scale = scale;
    for (std::size_t l = 0; l < base.weights.size(); ++l) {
        int n_out = static_cast<int>(base.weights[l].rows());
        int n_in = static_cast<int>(base.weights[l].cols());
        p.A.push_back(Mat::Zero(n_out, rank));  // zero A: residual starts at 0
        auto eng = make_engine(seed, stream::nn_init, 0x1000 + l);
        Mat b(rank, n_in);
        double sd = 0.01;
        for (int i = 0; i < rank; ++i)
            for (int j = 0; j < n_in; ++j) b(i, j) = sd * standard_normal(eng);
        p.B.push_back(std::move(b));
    }
    return p;
}

Vec mlp_forward(const Mlp& model, const AdapterParams* adapter, const Vec& x,
                double t, const Condition& y, const ViewTransform& c) {
    Vec in = Mlp::assemble_input(model.x_dim, model.n_cond, x, t, y, c);
    return forward_cached(model, adapter, in, nullptr);
}

MlpGradient mlp_grad(const Mlp& model, const AdapterParams* adapter,
                     const MlpBatch& batch, TrainScope scope) {
    const std::size_t n = batch.x.size();
    if (n == 0) throw std::invalid_argument("empty batch");
    const std::size_t n_layers = model.weights.size();

    MlpGradient g;
    if (scope == TrainScope::base) {
        for (std::size_t l = 0; l < n_layers; ++l) {
            g.dW.push_back(Mat::Zero(model.weights[l].rows(),
                                     model.weights[l].cols()));
            g.db.push_back(Vec::Zero(model.biases[l].size()));
        }
    } else {
        if (!adapter) throw std::invalid_argument("adapter scope without adapter");
        for (std::size_t l = 0; l < n_layers; ++l) {
            g.dA.push_back(Mat::Zero(adapter->A[l].rows(), adapter->A[l].cols()));
            g.dB.push_back(Mat::Zero(adapter->B[l].rows(), adapter->B[l].cols()));
        }
    }

    for (std::size_t s = 0; s < n; ++s) {
        Vec in = Mlp::assemble_input(model.x_dim, model.n_cond, batch.x[s],
                                     batch.t[s], batch.y[s], batch.c[s]);
        ForwardCache cache;
        Vec out = forward_cached(model, adapter, in, &cache);
        Vec resid = out - batch.target[s];
        g.loss += resid.squaredNorm();

        Vec delta = (2.0 / static_cast<double>(n)) * resid;
        for (std::size_t l = n_layers; l-- > 0;) {
            const Vec& a_in = cache.activations[l];
            if (scope == TrainScope::base) {
                g.dW[l] += delta * a_in.transpose();
                g.db[l] += delta;
            } else {
                // dW_full = delta a^T; chain through W_eff = W + s A B
                Mat dW_full = delta * a_in.transpose();
                g.dA[l] += adapter->scale * dW_full * adapter->B[l].transpose();
                g.dB[l] += adapter->scale * adapter->A[l].transpose() * dW_full;
            }
            if (l > 0) {
                Vec back = effective_weight(model, adapter, l).transpose() * delta;
                const Vec& z = cache.preactivations[l - 1];
                delta.resize(z.size());
                for (Eigen::Index i = 0; i < z.size(); ++i)
                    delta[i] = back[i] * activate_prime(model.act, z[i]);
            }
        }
    }
    g.loss /= static_cast<double>(n);
    return g;
}

TrainReport train_dsm(Mlp& model, const DataSampler& sampler, int n_cond,
                      const NoiseSchedule& sched, const TrainHyper& hyper) {
    if (n_cond > model.n_cond)
        throw std::invalid_argument("more conditions than the model encodes");
    auto t_start = std::chrono::steady_clock::now();

    AdamState opt;
    opt.lr = hyper.lr;
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        opt.mW.push_back(Mat::Zero(model.weights[l].rows(), model.weights[l].cols()));
        opt.vW.push_back(Mat::Zero(model.weights[l].rows(), model.weights[l].cols()));
        opt.mb.push_back(Vec::Zero(model.biases[l].size()));
        opt.vb.push_back(Vec::Zero(model.biases[l].size()));
    }

    TrainReport report;
    report.losses.reserve(hyper.steps);
    double initial_loss = 0.0;
    int high_streak = 0;
    const ViewTransform view = ViewTransform::identity();

    for (std::int64_t step = 0; step < hyper.steps; ++step) {
        auto eng = make_engine(hyper.rng_seed, stream::nn_batch, step);
        MlpBatch batch;
        for (int i = 0; i < hyper.batch_size; ++i) {
            auto [x0, id] = sampler(eng);
            Condition y = uniform(eng, 0.0, 1.0) < hyper.cond_dropout
                              ? Condition::none()
                              : Condition::of(id);
            double t = uniform(eng, hyper.t_lo, hyper.t_hi);
            double ab = sched.alpha_bar(t);
            Vec eps(model.x_dim);
            for (int d = 0; d < model.x_dim; ++d) eps[d] = standard_normal(eng);
            Vec xt = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
            batch.x.push_back(std::move(xt));
            batch.t.push_back(t);
            batch.y.push_back(y);
            batch.c.push_back(view);
            batch.target.push_back(std::move(eps));
        }

        MlpGradient grad = mlp_grad(model, nullptr, batch, TrainScope::base);
        report.losses.push_back(grad.loss);
        if (step == 0) initial_loss = grad.loss;
        if (grad.loss > 10.0 * initial_loss) {
            if (++high_streak >= 100)
                throw std::runtime_error("DSM training diverged");
        } else {
            high_streak = 0;
        }

        opt.step++;
        for (std::size_t l = 0; l < model.weights.size(); ++l) {
            adam_update_mat(model.weights[l], grad.dW[l], opt.mW[l], opt.vW[l], opt);
            adam_update_vec(model.biases[l], grad.db[l], opt.mb[l], opt.vb[l], opt);
        }
    }

    report.wall_clock_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    return report;
}

TrainReport train_dsm(Mlp& model, const GmmFamily& family,
                      const NoiseSchedule& sched, const TrainHyper& hyper) {
    if (family.dimension() != model.x_dim)
        throw std::invalid_argument("model/data dimension mismatch");
    DataSampler sampler = [&family](std::mt19937_64& eng) {
        int id = static_cast<int>(eng() % family.size());
        return std::pair<Vec, int>{family.member(id).sample(eng), id};
    };
    return train_dsm(model, sampler, family.size(), sched, hyper);
}

double bridge_score_step(const Mlp& base, AdapterParams& adapter,
                         const BridgeTuple& tuple, AdamState& opt) {
    if (opt.mW.empty()) {
        for (std::size_t l = 0; l < adapter.A.size(); ++l) {
            opt.mW.push_back(Mat::Zero(adapter.A[l].rows(), adapter.A[l].cols()));
            opt.vW.push_back(Mat::Zero(adapter.A[l].rows(), adapter.A[l].cols()));
            opt.mW.push_back(Mat::Zero(adapter.B[l].rows(), adapter.B[l].cols()));
            opt.vW.push_back(Mat::Zero(adapter.B[l].rows(), adapter.B[l].cols()));
        }
    }

    MlpBatch batch;
    batch.x.push_back(tuple.x_t);
    batch.t.push_back(tuple.t);
    batch.y.push_back(tuple.y);
    batch.c.push_back(tuple.c);
    batch.target.push_back(tuple.z);

    MlpGradient grad = mlp_grad(base, &adapter, batch, TrainScope::adapter);
    opt.step++;
    for (std::size_t l = 0; l < adapter.A.size(); ++l) {
        adam_update_mat(adapter.A[l], grad.dA[l], opt.mW[2 * l], opt.vW[2 * l], opt);
        adam_update_mat(adapter.B[l], grad.dB[l], opt.mW[2 * l + 1],
                        opt.vW[2 * l + 1], opt);
    }
    return grad.loss;
}

void save_model(const Mlp& model, const AdapterParams* adapter,
                const std::string& manifest_path,
                const std::string& data_path) {
    nlohmann::json m;
    m["x_dim"] = model.x_dim;
    m["n_cond"] = model.n_cond;
    m["activation"] = model.act == Mlp::Activation::tanh ? "tanh" : "silu";
    m["widths"] = model.widths;
    m["adapter_rank"] = adapter ? adapter->rank : 0;
    m["adapter_scale"] = adapter ? adapter->scale : 0.0;
    std::ofstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open " + manifest_path);
    mf << m.dump(2) << "\n";

    std::ofstream df(data_path);
    if (!df) throw std::runtime_error("cannot open " + data_path);
    char buf[40];
    auto emit = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.17g", v);
        df << buf << "\n";
    };
    for (std::size_t l = 0; l < model.weights.size(); ++l) {
        for (Eigen::Index i = 0; i < model.weights[l].size(); ++i)
            emit(model.weights[l].data()[i]);
        for (Eigen::Index i = 0; i < model.biases[l].size(); ++i)
            emit(model.biases[l][i]);
    }
    if (adapter)
        for (std::size_t l = 0; l < adapter->A.size(); ++l) {
            for (Eigen::Index i = 0; i < adapter->A[l].size(); ++i)
                emit(adapter->A[l].data()[i]);
            for (Eigen::Index i = 0; i < adapter->B[l].size(); ++i)
                emit(adapter->B[l].data()[i]);
        }
}

Mlp load_model(const std::string& manifest_path, const std::string& data_path,
               AdapterParams* adapter_out) {
    std::ifstream mf(manifest_path);
    if (!mf) throw std::runtime_error("cannot open " + manifest_path);
    nlohmann::json m = nlohmann::json::parse(mf);

    Mlp model;
    model.x_dim = m.at("x_dim");
    model.n_cond = m.at("n_cond");
    model.act = m.at("activation") == "tanh" ? Mlp::Activation::tanh
                                             : Mlp::Activation::silu;
    model.widths = m.at("widths").get<std::vector<int>>();
    int rank = m.at("adapter_rank");

    std::ifstream df(data_path);
    if (!df) throw std::runtime_error("cannot open " + data_path);
    auto next = [&df, &data_path]() {
        double v;
        if (!(df >> v))
            throw std::runtime_error("truncated tensor dump: " + data_path);
        return v;
    };
    for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
        Mat w(model.widths[l + 1], model.widths[l]);
        for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = next();
        Vec b(model.widths[l + 1]);
        for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = next();
        model.weights.push_back(std::move(w));
        model.biases.push_back(std::move(b));
    }
    if (adapter_out) {
        if (rank == 0)
            throw std::runtime_error("snapshot carries no adapter");
        adapter_out->rank = rank;
        adapter_out->scale = m.at("adapter_scale");
        adapter_out->A.clear();
        adapter_out->B.clear();
        for (std::size_t l = 0; l + 1 < model.widths.size(); ++l) {
            Mat a(model.widths[l + 1], rank);
            for (Eigen::Index i = 0; i < a.size(); ++i) a.data()[i] = next();
            Mat b(rank, model.widths[l]);
            for (Eigen::Index i = 0; i < b.size(); ++i) b.data()[i] = next();
            adapter_out->A.push_back(std::move(a));
            adapter_out->B.push_back(std::move(b));
        }
    }
    return model;
}

}  // namespace trace
