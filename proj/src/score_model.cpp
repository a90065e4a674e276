#include "trace/score_model.hpp"

#include <Eigen/QR>
#include <stdexcept>

namespace trace {

Vec AnalyticScoreModel::epsilon(const Vec& x, double t, const Condition& y,
                                const ViewTransform&) const {
    const GmmDistribution& gmm =
        y.id ? family_->member(*y.id) : family_->unconditional();
    return eps_from_score(gmm.noisy_score(*sched_, x, t), *sched_, t);
}

ProjectedScoreModel::ProjectedScoreModel(const GmmFamily& family,
                                         const NoiseSchedule& sched,
                                         Mat projection)
    : family_(&family), sched_(&sched), projection_(std::move(projection)) {
    if (projection_.cols() != family_->dimension())
        throw std::invalid_argument("projection width must match GMM dim");
    Mat gram = projection_.transpose() * projection_;
    if ((gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() >
        1e-9)
        throw std::invalid_argument("projection columns must be orthonormal");
}

Vec ProjectedScoreModel::epsilon(const Vec& x, double t, const Condition& y,
                                 const ViewTransform&) const {
    if (x.size() != projection_.rows())
        throw std::invalid_argument("dimension mismatch");
    const GmmDistribution& gmm =
        y.id ? family_->member(*y.id) : family_->unconditional();
    // Isotropic VP noise keeps the projected coordinates a VP diffusion of
    // the latent GMM; the complement is flat and contributes zero score.
    Vec z = projection_.transpose() * x;
    Vec score_z = gmm.noisy_score(*sched_, z, t);
    return eps_from_score(projection_ * score_z, *sched_, t);
}

Mat ProjectedScoreModel::random_projection(int ambient, int latent,
                                           std::uint64_t seed) {
    auto eng = make_engine(seed, stream::metric_proj, 0xbead);
    Mat g(ambient, latent);
    for (int i = 0; i < ambient; ++i)
        for (int j = 0; j < latent; ++j) g(i, j) = standard_normal(eng);
    Eigen::HouseholderQR<Mat> qr(g);
    Mat q = qr.householderQ() * Mat::Identity(ambient, latent);
    return q;
}

Vec GuidedScoreModel::epsilon(const Vec& x, double t, const Condition& y,
                              const ViewTransform& c) const {
    Vec eps_c = base_->epsilon(x, t, y, c);
    if (!y.id || w_ == 1.0) return eps_c;
    Vec eps_u = base_->epsilon(x, t, Condition::none(), c);
    return cfg_combine(eps_c, eps_u, w_);
}

}  // namespace trace
