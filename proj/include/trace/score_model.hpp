#pragma once

#include <memory>

#include "trace/gmm.hpp"
#include "trace/view.hpp"

namespace trace {

// Unifying interface over analytic scores, the tiny MLP, and the
// adapter-augmented MLP. Implementations must be pure: identical inputs
// give bit-identical outputs.
class ScoreModel {
public:
    virtual ~ScoreModel() = default;
    virtual Vec epsilon(const Vec& x, double t, const Condition& y,
                        const ViewTransform& c) const = 0;
    virtual int dimension() const = 0;
};

// Exact noise predictor of a registered GMM family under a VP schedule.
// The view argument is accepted but ignored; the prior is view-agnostic.
class AnalyticScoreModel : public ScoreModel {
public:
    AnalyticScoreModel(const GmmFamily& family, const NoiseSchedule& sched)
        : family_(&family), sched_(&sched) {}

    Vec epsilon(const Vec& x, double t, const Condition& y,
                const ViewTransform& c) const override;
    int dimension() const override { return family_->dimension(); }

private:
    const GmmFamily* family_;
    const NoiseSchedule* sched_;
};

// Prior on a low-dimensional orthonormal projection of pixel space.
// The projected coordinates carry the GMM; the orthogonal complement is
// flat, so the score lifts back through the projection transpose.
class ProjectedScoreModel : public ScoreModel {
public:
    ProjectedScoreModel(const GmmFamily& family, const NoiseSchedule& sched,
                        Mat projection);  // (ambient x latent), orthonormal cols

    Vec epsilon(const Vec& x, double t, const Condition& y,
                const ViewTransform& c) const override;
    int dimension() const override {
        return static_cast<int>(projection_.rows());
    }
    const Mat& projection() const { return projection_; }

    // deterministic orthonormal basis from a seeded Gaussian matrix
    static Mat random_projection(int ambient, int latent, std::uint64_t seed);

private:
    const GmmFamily* family_;
    const NoiseSchedule* sched_;
    Mat projection_;
};

// Applies classifier-free guidance on top of another model: combines the
// conditional and unconditional predictions with weight w.
class GuidedScoreModel : public ScoreModel {
public:
    GuidedScoreModel(const ScoreModel& base, double w)
        : base_(&base), w_(w) {}

    Vec epsilon(const Vec& x, double t, const Condition& y,
                const ViewTransform& c) const override;
    int dimension() const override { return base_->dimension(); }

private:
    const ScoreModel* base_;
    double w_;
};

}  // namespace trace
